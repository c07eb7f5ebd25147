#pragma once

// Centralized and distributed tabular learners for the rendezvous task.
//
// Both learners run K episodes from uniform non-goal starts, each capped at
// M steps. Reward at step t (1-based) is discounted by gamma^(t-1).

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "saic/comm.hpp"
#include "saic/gridworld.hpp"
#include "saic/qtable.hpp"

namespace saic {

struct EpisodeStats {
  double discounted_return = 0.0;
  int length = 0;
  friend bool operator==(const EpisodeStats&, const EpisodeStats&) = default;
};

struct RunRecord {
  std::vector<EpisodeStats> episodes;
  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

/// One environment transition as seen by a learner; handed to an optional
/// observer so callers can log or audit a run.
struct Transition {
  std::int64_t episode = 0;
  int t = 0;  // 1-based step within the episode
  JointState state;
  Move m1 = Move::Stop;
  Move m2 = Move::Stop;
  int c1 = 0;  // message sent by agent 1 (0 for centralized runs)
  int c2 = 0;
  double reward = 0.0;
  JointState next;
  bool terminal = false;
};

using TransitionObserver = std::function<void(const Transition&)>;

using Rng = std::mt19937_64;

/// Single learner over an encoded joint state, choosing one of 25 joint
/// moves by UCB. The centralized learner encodes (o1, o2); the hybrid
/// scheme encodes the pair of received messages.
template <class Encode>
RunRecord train_joint_learner(const GridSpec& spec, const TrainConfig& cfg, QTable& q,
                              CountTable& counts, Encode&& encode,
                              const TransitionObserver& observer = {}) {
  spec.validate();
  cfg.validate();
  Rng rng(cfg.seed);
  RunRecord record;
  record.episodes.reserve(static_cast<std::size_t>(cfg.episodes));
  for (std::int64_t k = 0; k < cfg.episodes; ++k) {
    JointState s = reset(rng, spec);
    EpisodeStats ep;
    double discount = 1.0;
    for (int t = 1; t <= cfg.horizon; ++t) {
      const std::size_t si = encode(s);
      const std::size_t a = ucb_select(q.row(si), counts.per_action.row(si), counts.per_state[si], cfg.ucb_c, rng);
      counts.increment(si, a);
      const Move m1 = first_move(static_cast<int>(a));
      const Move m2 = second_move(static_cast<int>(a));
      const StepResult r = step(s, m1, m2, spec);
      q_update(q, si, a, r.reward, r.terminal ? si : encode(r.next), r.terminal, cfg.alpha, cfg.gamma);
      ep.discounted_return += discount * r.reward;
      ep.length = t;
      if (observer) observer(Transition{k, t, s, m1, m2, 0, 0, r.reward, r.next, r.terminal});
      discount *= cfg.gamma;
      s = r.next;
      if (r.terminal) break;
    }
    record.episodes.push_back(ep);
  }
  return record;
}

struct CentralTraining {
  CentralQTable table;
  CountTable counts;
  RunRecord record;
};

inline CentralTraining train_centralized(const GridSpec& spec, const TrainConfig& cfg,
                                         const TransitionObserver& observer = {}) {
  CentralTraining out;
  out.table = CentralQTable(spec.size);
  out.counts = CountTable(out.table.q.states(), kNumJointMoves);
  out.record = train_joint_learner(
      spec, cfg, out.table.q, out.counts,
      [&](JointState s) { return static_cast<std::size_t>(spec.joint(s)); }, observer);
  return out;
}

struct AgentLearner {
  AgentQTable table;
  CountTable counts;
};

struct DistributedTraining {
  AgentLearner agent1;
  AgentLearner agent2;
  RunRecord record;
};

/// Two independent learners. Each step both agents broadcast their message
/// over the channel first; agent i then acts on (o_i, message from j).
/// comm1 encodes agent 1's observation for agent 2 and vice versa.
inline DistributedTraining train_distributed(const GridSpec& spec, const CommPolicy& comm1,
                                             const CommPolicy& comm2, const TrainConfig& cfg,
                                             UpdateRule rule,
                                             const TransitionObserver& observer = {}) {
  spec.validate();
  cfg.validate();
  if (comm1.observations() != static_cast<std::size_t>(spec.cells()) ||
      comm2.observations() != static_cast<std::size_t>(spec.cells()))
    throw std::invalid_argument("communication policy must cover every cell");
  const Channel to_agent2(comm1.rate());
  const Channel to_agent1(comm2.rate());

  DistributedTraining out;
  // Agent 1 listens to agent 2, so its table is sized by comm2's alphabet.
  out.agent1.table = AgentQTable(spec.size, comm2.messages());
  out.agent1.counts = CountTable(out.agent1.table.q.states(), kNumMoves);
  out.agent2.table = AgentQTable(spec.size, comm1.messages());
  out.agent2.counts = CountTable(out.agent2.table.q.states(), kNumMoves);
  auto& q1 = out.agent1.table;
  auto& q2 = out.agent2.table;
  auto& n1 = out.agent1.counts;
  auto& n2 = out.agent2.counts;

  Rng rng(cfg.seed);
  out.record.episodes.reserve(static_cast<std::size_t>(cfg.episodes));
  for (std::int64_t k = 0; k < cfg.episodes; ++k) {
    JointState s = reset(rng, spec);
    int c1 = to_agent2.transmit(comm1(s.o1));
    int c2 = to_agent1.transmit(comm2(s.o2));
    EpisodeStats ep;
    double discount = 1.0;
    for (int t = 1; t <= cfg.horizon; ++t) {
      const std::size_t s1 = q1.state(s.o1, c2);
      const std::size_t s2 = q2.state(s.o2, c1);
      const std::size_t a1 = ucb_select(q1.q.row(s1), n1.per_action.row(s1), n1.per_state[s1], cfg.ucb_c, rng);
      const std::size_t a2 = ucb_select(q2.q.row(s2), n2.per_action.row(s2), n2.per_state[s2], cfg.ucb_c, rng);
      n1.increment(s1, a1);
      n2.increment(s2, a2);
      const Move m1 = move_from_index(static_cast<int>(a1));
      const Move m2 = move_from_index(static_cast<int>(a2));
      const StepResult r = step(s, m1, m2, spec);
      int next_c1 = c1, next_c2 = c2;
      std::size_t next_s1 = s1, next_s2 = s2;
      if (!r.terminal) {
        next_c1 = to_agent2.transmit(comm1(r.next.o1));
        next_c2 = to_agent1.transmit(comm2(r.next.o2));
        next_s1 = q1.state(r.next.o1, next_c2);
        next_s2 = q2.state(r.next.o2, next_c1);
      }
      apply_update(rule, q1.q, s1, a1, r.reward, next_s1, r.terminal, cfg);
      apply_update(rule, q2.q, s2, a2, r.reward, next_s2, r.terminal, cfg);
      ep.discounted_return += discount * r.reward;
      ep.length = t;
      if (observer) observer(Transition{k, t, s, m1, m2, c1, c2, r.reward, r.next, r.terminal});
      discount *= cfg.gamma;
      s = r.next;
      c1 = next_c1;
      c2 = next_c2;
      if (r.terminal) break;
    }
    out.record.episodes.push_back(ep);
  }
  return out;
}

}  // namespace saic
