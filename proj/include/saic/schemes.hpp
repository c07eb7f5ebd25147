#pragma once

// End-to-end pipelines for every scheme compared on the rendezvous task.
// Each returns a SchemeResult holding its training record, the exact
// expected return of its final greedy behaviour, and that return
// normalized by the optimal centralized controller.

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "saic/aggregation.hpp"
#include "saic/comm.hpp"
#include "saic/evaluation.hpp"
#include "saic/gridworld.hpp"
#include "saic/planning.hpp"
#include "saic/qtable.hpp"
#include "saic/training.hpp"

namespace saic {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct SchemeResult {
  std::string scheme;
  int rate = 0;
  std::uint64_t seed = 0;
  RunRecord record;        // empty for scripted schemes
  double mean = 0.0;       // expected return of the final greedy policy
  double std_error = 0.0;  // zero under exact enumeration
  double optimum = 0.0;    // centralized optimum for the same spec
  double normalized = 0.0;
  double epsilon = kNaN;  // cluster radius certificate, value-aggregating schemes only
  double bound = kNaN;    // 2 eps / (1 - gamma)^2
  std::optional<Partition> partition;
  std::optional<MarginalValues> values;
};

inline double normalize(double raw, double centralized_optimum) {
  if (!(centralized_optimum > 0.0)) throw std::invalid_argument("normalize: optimum must be positive");
  return raw / centralized_optimum;
}

/// Knobs shared by every scheme. `eval_episodes == 0` means exact
/// enumeration over all start pairs; otherwise sampled starts.
struct SchemeOptions {
  UpdateRule rule = UpdateRule::Optimistic;
  std::size_t eval_episodes = 0;
  enum class ObsDist { Reset, Occupancy } obs_dist = ObsDist::Reset;
  int hnc_wait = -1;  // negative: 2 (N - 1)
};

/// Per-spec constants computed once and shared by all schemes.
struct Context {
  GridSpec spec;
  TrainConfig cfg;
  OptimalSolution oracle;
  double optimum = 0.0;

  Context(const GridSpec& s, const TrainConfig& c) : spec(s), cfg(c) {
    spec.validate();
    cfg.validate();
    oracle = value_iteration(spec, cfg.gamma);
    optimum = centralized_optimum(spec, oracle, cfg.gamma, cfg.horizon);
  }
};

namespace detail {

inline Evaluation evaluate_policy(const Context& ctx, const JointPolicy& policy, const SchemeOptions& opt) {
  if (opt.eval_episodes == 0) return evaluate_exact(ctx.spec, policy, ctx.cfg.gamma, ctx.cfg.horizon);
  Rng rng(ctx.cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  return evaluate(policy, ctx.spec, opt.eval_episodes, ctx.cfg.gamma, ctx.cfg.horizon, rng);
}

inline SchemeResult finish(const Context& ctx, std::string name, int rate, RunRecord record, const Evaluation& ev) {
  SchemeResult r;
  r.scheme = std::move(name);
  r.rate = rate;
  r.seed = ctx.cfg.seed;
  r.record = std::move(record);
  r.mean = ev.mean;
  r.std_error = ev.std_error;
  r.optimum = ctx.optimum;
  r.normalized = normalize(ev.mean, ctx.optimum);
  return r;
}

inline void check_rate(int rate) {
  if (rate < 0 || rate > CommPolicy::kMaxRate) throw std::invalid_argument("rate must lie in [0, 16] bits");
}

}  // namespace detail

// --- centralized and no-communication references ----------------------------

inline SchemeResult run_centralized(const Context& ctx, const SchemeOptions& opt = {}) {
  auto c = train_centralized(ctx.spec, ctx.cfg);
  const auto ev = detail::evaluate_policy(ctx, greedy_policy(ctx.spec, c.table), opt);
  return detail::finish(ctx, "centralized", bits_for(ctx.spec.cells()), std::move(c.record), ev);
}

inline SchemeResult run_distributed_with(const Context& ctx, const CommPolicy& comm, std::string name,
                                         const SchemeOptions& opt) {
  auto d = train_distributed(ctx.spec, comm, comm, ctx.cfg, opt.rule);
  const auto ev = detail::evaluate_policy(ctx, greedy_policy(d.agent1.table, d.agent2.table, comm, comm), opt);
  return detail::finish(ctx, std::move(name), comm.rate(), std::move(d.record), ev);
}

inline SchemeResult run_nocomm(const Context& ctx, const SchemeOptions& opt = {}) {
  return run_distributed_with(ctx, CommPolicy::constant(ctx.spec), "nocomm", opt);
}

// --- SAIC ---------------------------------------------------------------------

struct SaicPlan {
  CentralTraining central;
  Distribution obs_dist;
  MarginalValues values;
  Partition partition;
  CommPolicy comm;
  double epsilon = 0.0;
};

/// Observation law of agent 2 over all centralized training steps.
inline Distribution occupancy_of(const GridSpec& spec, const TrainConfig& cfg, CentralTraining& out) {
  std::vector<double> counts(spec.cells(), 0.0);
  out = train_centralized(spec, cfg, [&](const Transition& tr) { counts[tr.state.o2] += 1.0; });
  double total = 0.0;
  for (double c : counts) total += c;
  for (double& c : counts) c /= total;
  return counts;
}

/// Phase (b) only, for callers that already hold a centralized table.
inline SaicPlan plan_saic_from(const Context&, SaicPlan plan, int rate) {
  plan.values = marginal_value(plan.central.table, plan.obs_dist);
  plan.partition = kmedian_1d(plan.values, 1 << rate);
  plan.comm = comm_policy_from_partition(plan.partition, rate);
  plan.epsilon = epsilon_of_partition(plan.values, plan.partition);
  return plan;
}

/// Phases (a) and (b): centralized training, marginal values, k-median.
inline SaicPlan plan_saic(const Context& ctx, int rate, const SchemeOptions& opt = {}) {
  detail::check_rate(rate);
  SaicPlan plan;
  if (opt.obs_dist == SchemeOptions::ObsDist::Occupancy) {
    plan.obs_dist = occupancy_of(ctx.spec, ctx.cfg, plan.central);
  } else {
    plan.central = train_centralized(ctx.spec, ctx.cfg);
    plan.obs_dist = reset_distribution(ctx.spec);
  }
  return plan_saic_from(ctx, std::move(plan), rate);
}

/// Phase (c): distributed training with the frozen aggregation map.
inline SchemeResult run_saic_from(const Context& ctx, const SaicPlan& plan, const SchemeOptions& opt = {}) {
  auto r = run_distributed_with(ctx, plan.comm, "saic", opt);
  r.epsilon = plan.epsilon;
  r.bound = return_gap_bound(plan.epsilon, ctx.cfg.gamma);
  r.partition = plan.partition;
  r.values = plan.values;
  return r;
}

inline SchemeResult run_saic(const Context& ctx, int rate, const SchemeOptions& opt = {}) {
  return run_saic_from(ctx, plan_saic(ctx, rate, opt), opt);
}

// --- CIC ----------------------------------------------------------------------

/// How often each cell is occupied by either agent along the greedy
/// rollouts from every start pair.
inline Distribution greedy_occupancy(const Context& ctx, const JointPolicy& policy) {
  std::vector<double> counts(ctx.spec.cells(), 0.0);
  for_each_start(ctx.spec, [&](JointState s) {
    for (int t = 1; t <= ctx.cfg.horizon; ++t) {
      counts[s.o1] += 1.0;
      counts[s.o2] += 1.0;
      const auto [m1, m2] = policy(s, t);
      const StepResult r = step(s, m1, m2, ctx.spec);
      s = r.next;
      if (r.terminal) break;
    }
  });
  double total = 0.0;
  for (double c : counts) total += c;
  for (double& c : counts) c /= total;
  return counts;
}

struct CicPlan {
  Distribution occupancy;
  LloydResult lloyd;
  CommPolicy comm;
};

/// Phase 1: identity-channel training, then the occupancy of its greedy
/// rollouts. Independent of the rate.
inline Distribution cic_occupancy(const Context& ctx, const SchemeOptions& opt = {}) {
  const auto id = CommPolicy::identity(ctx.spec);
  auto d = train_distributed(ctx.spec, id, id, ctx.cfg, opt.rule);
  return greedy_occupancy(ctx, greedy_policy(d.agent1.table, d.agent2.table, id, id));
}

/// Phase 2: Lloyd quantization of the occupancy into 2^R levels.
inline CicPlan plan_cic_from(const Context& ctx, Distribution occupancy, int rate) {
  detail::check_rate(rate);
  CicPlan plan;
  if (rate == 0) {
    plan.comm = CommPolicy::constant(ctx.spec);
    return plan;
  }
  plan.occupancy = std::move(occupancy);
  Rng rng(ctx.cfg.seed);
  plan.lloyd = lloyd_quantize(grid_points(ctx.spec, plan.occupancy), 1 << rate, rng);
  plan.comm = CommPolicy(plan.lloyd.partition.assignment, rate);
  return plan;
}

inline CicPlan plan_cic(const Context& ctx, int rate, const SchemeOptions& opt = {}) {
  detail::check_rate(rate);
  if (rate == 0) return plan_cic_from(ctx, {}, 0);
  return plan_cic_from(ctx, cic_occupancy(ctx, opt), rate);
}

inline SchemeResult run_cic_from(const Context& ctx, const CicPlan& plan, int rate, const SchemeOptions& opt = {}) {
  auto r = run_distributed_with(ctx, plan.comm, "cic", opt);
  r.rate = rate;
  if (rate > 0) r.partition = plan.lloyd.partition;
  return r;
}

inline SchemeResult run_cic(const Context& ctx, int rate, const SchemeOptions& opt = {}) {
  return run_cic_from(ctx, plan_cic(ctx, rate, opt), rate, opt);
}

// --- LBIC ---------------------------------------------------------------------

/// Per-agent learned messages: Q^c[o][c] picks the message, Q^m[o][c~][m]
/// picks the move; both use UCB and the distributed update rule on the
/// team reward.
struct LbicAgent {
  QTable qc;
  CountTable nc;
  AgentQTable qm;
  CountTable nm;
};

struct LbicTraining {
  LbicAgent agent1;
  LbicAgent agent2;
  RunRecord record;
};

inline LbicTraining train_lbic(const GridSpec& spec, const TrainConfig& cfg, int rate, UpdateRule rule) {
  spec.validate();
  cfg.validate();
  detail::check_rate(rate);
  const int msgs = 1 << rate;
  const Channel to_agent2(rate);
  const Channel to_agent1(rate);
  LbicTraining out;
  for (LbicAgent* a : {&out.agent1, &out.agent2}) {
    a->qc = QTable(spec.cells(), msgs, 0.0);
    a->nc = CountTable(spec.cells(), msgs);
    a->qm = AgentQTable(spec.size, msgs);
    a->nm = CountTable(a->qm.q.states(), kNumMoves);
  }
  auto& A = out.agent1;
  auto& B = out.agent2;
  Rng rng(cfg.seed);
  auto choose_msg = [&](LbicAgent& a, Observation o) {
    const std::size_t c = ucb_select(a.qc.row(o), a.nc.per_action.row(o), a.nc.per_state[o], cfg.ucb_c, rng);
    a.nc.increment(o, c);
    return static_cast<int>(c);
  };
  out.record.episodes.reserve(static_cast<std::size_t>(cfg.episodes));
  for (std::int64_t k = 0; k < cfg.episodes; ++k) {
    JointState s = reset(rng, spec);
    int c1 = to_agent2.transmit(choose_msg(A, s.o1));
    int c2 = to_agent1.transmit(choose_msg(B, s.o2));
    EpisodeStats ep;
    double discount = 1.0;
    for (int t = 1; t <= cfg.horizon; ++t) {
      const std::size_t s1 = A.qm.state(s.o1, c2);
      const std::size_t s2 = B.qm.state(s.o2, c1);
      const std::size_t a1 = ucb_select(A.qm.q.row(s1), A.nm.per_action.row(s1), A.nm.per_state[s1], cfg.ucb_c, rng);
      const std::size_t a2 = ucb_select(B.qm.q.row(s2), B.nm.per_action.row(s2), B.nm.per_state[s2], cfg.ucb_c, rng);
      A.nm.increment(s1, a1);
      B.nm.increment(s2, a2);
      const StepResult r = step(s, move_from_index(static_cast<int>(a1)), move_from_index(static_cast<int>(a2)), spec);
      int n1 = c1, n2 = c2;
      std::size_t ns1 = s1, ns2 = s2;
      if (!r.terminal) {
        n1 = to_agent2.transmit(choose_msg(A, r.next.o1));
        n2 = to_agent1.transmit(choose_msg(B, r.next.o2));
        ns1 = A.qm.state(r.next.o1, n2);
        ns2 = B.qm.state(r.next.o2, n1);
      }
      apply_update(rule, A.qm.q, s1, a1, r.reward, ns1, r.terminal, cfg);
      apply_update(rule, B.qm.q, s2, a2, r.reward, ns2, r.terminal, cfg);
      apply_update(rule, A.qc, s.o1, c1, r.reward, r.next.o1, r.terminal, cfg);
      apply_update(rule, B.qc, s.o2, c2, r.reward, r.next.o2, r.terminal, cfg);
      ep.discounted_return += discount * r.reward;
      ep.length = t;
      discount *= cfg.gamma;
      s = r.next;
      c1 = n1;
      c2 = n2;
      if (r.terminal) break;
    }
    out.record.episodes.push_back(ep);
  }
  return out;
}

/// Greedy message maps learned by LBIC.
inline std::pair<CommPolicy, CommPolicy> lbic_comm(const LbicTraining& t, int rate) {
  auto greedy_map = [&](const LbicAgent& a) {
    std::vector<int> table(a.qc.states());
    for (std::size_t o = 0; o < table.size(); ++o) table[o] = static_cast<int>(argmax(a.qc.row(o)));
    return CommPolicy(std::move(table), rate);
  };
  return {greedy_map(t.agent1), greedy_map(t.agent2)};
}

inline SchemeResult run_lbic(const Context& ctx, int rate, const SchemeOptions& opt = {}) {
  auto t = train_lbic(ctx.spec, ctx.cfg, rate, opt.rule);
  const auto [comm1, comm2] = lbic_comm(t, rate);
  const auto ev = detail::evaluate_policy(ctx, greedy_policy(t.agent1.qm, t.agent2.qm, comm1, comm2), opt);
  return detail::finish(ctx, "lbic", rate, std::move(t.record), ev);
}

// --- Hybrid -------------------------------------------------------------------

/// One joint learner that sees only the pair of SAIC messages.
inline SchemeResult run_hybrid_from(const Context& ctx, const CommPolicy& comm, const SchemeOptions& opt = {}) {
  const std::size_t msgs = static_cast<std::size_t>(comm.messages());
  QTable q(msgs * msgs, kNumJointMoves, 0.0);
  CountTable counts(q.states(), kNumJointMoves);
  auto encode = [&](JointState s) { return static_cast<std::size_t>(comm(s.o1)) * msgs + comm(s.o2); };
  auto record = train_joint_learner(ctx.spec, ctx.cfg, q, counts, encode);
  JointPolicy policy = [&](JointState s, int) {
    const int a = static_cast<int>(argmax(q.row(encode(s))));
    return JointAction{first_move(a), second_move(a)};
  };
  const auto ev = detail::evaluate_policy(ctx, policy, opt);
  return detail::finish(ctx, "hybrid", comm.rate(), std::move(record), ev);
}

inline SchemeResult run_hybrid(const Context& ctx, int rate, const SchemeOptions& opt = {}) {
  const auto plan = plan_saic(ctx, rate, opt);
  auto r = run_hybrid_from(ctx, plan.comm, opt);
  r.partition = plan.partition;
  return r;
}

// --- scripted heuristics ------------------------------------------------------

/// Goal neighbours in increasing cell index.
inline std::vector<Observation> goal_neighbours(const GridSpec& spec) {
  std::vector<Observation> out;
  for (Move m : kAllMoves) {
    if (m == Move::Stop) continue;
    const Observation o = transition(spec.goal, m, spec);
    if (o != spec.goal) out.push_back(o);
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// First move of a shortest path from every cell to `target` that never
/// steps on the goal; Stop at the target itself.
inline std::vector<Move> route_to(const GridSpec& spec, Observation target, std::vector<int>* length = nullptr) {
  std::vector<int> dist(spec.cells(), -1);
  std::vector<Move> first(spec.cells(), Move::Stop);
  std::deque<Observation> queue{target};
  dist[target] = 0;
  while (!queue.empty()) {
    const Observation o = queue.front();
    queue.pop_front();
    for (Move m : kAllMoves) {
      if (m == Move::Stop) continue;
      const Observation p = transition(o, m, spec);
      if (p == spec.goal || dist[p] >= 0) continue;
      dist[p] = dist[o] + 1;
      queue.push_back(p);
    }
  }
  for (Observation o = 0; o < spec.cells(); ++o) {
    if (o == target || o == spec.goal) continue;
    for (Move m : kAllMoves) {
      const Observation p = transition(o, m, spec);
      if (p != spec.goal && dist[p] == dist[o] - 1) {
        first[o] = m;
        break;
      }
    }
  }
  if (length) *length = dist;
  return first;
}

inline Move move_into_goal(const GridSpec& spec, Observation from) {
  for (Move m : kAllMoves)
    if (transition(from, m, spec) == spec.goal) return m;
  throw std::logic_error("cell is not adjacent to the goal");
}

/// Waiting cells, one route table per agent.
struct Rendezvous {
  Observation wait1 = 0, wait2 = 0;
  std::vector<Move> route1, route2;
  std::vector<int> len1, len2;

  explicit Rendezvous(const GridSpec& spec) {
    const auto nb = goal_neighbours(spec);
    if (nb.size() < 2) throw std::invalid_argument("goal needs two neighbours");
    wait1 = nb[0];
    wait2 = nb[1];
    route1 = route_to(spec, wait1, &len1);
    route2 = route_to(spec, wait2, &len2);
  }
};

/// No communication: each agent walks to its waiting cell and enters the
/// goal at step max(W, L_i) + 1, L_i being its path length from the start.
inline JointPolicy hnc_policy(const GridSpec& spec, int wait) {
  auto rv = std::make_shared<Rendezvous>(spec);
  return [spec, wait, rv](JointState s, int t) {
    auto act = [&](Observation o, Observation home, const std::vector<Move>& route) {
      if (o != home) return route[o];
      return t > wait ? move_into_goal(spec, home) : Move::Stop;
    };
    return JointAction{act(s.o1, rv->wait1, rv->route1), act(s.o2, rv->wait2, rv->route2)};
  };
}

/// One-bit "arrived" flag on each side; both enter on the first step at
/// which both flags are set.
inline std::pair<CommPolicy, CommPolicy> hoc_comm(const GridSpec& spec) {
  const Rendezvous rv(spec);
  std::vector<int> f1(spec.cells(), 0), f2(spec.cells(), 0);
  f1[rv.wait1] = 1;
  f2[rv.wait2] = 1;
  return {CommPolicy(std::move(f1), 1), CommPolicy(std::move(f2), 1)};
}

inline JointPolicy hoc_policy(const GridSpec& spec) {
  auto rv = std::make_shared<Rendezvous>(spec);
  auto comm = std::make_shared<std::pair<CommPolicy, CommPolicy>>(hoc_comm(spec));
  return [spec, rv, comm](JointState s, int) {
    const Channel ch(1);
    const int from1 = ch.transmit(comm->first(s.o1));
    const int from2 = ch.transmit(comm->second(s.o2));
    auto act = [&](Observation o, Observation home, const std::vector<Move>& route, int heard) {
      if (o != home) return route[o];
      return heard ? move_into_goal(spec, home) : Move::Stop;
    };
    return JointAction{act(s.o1, rv->wait1, rv->route1, from2), act(s.o2, rv->wait2, rv->route2, from1)};
  };
}

inline int default_wait(const GridSpec& spec) { return 2 * (spec.size - 1); }

inline SchemeResult run_hnc(const Context& ctx, const SchemeOptions& opt = {}) {
  const int wait = opt.hnc_wait < 0 ? default_wait(ctx.spec) : opt.hnc_wait;
  const auto ev = detail::evaluate_policy(ctx, hnc_policy(ctx.spec, wait), opt);
  return detail::finish(ctx, "hnc", 0, {}, ev);
}

inline SchemeResult run_hoc(const Context& ctx, const SchemeOptions& opt = {}) {
  const auto ev = detail::evaluate_policy(ctx, hoc_policy(ctx.spec), opt);
  return detail::finish(ctx, "hoc", 1, {}, ev);
}

// --- registry -----------------------------------------------------------------

using SchemeFn = std::function<SchemeResult(const Context&, int rate, const SchemeOptions&)>;

inline const std::map<std::string, SchemeFn>& scheme_registry() {
  static const std::map<std::string, SchemeFn> registry = {
      {"saic", [](const Context& c, int r, const SchemeOptions& o) { return run_saic(c, r, o); }},
      {"cic", [](const Context& c, int r, const SchemeOptions& o) { return run_cic(c, r, o); }},
      {"lbic", [](const Context& c, int r, const SchemeOptions& o) { return run_lbic(c, r, o); }},
      {"hybrid", [](const Context& c, int r, const SchemeOptions& o) { return run_hybrid(c, r, o); }},
      {"hnc", [](const Context& c, int, const SchemeOptions& o) { return run_hnc(c, o); }},
      {"hoc", [](const Context& c, int, const SchemeOptions& o) { return run_hoc(c, o); }},
      {"centralized", [](const Context& c, int, const SchemeOptions& o) { return run_centralized(c, o); }},
      {"nocomm", [](const Context& c, int, const SchemeOptions& o) { return run_nocomm(c, o); }},
  };
  return registry;
}

/// Schemes whose behaviour does not depend on the channel rate.
inline bool rate_independent(const std::string& scheme) {
  return scheme == "hnc" || scheme == "hoc" || scheme == "centralized" || scheme == "nocomm";
}

inline SchemeResult run_scheme(const std::string& name, const Context& ctx, int rate,
                               const SchemeOptions& opt = {}) {
  const auto& reg = scheme_registry();
  const auto it = reg.find(name);
  if (it == reg.end()) throw std::invalid_argument("unknown scheme: " + name);
  return it->second(ctx, rate, opt);
}

}  // namespace saic
