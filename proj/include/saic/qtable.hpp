#pragma once

// Dense tabular action-value storage, UCB1 action selection and the two
// one-step update rules (standard Q-learning and the optimistic max-update
// used by distributed learners on deterministic multi-agent MDPs).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <random>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "saic/gridworld.hpp"

namespace saic {

template <class T>
class DenseTable {
 public:
  DenseTable() = default;
  DenseTable(std::size_t states, std::size_t actions, T init = T{})
      : states_(states), actions_(actions), data_(states * actions, init) {}

  std::size_t states() const { return states_; }
  std::size_t actions() const { return actions_; }

  T& operator()(std::size_t s, std::size_t a) { return data_[s * actions_ + a]; }
  const T& operator()(std::size_t s, std::size_t a) const { return data_[s * actions_ + a]; }

  std::span<T> row(std::size_t s) { return {data_.data() + s * actions_, actions_}; }
  std::span<const T> row(std::size_t s) const { return {data_.data() + s * actions_, actions_}; }

  std::span<const T> values() const { return data_; }
  std::span<T> values() { return data_; }

  friend bool operator==(const DenseTable&, const DenseTable&) = default;

 private:
  std::size_t states_ = 0;
  std::size_t actions_ = 0;
  std::vector<T> data_;
};

using QTable = DenseTable<double>;

/// Visit counts paired with a Q-table, plus the per-state total used by UCB.
struct CountTable {
  DenseTable<std::uint64_t> per_action;
  std::vector<std::uint64_t> per_state;

  CountTable() = default;
  CountTable(std::size_t states, std::size_t actions)
      : per_action(states, actions, 0), per_state(states, 0) {}

  void increment(std::size_t s, std::size_t a) {
    ++per_action(s, a);
    ++per_state[s];
  }
  friend bool operator==(const CountTable&, const CountTable&) = default;
};

/// Q[o1][o2][m1][m2], stored as states = o1 * N^2 + o2, actions = m1 * 5 + m2.
struct CentralQTable {
  int grid_size = 0;
  QTable q;

  CentralQTable() = default;
  explicit CentralQTable(int n)
      : grid_size(n), q(static_cast<std::size_t>(n) * n * n * n, kNumJointMoves, 0.0) {}

  int cells() const { return grid_size * grid_size; }
  std::size_t state(Observation o1, Observation o2) const {
    return static_cast<std::size_t>(o1) * cells() + o2;
  }
  double& at(Observation o1, Observation o2, Move m1, Move m2) {
    return q(state(o1, o2), joint_index(m1, m2));
  }
  double at(Observation o1, Observation o2, Move m1, Move m2) const {
    return q(state(o1, o2), joint_index(m1, m2));
  }
  friend bool operator==(const CentralQTable&, const CentralQTable&) = default;
};

/// Q[o][message][m], stored as states = o * messages + message.
struct AgentQTable {
  int grid_size = 0;
  int messages = 1;
  QTable q;

  AgentQTable() = default;
  AgentQTable(int n, int num_messages)
      : grid_size(n),
        messages(num_messages),
        q(static_cast<std::size_t>(n) * n * num_messages, kNumMoves, 0.0) {}

  std::size_t state(Observation o, int message) const {
    return static_cast<std::size_t>(o) * messages + message;
  }
  friend bool operator==(const AgentQTable&, const AgentQTable&) = default;
};

struct TrainConfig {
  double gamma = 0.9;
  double alpha = 0.07;
  double ucb_c = 12.5;
  std::int64_t episodes = 200000;  // K
  int horizon = 100;               // M, per-episode step cap
  std::uint64_t seed = 1;

  void validate() const {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0,1)");
    if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
    if (!(ucb_c >= 0.0)) throw std::invalid_argument("ucb_c must be non-negative");
    if (episodes < 1) throw std::invalid_argument("episodes must be positive");
    if (horizon < 1) throw std::invalid_argument("horizon must be positive");
  }
};

enum class UpdateRule { Standard, Optimistic };

inline std::string to_string(UpdateRule r) {
  return r == UpdateRule::Standard ? "standard" : "optimistic";
}

inline UpdateRule parse_update_rule(const std::string& s) {
  if (s == "standard") return UpdateRule::Standard;
  if (s == "optimistic") return UpdateRule::Optimistic;
  throw std::invalid_argument("unknown update rule: " + s);
}

/// Lowest index among the maxima.
inline std::size_t argmax(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t a = 1; a < row.size(); ++a)
    if (row[a] > row[best]) best = a;
  return best;
}

inline double max_of(std::span<const double> row) {
  return row[argmax(row)];
}

/// UCB1: unvisited actions first (lowest index), otherwise
/// argmax q[a] + c * sqrt(ln(total) / n[a]) with lowest-index tie-break.
inline std::size_t ucb_select(std::span<const double> q, std::span<const std::uint64_t> n,
                              std::uint64_t total_visits, double ucb_c) {
  if (q.empty() || q.size() != n.size())
    throw std::invalid_argument("ucb_select: q and n must be non-empty and equal length");
  for (std::size_t a = 0; a < n.size(); ++a)
    if (n[a] == 0) return a;
  const double log_total = std::log(static_cast<double>(std::max<std::uint64_t>(total_visits, 1)));
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < q.size(); ++a) {
    const double score = q[a] + ucb_c * std::sqrt(log_total / static_cast<double>(n[a]));
    if (score > best_score) {
      best_score = score;
      best = a;
    }
  }
  return best;
}

/// UCB1 with ties (among unvisited actions, or among equal scores) broken
/// uniformly at random. Independent learners sharing a state need this:
/// with a fixed tie-break their count tables evolve in lockstep and only
/// ever try matching joint moves.
template <class Rng>
std::size_t ucb_select(std::span<const double> q, std::span<const std::uint64_t> n,
                       std::uint64_t total_visits, double ucb_c, Rng& rng) {
  if (q.empty() || q.size() != n.size())
    throw std::invalid_argument("ucb_select: q and n must be non-empty and equal length");
  constexpr std::size_t kMaxArms = 32;
  std::size_t ties[kMaxArms];
  std::size_t count = 0;
  for (std::size_t a = 0; a < n.size(); ++a)
    if (n[a] == 0 && count < kMaxArms) ties[count++] = a;
  if (count == 0) {
    const double log_total = std::log(static_cast<double>(std::max<std::uint64_t>(total_visits, 1)));
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < q.size(); ++a) {
      const double score = q[a] + ucb_c * std::sqrt(log_total / static_cast<double>(n[a]));
      if (score > best_score) {
        best_score = score;
        count = 0;
      }
      if (score == best_score && count < kMaxArms) ties[count++] = a;
    }
  }
  if (count == 1) return ties[0];
  std::uniform_int_distribution<std::size_t> pick(0, count - 1);
  return ties[pick(rng)];
}

inline double bootstrap_target(const QTable& table, std::size_t next_state, double reward,
                               bool terminal, double gamma) {
  if (terminal) return reward;
  return reward + gamma * max_of(table.row(next_state));
}

inline double q_update(QTable& table, std::size_t state, std::size_t action, double reward,
                       std::size_t next_state, bool terminal, double alpha, double gamma) {
  double& entry = table(state, action);
  entry += alpha * (bootstrap_target(table, next_state, reward, terminal, gamma) - entry);
  return entry;
}

inline double optimistic_q_update(QTable& table, std::size_t state, std::size_t action,
                                  double reward, std::size_t next_state, bool terminal,
                                  double gamma) {
  double& entry = table(state, action);
  entry = std::max(entry, bootstrap_target(table, next_state, reward, terminal, gamma));
  return entry;
}

inline double apply_update(UpdateRule rule, QTable& table, std::size_t state, std::size_t action,
                           double reward, std::size_t next_state, bool terminal,
                           const TrainConfig& cfg) {
  if (rule == UpdateRule::Optimistic)
    return optimistic_q_update(table, state, action, reward, next_state, terminal, cfg.gamma);
  return q_update(table, state, action, reward, next_state, terminal, cfg.alpha, cfg.gamma);
}

// ---------------------------------------------------------------------------
// Text dump
//
//   saic-qtable 1
//   kind central|agent
//   grid_size N
//   messages K          (agent tables only)
//   states S
//   actions A
//   gamma G
//   seed X
//   data
//   <S lines of A space-separated values, printed with 17 significant digits>

struct QTableHeader {
  std::string kind;
  int grid_size = 0;
  int messages = 1;
  double gamma = 0.0;
  std::uint64_t seed = 0;
};

namespace detail {

inline void write_qtable(std::ostream& os, const QTableHeader& h, const QTable& q) {
  os << "saic-qtable 1\n";
  os << "kind " << h.kind << "\n";
  os << "grid_size " << h.grid_size << "\n";
  if (h.kind == "agent") os << "messages " << h.messages << "\n";
  os << "states " << q.states() << "\n";
  os << "actions " << q.actions() << "\n";
  os.precision(17);
  os << "gamma " << h.gamma << "\n";
  os << "seed " << h.seed << "\n";
  os << "data\n";
  for (std::size_t s = 0; s < q.states(); ++s) {
    auto row = q.row(s);
    for (std::size_t a = 0; a < row.size(); ++a) os << (a ? " " : "") << row[a];
    os << "\n";
  }
}

inline QTable read_qtable(std::istream& is, QTableHeader& h) {
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != "saic-qtable" || version != 1)
    throw std::runtime_error("not a saic-qtable v1 dump");
  std::size_t states = 0, actions = 0;
  std::string key;
  while (is >> key && key != "data") {
    if (key == "kind") is >> h.kind;
    else if (key == "grid_size") is >> h.grid_size;
    else if (key == "messages") is >> h.messages;
    else if (key == "states") is >> states;
    else if (key == "actions") is >> actions;
    else if (key == "gamma") is >> h.gamma;
    else if (key == "seed") is >> h.seed;
    else throw std::runtime_error("unknown q-table header key: " + key);
  }
  if (key != "data" || states == 0 || actions == 0)
    throw std::runtime_error("q-table dump is missing its header or data section");
  QTable q(states, actions);
  for (auto& v : q.values())
    if (!(is >> v)) throw std::runtime_error("q-table dump truncated");
  return q;
}

}  // namespace detail

inline void save(std::ostream& os, const CentralQTable& t, double gamma, std::uint64_t seed) {
  detail::write_qtable(os, {"central", t.grid_size, 1, gamma, seed}, t.q);
}

inline void save(std::ostream& os, const AgentQTable& t, double gamma, std::uint64_t seed) {
  detail::write_qtable(os, {"agent", t.grid_size, t.messages, gamma, seed}, t.q);
}

inline CentralQTable load_central(std::istream& is, QTableHeader* header = nullptr) {
  QTableHeader h;
  QTable q = detail::read_qtable(is, h);
  if (h.kind != "central") throw std::runtime_error("expected a central q-table, got " + h.kind);
  CentralQTable t(h.grid_size);
  if (q.states() != t.q.states() || q.actions() != t.q.actions())
    throw std::runtime_error("central q-table dimensions do not match grid_size");
  t.q = std::move(q);
  if (header) *header = h;
  return t;
}

inline AgentQTable load_agent(std::istream& is, QTableHeader* header = nullptr) {
  QTableHeader h;
  QTable q = detail::read_qtable(is, h);
  if (h.kind != "agent") throw std::runtime_error("expected an agent q-table, got " + h.kind);
  AgentQTable t(h.grid_size, h.messages);
  if (q.states() != t.q.states() || q.actions() != t.q.actions())
    throw std::runtime_error("agent q-table dimensions do not match header");
  t.q = std::move(q);
  if (header) *header = h;
  return t;
}

}  // namespace saic
