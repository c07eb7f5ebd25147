#pragma once

// Exploration-free evaluation of joint behaviour. Policies may depend on the
// 1-based time step so that clock-driven heuristics fit the same interface.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "saic/comm.hpp"
#include "saic/gridworld.hpp"
#include "saic/planning.hpp"
#include "saic/qtable.hpp"
#include "saic/training.hpp"

namespace saic {

using JointAction = std::pair<Move, Move>;
using JointPolicy = std::function<JointAction(JointState, int t)>;

struct Evaluation {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t episodes = 0;
};

/// Discounted return of one greedy rollout from `start`.
inline double rollout_return(const GridSpec& spec, const JointPolicy& policy, JointState start,
                             double gamma, int horizon, int* length = nullptr) {
  JointState s = start;
  double ret = 0.0;
  double discount = 1.0;
  int t = 1;
  for (; t <= horizon; ++t) {
    const auto [m1, m2] = policy(s, t);
    const StepResult r = step(s, m1, m2, spec);
    ret += discount * r.reward;
    discount *= gamma;
    s = r.next;
    if (r.terminal) break;
  }
  if (length) *length = std::min(t, horizon);
  return ret;
}

/// Per-start returns over every non-goal start pair, in joint-index order.
inline std::vector<double> returns_by_start(const GridSpec& spec, const JointPolicy& policy,
                                            double gamma, int horizon) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(spec.cells() - 1) * (spec.cells() - 1));
  for_each_start(spec, [&](JointState s) { out.push_back(rollout_return(spec, policy, s, gamma, horizon)); });
  return out;
}

/// Exact expected return under uniform non-goal starts (deterministic
/// policies only); the standard error is zero by construction.
inline Evaluation evaluate_exact(const GridSpec& spec, const JointPolicy& policy, double gamma,
                                 int horizon) {
  const auto r = returns_by_start(spec, policy, gamma, horizon);
  double sum = 0.0;
  for (double x : r) sum += x;
  return {sum / static_cast<double>(r.size()), 0.0, r.size()};
}

/// Monte-Carlo estimate from uniformly drawn starts: sample mean and its
/// standard error.
template <class Rng>
Evaluation evaluate(const JointPolicy& policy, const GridSpec& spec, std::size_t episodes,
                    double gamma, int horizon, Rng& rng) {
  if (episodes < 1) throw std::invalid_argument("evaluate: episodes must be >= 1");
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < episodes; ++i) {
    const double g = rollout_return(spec, policy, reset(rng, spec), gamma, horizon);
    sum += g;
    sum_sq += g * g;
  }
  const double n = static_cast<double>(episodes);
  const double mean = sum / n;
  double se = 0.0;
  if (episodes > 1) {
    const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
    se = std::sqrt(var / n);
  }
  return {mean, se, episodes};
}

// --- greedy policies ---------------------------------------------------------

inline JointPolicy greedy_policy(const GridSpec& spec, const CentralQTable& table) {
  return [&spec, &table](JointState s, int) {
    const int a = static_cast<int>(argmax(table.q.row(static_cast<std::size_t>(spec.joint(s)))));
    return JointAction{first_move(a), second_move(a)};
  };
}

inline JointPolicy optimal_policy(const GridSpec& spec, const OptimalSolution& sol) {
  return [&spec, &sol](JointState s, int) {
    const int a = sol.policy[static_cast<std::size_t>(spec.joint(s))];
    return JointAction{first_move(a), second_move(a)};
  };
}

inline JointPolicy greedy_policy(const AgentQTable& agent1, const AgentQTable& agent2,
                                 const CommPolicy& comm1, const CommPolicy& comm2) {
  return [&](JointState s, int) {
    const auto a1 = argmax(agent1.q.row(agent1.state(s.o1, comm2(s.o2))));
    const auto a2 = argmax(agent2.q.row(agent2.state(s.o2, comm1(s.o1))));
    return JointAction{move_from_index(static_cast<int>(a1)), move_from_index(static_cast<int>(a2))};
  };
}

/// Expected return of the optimal centralized controller, evaluated under
/// the same horizon cap as every other scheme.
inline double centralized_optimum(const GridSpec& spec, const OptimalSolution& sol, double gamma,
                                  int horizon) {
  return evaluate_exact(spec, optimal_policy(spec, sol), gamma, horizon).mean;
}

}  // namespace saic
