#pragma once

// Exact planning on the joint rendezvous MDP. Used as ground truth for the
// learners and as the normalization denominator for every scheme.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "saic/gridworld.hpp"
#include "saic/qtable.hpp"

namespace saic {

struct OptimalSolution {
  int grid_size = 0;
  std::vector<double> value;  // V*[o1 * N^2 + o2]
  std::vector<int> policy;    // joint move index, lowest-index tie-break
  int sweeps = 0;

  double v(Observation o1, Observation o2) const {
    return value[static_cast<std::size_t>(o1) * grid_size * grid_size + o2];
  }
  int action(Observation o1, Observation o2) const {
    return policy[static_cast<std::size_t>(o1) * grid_size * grid_size + o2];
  }
};

/// One-step lookahead Q*(s, a) for a given value vector.
inline double lookahead(const GridSpec& spec, const std::vector<double>& value, JointState s,
                        int joint, double gamma) {
  const StepResult r = step(s, first_move(joint), second_move(joint), spec);
  return r.terminal ? r.reward : r.reward + gamma * value[spec.joint(r.next)];
}

/// Jacobi value iteration until the sup-norm change drops below tol.
/// Terminal joint states (either agent on the goal) keep value 0.
inline OptimalSolution value_iteration(const GridSpec& spec, double gamma, double tol = 1e-12) {
  spec.validate();
  if (!(tol > 0.0)) throw std::invalid_argument("value_iteration: tol must be positive");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("value_iteration: gamma in [0,1)");
  const int states = spec.cells() * spec.cells();
  OptimalSolution sol;
  sol.grid_size = spec.size;
  sol.value.assign(states, 0.0);
  sol.policy.assign(states, joint_index(Move::Stop, Move::Stop));
  std::vector<double> next(states, 0.0);
  for (;;) {
    double delta = 0.0;
    for (int idx = 0; idx < states; ++idx) {
      const JointState s = spec.unjoint(idx);
      if (spec.terminal(s)) {
        next[idx] = 0.0;
        continue;
      }
      double best = -1.0;
      for (int a = 0; a < kNumJointMoves; ++a) best = std::max(best, lookahead(spec, sol.value, s, a, gamma));
      next[idx] = best;
      delta = std::max(delta, std::abs(best - sol.value[idx]));
    }
    sol.value.swap(next);
    ++sol.sweeps;
    if (delta < tol) break;
  }
  for (int idx = 0; idx < states; ++idx) {
    const JointState s = spec.unjoint(idx);
    if (spec.terminal(s)) continue;
    int best_a = 0;
    double best = lookahead(spec, sol.value, s, 0, gamma);
    for (int a = 1; a < kNumJointMoves; ++a) {
      const double q = lookahead(spec, sol.value, s, a, gamma);
      if (q > best) {
        best = q;
        best_a = a;
      }
    }
    sol.policy[idx] = best_a;
  }
  return sol;
}

/// Q*(s, a) for every joint state; terminal rows stay 0.
inline CentralQTable optimal_q_table(const GridSpec& spec, const OptimalSolution& sol, double gamma) {
  CentralQTable q(spec.size);
  for (int idx = 0; idx < spec.cells() * spec.cells(); ++idx) {
    const JointState s = spec.unjoint(idx);
    if (spec.terminal(s)) continue;
    for (int a = 0; a < kNumJointMoves; ++a) q.q(idx, a) = lookahead(spec, sol.value, s, a, gamma);
  }
  return q;
}

/// V[o1][o2] = max over the 25 joint moves of Q.
inline std::vector<double> greedy_value(const CentralQTable& table) {
  std::vector<double> v(table.q.states());
  for (std::size_t s = 0; s < v.size(); ++s) v[s] = max_of(table.q.row(s));
  return v;
}

}  // namespace saic
