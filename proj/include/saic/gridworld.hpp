#pragma once

// Two-agent rendezvous grid world.
//
// Cells are numbered row-major starting at the bottom-left corner, so on a
// 4x4 grid cell 4 is the first cell of the second row and Up from 4 lands
// on 8. Moves that would leave the grid keep the agent where it is.

#include <array>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace saic {

using Observation = int;

enum class Move : int { Right = 0, Left = 1, Up = 2, Down = 3, Stop = 4 };

inline constexpr int kNumMoves = 5;
inline constexpr int kNumJointMoves = kNumMoves * kNumMoves;
inline constexpr std::array<Move, kNumMoves> kAllMoves = {Move::Right, Move::Left, Move::Up,
                                                          Move::Down, Move::Stop};

inline constexpr std::string_view to_string(Move m) {
  switch (m) {
    case Move::Right: return "Right";
    case Move::Left: return "Left";
    case Move::Up: return "Up";
    case Move::Down: return "Down";
    case Move::Stop: return "Stop";
  }
  return "?";
}

inline constexpr Move move_from_index(int i) { return static_cast<Move>(i); }
inline constexpr int index_of(Move m) { return static_cast<int>(m); }

/// Joint move index used by every joint-action table: m1 * 5 + m2.
inline constexpr int joint_index(Move m1, Move m2) { return index_of(m1) * kNumMoves + index_of(m2); }
inline constexpr Move first_move(int joint) { return move_from_index(joint / kNumMoves); }
inline constexpr Move second_move(int joint) { return move_from_index(joint % kNumMoves); }

struct JointState {
  Observation o1 = 0;
  Observation o2 = 0;
  friend bool operator==(const JointState&, const JointState&) = default;
};

struct GridSpec {
  int size = 8;           // N, cells per side
  Observation goal = 22;  // terminal cell
  double reward_small = 1.0;
  double reward_large = 10.0;

  int cells() const { return size * size; }
  bool valid(Observation o) const { return o >= 0 && o < cells(); }

  void validate() const {
    if (size < 2) throw std::invalid_argument("grid_size must be >= 2");
    if (!valid(goal)) throw std::invalid_argument("goal_cell outside the grid");
    if (!(reward_small > 0.0 && reward_small < reward_large))
      throw std::invalid_argument("rewards must satisfy 0 < reward_small < reward_large");
  }

  int row(Observation o) const { return o / size; }
  int col(Observation o) const { return o % size; }
  Observation cell(int row, int col) const { return row * size + col; }

  /// Flat index of a joint state in [0, cells()^2).
  int joint(JointState s) const { return s.o1 * cells() + s.o2; }
  JointState unjoint(int idx) const { return {idx / cells(), idx % cells()}; }

  bool terminal(JointState s) const { return s.o1 == goal || s.o2 == goal; }

  int distance(Observation a, Observation b) const {
    int dr = row(a) - row(b);
    int dc = col(a) - col(b);
    return (dr < 0 ? -dr : dr) + (dc < 0 ? -dc : dc);
  }
  int distance_to_goal(Observation o) const { return distance(o, goal); }
};

inline Observation transition(Observation o, Move m, const GridSpec& spec) {
  const int n = spec.size;
  const int r = o / n;
  const int c = o % n;
  switch (m) {
    case Move::Right: return c + 1 < n ? o + 1 : o;
    case Move::Left: return c > 0 ? o - 1 : o;
    case Move::Up: return r + 1 < n ? o + n : o;
    case Move::Down: return r > 0 ? o - n : o;
    case Move::Stop: return o;
  }
  return o;
}

struct StepResult {
  JointState next;
  double reward = 0.0;
  bool terminal = false;
};

/// Team reward is decided on the post-move state: both on the goal pays the
/// large reward, exactly one pays the small one, and either ends the episode.
inline StepResult step(JointState s, Move m1, Move m2, const GridSpec& spec) {
  StepResult out;
  out.next = {transition(s.o1, m1, spec), transition(s.o2, m2, spec)};
  const bool a = out.next.o1 == spec.goal;
  const bool b = out.next.o2 == spec.goal;
  if (a && b) {
    out.reward = spec.reward_large;
  } else if (a || b) {
    out.reward = spec.reward_small;
  }
  out.terminal = a || b;
  return out;
}

/// Uniform draw over the non-goal cells.
template <class Rng>
Observation random_non_goal(Rng& rng, const GridSpec& spec) {
  std::uniform_int_distribution<int> pick(0, spec.cells() - 2);
  int o = pick(rng);
  return o >= spec.goal ? o + 1 : o;
}

template <class Rng>
JointState reset(Rng& rng, const GridSpec& spec) {
  JointState s;
  s.o1 = random_non_goal(rng, spec);
  s.o2 = random_non_goal(rng, spec);
  return s;
}

/// Every non-goal start pair, in joint-index order.
template <class Fn>
void for_each_start(const GridSpec& spec, Fn&& fn) {
  for (Observation a = 0; a < spec.cells(); ++a) {
    if (a == spec.goal) continue;
    for (Observation b = 0; b < spec.cells(); ++b) {
      if (b == spec.goal) continue;
      fn(JointState{a, b});
    }
  }
}

}  // namespace saic
