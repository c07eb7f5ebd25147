#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "saic/evaluation.hpp"
#include "saic/planning.hpp"
#include "saic/qtable.hpp"
#include "saic/training.hpp"

using namespace saic;

namespace {

GridSpec grid(int n, int goal) {
  GridSpec g;
  g.size = n;
  g.goal = goal;
  return g;
}

TrainConfig config(std::int64_t episodes, std::uint64_t seed = 1) {
  TrainConfig c;
  c.episodes = episodes;
  c.seed = seed;
  return c;
}

// Finite-horizon optimum by plain recursion with memoization on (state, steps left).
double brute_value(const GridSpec& g, JointState s, int left, double gamma, std::map<std::pair<int, int>, double>& memo) {
  if (left == 0 || g.terminal(s)) return 0.0;
  const auto key = std::make_pair(g.joint(s), left);
  if (auto it = memo.find(key); it != memo.end()) return it->second;
  double best = 0.0;
  for (Move a : kAllMoves)
    for (Move b : kAllMoves) {
      const auto r = step(s, a, b, g);
      best = std::max(best, r.reward + (r.terminal ? 0.0 : gamma * brute_value(g, r.next, left - 1, gamma, memo)));
    }
  memo[key] = best;
  return best;
}

}  // namespace

// --- UCB -------------------------------------------------------------------------

TEST(Ucb, UnvisitedFirst) {
  const double q[] = {0, 0, 0, 0, 0};
  const std::uint64_t n[] = {1, 0, 1, 1, 1};
  EXPECT_EQ(ucb_select(q, n, 4, 12.5), 1u);
}

TEST(Ucb, ZeroConstantIsGreedy) {
  const double q[] = {5, 1};
  const std::uint64_t n[] = {100, 1};
  EXPECT_EQ(ucb_select(q, n, 101, 0.0), 0u);
}

TEST(Ucb, BonusFavoursLessVisited) {
  const double q[] = {1.0, 1.0};
  const std::uint64_t n[] = {1, 4};
  // 12.5 sqrt(ln 5 / 1) = 15.86 against 12.5 sqrt(ln 5 / 4) = 7.93.
  EXPECT_EQ(ucb_select(q, n, 5, 12.5), 0u);
}

TEST(Ucb, ExactTieGoesToLowestIndex) {
  const double q[] = {2.0, 2.0, 1.0};
  const std::uint64_t n[] = {3, 3, 3};
  EXPECT_EQ(ucb_select(q, n, 9, 1.0), 0u);
}

TEST(Ucb, RandomTieBreakCoversTiedArmsOnly) {
  std::mt19937_64 rng(3);
  const double q[] = {0, 0, 0, 0, 0};
  const std::uint64_t n[] = {1, 0, 1, 0, 1};
  std::map<std::size_t, int> hits;
  for (int i = 0; i < 2000; ++i) ++hits[ucb_select(q, n, 3, 12.5, rng)];
  EXPECT_EQ(hits.size(), 2u);
  EXPECT_GT(hits[1], 800);
  EXPECT_GT(hits[3], 800);
}

TEST(Ucb, RandomOverloadAgreesWhenUnique) {
  std::mt19937_64 rng(3);
  const double q[] = {1.0, 3.0, 2.0};
  const std::uint64_t n[] = {10, 2, 7};
  for (double c : {0.0, 0.5, 12.5}) EXPECT_EQ(ucb_select(q, n, 19, c, rng), ucb_select(q, n, 19, c));
}

TEST(Ucb, RejectsMismatchedRows) {
  const double q[] = {1.0, 2.0};
  const std::uint64_t n[] = {1};
  EXPECT_THROW(ucb_select(q, n, 1, 1.0), std::invalid_argument);
}

// --- updates ---------------------------------------------------------------------

TEST(QUpdate, TerminalReward) {
  QTable t(2, 1);
  q_update(t, 0, 0, 10.0, 1, true, 0.07, 0.9);
  EXPECT_NEAR(t(0, 0), 0.7, 1e-15);
}

TEST(QUpdate, FixedPoint) {
  QTable t(2, 1);
  q_update(t, 0, 0, 0.0, 1, false, 0.07, 0.9);
  EXPECT_EQ(t(0, 0), 0.0);
}

TEST(QUpdate, Bootstrap) {
  QTable t(2, 2);
  t(0, 0) = 1.0;
  t(1, 1) = 10.0;
  q_update(t, 0, 0, 1.0, 1, false, 0.07, 0.9);
  EXPECT_NEAR(t(0, 0), 1.63, 1e-12);
}

TEST(QUpdate, TerminalIgnoresNextRow) {
  QTable t(2, 1);
  t(1, 0) = 100.0;
  q_update(t, 0, 0, 1.0, 1, true, 1.0, 0.9);
  EXPECT_EQ(t(0, 0), 1.0);
}

TEST(OptimisticUpdate, KeepsLarger) {
  QTable t(2, 1);
  t(0, 0) = 5.0;
  optimistic_q_update(t, 0, 0, 4.0, 1, true, 0.9);
  EXPECT_EQ(t(0, 0), 5.0);
}

TEST(OptimisticUpdate, TakesTerminalReward) {
  QTable t(2, 1);
  optimistic_q_update(t, 0, 0, 10.0, 1, true, 0.9);
  EXPECT_EQ(t(0, 0), 10.0);
}

TEST(OptimisticUpdate, RepeatedNeverDecreases) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  QTable t(3, 2);
  double prev = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double v = optimistic_q_update(t, 0, 1, u(rng), 1 + (i % 2), i % 3 == 0, 0.9);
    ASSERT_GE(v, prev);
    prev = v;
    t(1, 0) = u(rng);
  }
}

// --- value iteration -------------------------------------------------------------

TEST(ValueIteration, OneStepAndTerminal) {
  const auto g = grid(3, 4);
  const auto sol = value_iteration(g, 0.9);
  EXPECT_DOUBLE_EQ(sol.v(1, 3), 10.0);
  EXPECT_DOUBLE_EQ(sol.v(5, 7), 10.0);
  for (Observation o = 0; o < g.cells(); ++o) {
    EXPECT_EQ(sol.v(4, o), 0.0);
    EXPECT_EQ(sol.v(o, 4), 0.0);
  }
}

TEST(ValueIteration, MatchesFiniteHorizonBruteForce) {
  const auto g = grid(3, 8);
  const double gamma = 0.9;
  const auto sol = value_iteration(g, gamma);
  std::map<std::pair<int, int>, double> memo;
  const double slack = std::pow(gamma, 20) * g.reward_large;
  for (int idx = 0; idx < g.cells() * g.cells(); ++idx) {
    const double b = brute_value(g, g.unjoint(idx), 20, gamma, memo);
    EXPECT_NEAR(sol.value[idx], b, slack) << "state " << idx;
  }
}

// Rendezvous beats a lone arrival whenever gamma^(d_max - d_min) > C1 / C2,
// so the optimum is C2 gamma^(max distance - 1).
TEST(ValueIteration, ClosedFormOnEightByEight) {
  const auto g = grid(8, 22);
  const auto sol = value_iteration(g, 0.9);
  for (int idx = 0; idx < g.cells() * g.cells(); ++idx) {
    const auto s = g.unjoint(idx);
    if (g.terminal(s)) continue;
    const int d = std::max(g.distance_to_goal(s.o1), g.distance_to_goal(s.o2));
    ASSERT_NEAR(sol.value[idx], 10.0 * std::pow(0.9, d - 1), 1e-9) << idx;
  }
}

TEST(ValueIteration, SpotValuesGoalTwentyOne) {
  const auto sol = value_iteration(grid(8, 21), 0.9);
  EXPECT_NEAR(sol.v(20, 22), 10.0, 1e-9);
  EXPECT_NEAR(sol.v(20, 7), 7.29, 1e-9);
}

TEST(ValueIteration, PolicyAchievesValue) {
  const auto g = grid(4, 15);
  const auto sol = value_iteration(g, 0.9);
  const auto policy = optimal_policy(g, sol);
  for_each_start(g, [&](JointState s) {
    EXPECT_NEAR(rollout_return(g, policy, s, 0.9, 100), sol.value[g.joint(s)], 1e-9);
  });
}

TEST(ValueIteration, RejectsBadArguments) {
  EXPECT_THROW(value_iteration(grid(3, 4), 0.9, 0.0), std::invalid_argument);
  EXPECT_THROW(value_iteration(grid(3, 4), 1.0), std::invalid_argument);
}

TEST(GreedyValue, ZeroAndSinglePositive) {
  CentralQTable t(3);
  for (double v : greedy_value(t)) EXPECT_EQ(v, 0.0);
  t.at(2, 5, Move::Up, Move::Left) = 3.0;
  const auto v = greedy_value(t);
  for (std::size_t s = 0; s < v.size(); ++s) EXPECT_EQ(v[s], s == t.state(2, 5) ? 3.0 : 0.0);
}

// --- training ----------------------------------------------------------------------

TEST(Centralized, ConvergesOnThreeByThree) {
  const auto g = grid(3, 8);
  const auto cfg = config(50000);
  const auto c = train_centralized(g, cfg);
  const auto sol = value_iteration(g, cfg.gamma);
  const auto v = greedy_value(c.table);
  const auto policy = greedy_policy(g, c.table);
  for_each_start(g, [&](JointState s) {
    EXPECT_NEAR(rollout_return(g, policy, s, cfg.gamma, cfg.horizon), sol.value[g.joint(s)], 1e-12);
    EXPECT_NEAR(v[g.joint(s)], sol.value[g.joint(s)], 0.01);
  });
}

TEST(Centralized, RecordedReturnMatchesTransitionLog) {
  const auto g = grid(4, 15);
  const auto cfg = config(2000, 5);
  std::vector<double> recomputed(cfg.episodes, 0.0);
  const auto c = train_centralized(g, cfg, [&](const Transition& tr) {
    recomputed[tr.episode] += std::pow(cfg.gamma, tr.t - 1) * tr.reward;
  });
  for (std::int64_t k = 0; k < cfg.episodes; ++k)
    ASSERT_NEAR(c.record.episodes[k].discounted_return, recomputed[k], 1e-12);
}

TEST(Centralized, EntriesStayBounded) {
  const auto g = grid(4, 15);
  const auto cfg = config(5000, 2);
  const auto c = train_centralized(g, cfg);
  const double hi = g.reward_large / (1.0 - cfg.gamma);
  for (double x : c.table.q.values()) {
    ASSERT_GE(x, 0.0);
    ASSERT_LE(x, hi);
  }
  for (Observation o = 0; o < g.cells(); ++o)
    for (double x : c.table.q.row(c.table.state(o, g.goal))) ASSERT_EQ(x, 0.0);
}

TEST(Centralized, SeedDeterminism) {
  const auto g = grid(4, 15);
  const auto a = train_centralized(g, config(3000, 9));
  const auto b = train_centralized(g, config(3000, 9));
  const auto c = train_centralized(g, config(3000, 10));
  EXPECT_EQ(a.table, b.table);
  EXPECT_EQ(a.counts, b.counts);
  EXPECT_EQ(a.record, b.record);
  EXPECT_FALSE(a.record == c.record);
}

// Independent greedy choices can still split between equally good joint
// moves, so the optimum is approached rather than guaranteed.
TEST(Distributed, IdentityCommunicationNearOptimum) {
  const auto g = grid(3, 8);
  const auto cfg = config(30000, 4);
  const auto id = CommPolicy::identity(g);
  const auto d = train_distributed(g, id, id, cfg, UpdateRule::Optimistic);
  const auto sol = value_iteration(g, cfg.gamma);
  const double opt = centralized_optimum(g, sol, cfg.gamma, cfg.horizon);
  const auto ev = evaluate_exact(g, greedy_policy(d.agent1.table, d.agent2.table, id, id), cfg.gamma, cfg.horizon);
  EXPECT_GE(ev.mean, 0.97 * opt);
  EXPECT_LE(ev.mean, opt + 1e-12);
}

TEST(Distributed, TableShapesFollowListenerAlphabet) {
  const auto g = grid(3, 8);
  const auto one_bit = CommPolicy(std::vector<int>(9, 1), 1);
  const auto d = train_distributed(g, one_bit, CommPolicy::identity(g), config(10), UpdateRule::Standard);
  EXPECT_EQ(d.agent1.table.messages, 16);
  EXPECT_EQ(d.agent2.table.messages, 2);
}

TEST(Distributed, OptimisticEntriesNeverDecrease) {
  // Same seed, longer run: the first K episodes replay exactly, so the
  // longer table must dominate the shorter one entry by entry.
  const auto g = grid(4, 15);
  const auto comm = CommPolicy(std::vector<int>(16, 0), 0);
  TrainConfig cfg = config(500, 3);
  auto prev = train_distributed(g, comm, comm, cfg, UpdateRule::Optimistic);
  for (std::int64_t k : {1000, 2000, 4000}) {
    cfg.episodes = k;
    auto next = train_distributed(g, comm, comm, cfg, UpdateRule::Optimistic);
    const auto a = prev.agent1.table.q.values();
    const auto b = next.agent1.table.q.values();
    for (std::size_t i = 0; i < a.size(); ++i) ASSERT_LE(a[i], b[i]);
    prev = std::move(next);
  }
}

TEST(Distributed, SeedDeterminism) {
  const auto g = grid(4, 15);
  const auto id = CommPolicy::identity(g);
  for (auto rule : {UpdateRule::Standard, UpdateRule::Optimistic}) {
    const auto a = train_distributed(g, id, id, config(2000, 8), rule);
    const auto b = train_distributed(g, id, id, config(2000, 8), rule);
    EXPECT_EQ(a.agent1.table, b.agent1.table);
    EXPECT_EQ(a.agent2.table, b.agent2.table);
    EXPECT_EQ(a.record, b.record);
  }
}

TEST(Distributed, RejectsPartialCommunicationPolicy) {
  const auto g = grid(3, 8);
  const CommPolicy short_map(std::vector<int>(4, 0), 0);
  EXPECT_THROW(train_distributed(g, short_map, short_map, config(1), UpdateRule::Standard), std::invalid_argument);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.gamma = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.alpha = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.episodes = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_EQ(parse_update_rule("standard"), UpdateRule::Standard);
  EXPECT_THROW(parse_update_rule("greedy"), std::invalid_argument);
}

// --- serialization ---------------------------------------------------------------

TEST(QTableDump, CentralRoundTrip) {
  const auto g = grid(3, 8);
  const auto c = train_centralized(g, config(500, 2));
  std::stringstream ss;
  save(ss, c.table, 0.9, 2);
  QTableHeader h;
  const auto back = load_central(ss, &h);
  EXPECT_EQ(back, c.table);
  EXPECT_EQ(h.seed, 2u);
  EXPECT_EQ(h.gamma, 0.9);
  EXPECT_EQ(h.grid_size, 3);
}

TEST(QTableDump, AgentRoundTrip) {
  AgentQTable t(3, 4);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& x : t.q.values()) x = u(rng) / 3.0;
  std::stringstream ss;
  save(ss, t, 0.5, 77);
  QTableHeader h;
  EXPECT_EQ(load_agent(ss, &h), t);
  EXPECT_EQ(h.messages, 4);
}

TEST(QTableDump, RejectsWrongKindAndTruncation) {
  CentralQTable t(2);
  std::stringstream ss;
  save(ss, t, 0.9, 1);
  std::string text = ss.str();
  std::stringstream as_agent(text);
  EXPECT_THROW(load_agent(as_agent), std::runtime_error);
  std::stringstream truncated(text.substr(0, text.size() / 2));
  EXPECT_THROW(load_central(truncated), std::runtime_error);
  std::stringstream garbage("hello world");
  EXPECT_THROW(load_central(garbage), std::runtime_error);
}

// --- communication ---------------------------------------------------------------

TEST(Channel, RateEnforcementFuzz) {
  std::mt19937_64 rng(99);
  for (int rate = 0; rate <= 6; ++rate) {
    const Channel ch(rate);
    std::uniform_int_distribution<int> msg(-4, (1 << rate) + 4);
    for (int i = 0; i < 500; ++i) {
      const int m = msg(rng);
      if (m >= 0 && m < (1 << rate))
        EXPECT_EQ(ch.transmit(m), m);
      else
        EXPECT_THROW(ch.transmit(m), std::out_of_range);
    }
  }
  EXPECT_THROW(Channel(-1), std::invalid_argument);
  EXPECT_THROW(Channel(17), std::invalid_argument);
}

TEST(CommPolicy, RejectsMessagesBeyondRate) {
  EXPECT_THROW(CommPolicy({0, 1, 2}, 1), std::invalid_argument);
  EXPECT_THROW(CommPolicy({0, -1}, 1), std::invalid_argument);
  EXPECT_NO_THROW(CommPolicy({0, 1, 3}, 2));
  const auto g = grid(8, 22);
  EXPECT_EQ(CommPolicy::identity(g).rate(), 6);
  EXPECT_EQ(CommPolicy::constant(g).messages(), 1);
}
