#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "saic/schemes.hpp"

using namespace saic;

namespace {

GridSpec grid(int n, int goal) {
  GridSpec g;
  g.size = n;
  g.goal = goal;
  return g;
}

TrainConfig small_cfg(std::int64_t episodes, std::uint64_t seed = 1) {
  TrainConfig c;
  c.episodes = episodes;
  c.horizon = 30;
  c.seed = seed;
  return c;
}

double rollout(const GridSpec& g, const JointPolicy& p, JointState s, int horizon, double gamma) {
  return rollout_return(g, p, s, gamma, horizon);
}

}  // namespace

// --- scripted heuristics -------------------------------------------------------

TEST(Heuristics, HocNeverWorseThanHncPointwise) {
  for (int goal : {21, 22, 0, 63}) {
    const auto g = grid(8, goal);
    const auto hoc = hoc_policy(g);
    for (int wait : {0, 3, default_wait(g), 30}) {
      const auto hnc = hnc_policy(g, wait);
      for_each_start(g, [&](JointState s) {
        ASSERT_GE(rollout(g, hoc, s, 100, 0.9) + 1e-12, rollout(g, hnc, s, 100, 0.9))
            << "goal " << goal << " wait " << wait << " start " << s.o1 << "," << s.o2;
      });
    }
  }
}

TEST(Heuristics, HocAlwaysEarnsLargeReward) {
  const auto g = grid(8, 22);
  const auto hoc = hoc_policy(g);
  const Rendezvous rv(g);
  for_each_start(g, [&](JointState s) {
    const int arrive = std::max(rv.len1[s.o1], rv.len2[s.o2]);
    EXPECT_DOUBLE_EQ(rollout(g, hoc, s, 100, 0.9), 10.0 * std::pow(0.9, arrive));
  });
}

TEST(Heuristics, HncWithLongWaitAlwaysRendezvous) {
  const auto g = grid(8, 22);
  const Rendezvous rv(g);
  int longest = 0;
  for (Observation o = 0; o < g.cells(); ++o) longest = std::max({longest, rv.len1[o], rv.len2[o]});
  const auto hnc = hnc_policy(g, longest);
  for_each_start(g, [&](JointState s) {
    EXPECT_DOUBLE_EQ(rollout(g, hnc, s, 100, 0.9), 10.0 * std::pow(0.9, longest));
  });
}

TEST(Heuristics, HncZeroWaitEntersOnArrival) {
  const auto g = grid(8, 22);
  const Rendezvous rv(g);
  const auto hnc = hnc_policy(g, 0);
  for_each_start(g, [&](JointState s) {
    const int l1 = rv.len1[s.o1], l2 = rv.len2[s.o2];
    const double expect = l1 == l2 ? 10.0 * std::pow(0.9, l1) : 1.0 * std::pow(0.9, std::min(l1, l2));
    EXPECT_DOUBLE_EQ(rollout(g, hnc, s, 100, 0.9), expect);
  });
}

TEST(Heuristics, RoutesAvoidGoalAndAreShortest) {
  const auto g = grid(5, 12);
  const Rendezvous rv(g);
  EXPECT_EQ(rv.wait1, 7);
  EXPECT_EQ(rv.wait2, 11);
  for (Observation o = 0; o < g.cells(); ++o) {
    if (o == g.goal) continue;
    Observation p = o;
    int steps = 0;
    while (p != rv.wait1) {
      p = transition(p, rv.route1[p], g);
      ASSERT_NE(p, g.goal);
      ASSERT_LT(++steps, 25);
    }
    EXPECT_EQ(steps, rv.len1[o]);
    EXPECT_GE(steps, g.distance(o, rv.wait1));
  }
}

// --- scheme relations ----------------------------------------------------------

TEST(Schemes, CicAtZeroRateIsNoComm) {
  const Context ctx(grid(3, 8), small_cfg(3000));
  const auto cic = run_cic(ctx, 0);
  const auto none = run_nocomm(ctx);
  EXPECT_EQ(cic.mean, none.mean);
  ASSERT_EQ(cic.record.episodes.size(), none.record.episodes.size());
  for (std::size_t i = 0; i < cic.record.episodes.size(); ++i)
    ASSERT_EQ(cic.record.episodes[i].discounted_return, none.record.episodes[i].discounted_return);
}

TEST(Schemes, SaicAtFullRateIsIdentityOnDistinctValues) {
  const Context ctx(grid(3, 8), small_cfg(4000));
  const auto plan = plan_saic(ctx, 4);
  std::set<double> distinct(plan.values.begin(), plan.values.end());
  std::set<int> messages(plan.comm.table().begin(), plan.comm.table().end());
  EXPECT_EQ(messages.size(), distinct.size());
  for (Observation a = 0; a < 9; ++a)
    for (Observation b = 0; b < 9; ++b)
      EXPECT_EQ(plan.values[a] == plan.values[b], plan.comm(a) == plan.comm(b));
  EXPECT_EQ(plan.epsilon, 0.0);
}

TEST(Schemes, SaicPartitionMatchesItsValues) {
  const Context ctx(grid(4, 5), small_cfg(3000));
  const auto r = run_saic(ctx, 1);
  ASSERT_TRUE(r.partition && r.values);
  EXPECT_LE(r.partition->clusters, 2);
  EXPECT_EQ(r.epsilon, epsilon_of_partition(*r.values, *r.partition));
  EXPECT_DOUBLE_EQ(r.bound, return_gap_bound(r.epsilon, 0.9));
}

TEST(Schemes, HybridAtZeroRateIsSingleState) {
  const Context ctx(grid(3, 8), small_cfg(2000));
  const auto r = run_hybrid(ctx, 0);
  EXPECT_EQ(r.rate, 0);
  EXPECT_EQ(r.partition->clusters, 1);
  EXPECT_GE(r.normalized, 0.0);
  EXPECT_LE(r.normalized, 1.0 + 1e-12);
}

TEST(Schemes, EveryMessageFitsTheChannel) {
  const Context ctx(grid(4, 5), small_cfg(1500));
  for (int rate : {0, 1, 2, 3}) {
    const Channel ch(rate);
    const auto saic = plan_saic(ctx, rate);
    const auto cic = plan_cic(ctx, rate);
    const auto lbic = lbic_comm(train_lbic(ctx.spec, ctx.cfg, rate, UpdateRule::Optimistic), rate);
    for (const CommPolicy* c : {&saic.comm, &cic.comm, &lbic.first, &lbic.second}) {
      EXPECT_LE(c->rate(), rate);
      for (Observation o = 0; o < ctx.spec.cells(); ++o) EXPECT_NO_THROW(ch.transmit((*c)(o)));
    }
  }
}

TEST(Schemes, RegistryRunsEverySchemeWithinBounds) {
  const Context ctx(grid(3, 8), small_cfg(1500));
  const std::set<std::string> expected{"saic", "cic", "lbic", "hybrid", "hnc", "hoc", "centralized", "nocomm"};
  std::set<std::string> names;
  for (const auto& [name, fn] : scheme_registry()) {
    names.insert(name);
    const auto r = run_scheme(name, ctx, 1);
    EXPECT_EQ(r.scheme, name);
    EXPECT_EQ(r.optimum, ctx.optimum);
    EXPECT_GE(r.normalized, 0.0) << name;
    EXPECT_LE(r.normalized, 1.0 + 1e-12) << name;
    EXPECT_EQ(r.record.episodes.empty(), name == "hnc" || name == "hoc") << name;
  }
  EXPECT_EQ(names, expected);
  EXPECT_THROW(run_scheme("telepathy", ctx, 1), std::invalid_argument);
  EXPECT_THROW(run_scheme("saic", ctx, 17), std::invalid_argument);
}

TEST(Schemes, SampledNormalizedWithinThreeStandardErrors) {
  const Context ctx(grid(4, 5), small_cfg(2000));
  SchemeOptions opt;
  opt.eval_episodes = 4000;
  for (const char* name : {"hnc", "nocomm", "saic"}) {
    const auto r = run_scheme(name, ctx, 2, opt);
    EXPECT_GT(r.std_error, 0.0) << name;
    EXPECT_GE(r.normalized, 0.0) << name;
    EXPECT_LE(r.normalized, 1.0 + 3.0 * r.std_error / r.optimum) << name;
  }
}

TEST(Schemes, LbicIsDeterministicPerSeed) {
  const Context ctx(grid(3, 8), small_cfg(1500, 42));
  const auto a = run_lbic(ctx, 1);
  const auto b = run_lbic(ctx, 1);
  EXPECT_EQ(a.mean, b.mean);
  ASSERT_EQ(a.record.episodes.size(), b.record.episodes.size());
  for (std::size_t i = 0; i < a.record.episodes.size(); ++i)
    ASSERT_EQ(a.record.episodes[i].discounted_return, b.record.episodes[i].discounted_return);
}

TEST(Schemes, NormalizeRejectsNonPositiveOptimum) {
  EXPECT_DOUBLE_EQ(normalize(4.5, 9.0), 0.5);
  EXPECT_THROW(normalize(1.0, 0.0), std::invalid_argument);
  EXPECT_THROW(normalize(1.0, -2.0), std::invalid_argument);
}

TEST(Schemes, OccupancyDistributionIsNormalized) {
  const Context ctx(grid(3, 8), small_cfg(500));
  CentralTraining c;
  const auto d = occupancy_of(ctx.spec, ctx.cfg, c);
  EXPECT_NO_THROW(check_distribution(d, "occupancy"));
  EXPECT_EQ(d[8], 0.0);
}

// --- evaluation ----------------------------------------------------------------

TEST(Evaluation, SampledAgreesWithExact) {
  const auto g = grid(3, 8);
  const auto hnc = hnc_policy(g, 1);
  const auto exact = evaluate_exact(g, hnc, 0.9, 100);
  Rng rng(3);
  const auto sampled = evaluate(hnc, g, 20000, 0.9, 100, rng);
  EXPECT_NEAR(sampled.mean, exact.mean, 4.0 * sampled.std_error);
  EXPECT_EQ(exact.std_error, 0.0);
  EXPECT_EQ(exact.episodes, 64u);
}

TEST(Evaluation, OptimalPolicyAttainsOptimum) {
  const auto g = grid(8, 21);
  const auto sol = value_iteration(g, 0.9);
  const auto ev = evaluate_exact(g, optimal_policy(g, sol), 0.9, 100);
  EXPECT_NEAR(ev.mean, centralized_optimum(g, sol, 0.9, 100), 1e-12);
  double mean_v = 0.0;
  for_each_start(g, [&](JointState s) { mean_v += sol.v(s.o1, s.o2); });
  EXPECT_NEAR(ev.mean, mean_v / (63.0 * 63.0), 1e-9);
}
