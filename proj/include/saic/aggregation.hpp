#pragma once

// Value-based observation aggregation.
//
// An agent's observation is summarised by its marginal optimal value
// v(o_i) = sum_j max_{m1,m2} Q(o_i, o_j, m1, m2) p(o_j). Cells are then
// grouped by an exact one-dimensional k-median over those values, and each
// group becomes one message. The same module carries the cluster-radius
// certificate, the return-gap bound, entropy accounting, and the weighted
// Lloyd quantizer used by the distortion-driven baseline.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "saic/comm.hpp"
#include "saic/gridworld.hpp"
#include "saic/qtable.hpp"

namespace saic {

using MarginalValues = std::vector<double>;
using Distribution = std::vector<double>;

/// A disjoint cover of the observation space. Cluster ids are dense in
/// [0, clusters). `centers` holds the per-cluster median for value
/// partitions and is empty for spatial ones.
struct Partition {
  std::vector<int> assignment;
  int clusters = 0;
  std::vector<double> centers;

  std::vector<std::vector<Observation>> members() const {
    std::vector<std::vector<Observation>> out(clusters);
    for (std::size_t o = 0; o < assignment.size(); ++o) out[assignment[o]].push_back(static_cast<Observation>(o));
    return out;
  }
  friend bool operator==(const Partition&, const Partition&) = default;
};

// --- distributions -----------------------------------------------------------

inline void check_distribution(const Distribution& p, const char* what) {
  double sum = 0.0;
  for (double x : p) {
    if (!(x >= 0.0)) throw std::invalid_argument(std::string(what) + ": negative or NaN mass");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument(std::string(what) + ": mass does not sum to 1");
}

/// Uniform over the non-goal cells: the start-of-episode observation law.
inline Distribution reset_distribution(const GridSpec& spec) {
  Distribution p(spec.cells(), 1.0 / (spec.cells() - 1));
  p[spec.goal] = 0.0;
  return p;
}

inline Distribution uniform_distribution(int n) { return Distribution(n, 1.0 / n); }

// --- marginal values ---------------------------------------------------------

enum class Perspective { Agent1, Agent2 };

/// v[o] = sum_j max_a Q(o, j, a) p(j) from agent 1's side, or
/// sum_i max_a Q(i, o, a) p(i) from agent 2's side.
inline MarginalValues marginal_value(const CentralQTable& q, const Distribution& obs_dist,
                                     Perspective side = Perspective::Agent1) {
  const int n = q.cells();
  if (obs_dist.size() != static_cast<std::size_t>(n))
    throw std::invalid_argument("marginal_value: distribution size must equal the number of cells");
  check_distribution(obs_dist, "marginal_value");
  MarginalValues v(n, 0.0);
  for (int o = 0; o < n; ++o) {
    double acc = 0.0;
    for (int other = 0; other < n; ++other) {
      if (obs_dist[other] == 0.0) continue;
      const std::size_t s = side == Perspective::Agent1 ? q.state(o, other) : q.state(other, o);
      acc += max_of(q.q.row(s)) * obs_dist[other];
    }
    v[o] = acc;
  }
  return v;
}

// --- exact 1-D k-median ------------------------------------------------------

namespace detail {

/// Median of a sorted run; even runs use the midpoint of the two middle values.
inline double sorted_median(const double* first, std::size_t count) {
  const std::size_t mid = count / 2;
  return count % 2 ? first[mid] : 0.5 * (first[mid - 1] + first[mid]);
}

inline double abs_deviation(const double* first, std::size_t count, double center) {
  double cost = 0.0;
  for (std::size_t i = 0; i < count; ++i) cost += std::abs(first[i] - center);
  return cost;
}

}  // namespace detail

inline double median_of(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(values.begin(), values.end());
  return detail::sorted_median(values.data(), values.size());
}

/// Total absolute deviation of each point from its cluster median.
inline double kmedian_cost(const std::vector<double>& values, const Partition& p) {
  double cost = 0.0;
  for (const auto& members : p.members()) {
    if (members.empty()) continue;
    std::vector<double> xs;
    for (Observation o : members) xs.push_back(values[o]);
    std::sort(xs.begin(), xs.end());
    cost += detail::abs_deviation(xs.data(), xs.size(), detail::sorted_median(xs.data(), xs.size()));
  }
  return cost;
}

/// Globally optimal k-median partition of scalar values.
///
/// Optimal 1-D clusters are contiguous in sorted order, so a dynamic
/// program over runs of equal values finds the exact optimum with
/// min(k, #distinct values) clusters. Equal values always share a cluster.
/// Among equal-cost solutions the one whose boundaries come earliest in
/// sorted order wins. Cluster ids increase with value.
inline Partition kmedian_1d(const std::vector<double>& values, int k) {
  if (k < 1) throw std::invalid_argument("kmedian_1d: k must be >= 1");
  if (values.empty()) return {};
  for (double x : values)
    if (!std::isfinite(x)) throw std::invalid_argument("kmedian_1d: values must be finite");

  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  std::vector<double> sorted(n);
  for (std::size_t i = 0; i < n; ++i) sorted[i] = values[order[i]];

  // Runs of equal values; run r covers sorted[start[r], start[r+1]).
  std::vector<std::size_t> start;
  for (std::size_t i = 0; i < n; ++i)
    if (i == 0 || sorted[i] != sorted[i - 1]) start.push_back(i);
  const std::size_t runs = start.size();
  start.push_back(n);
  const std::size_t segments = std::min<std::size_t>(static_cast<std::size_t>(k), runs);

  // seg_cost[a][b]: cost of one cluster spanning runs a..b-1.
  std::vector<std::vector<double>> seg_cost(runs + 1, std::vector<double>(runs + 1, 0.0));
  for (std::size_t a = 0; a < runs; ++a)
    for (std::size_t b = a + 1; b <= runs; ++b) {
      const double* first = sorted.data() + start[a];
      const std::size_t count = start[b] - start[a];
      seg_cost[a][b] = detail::abs_deviation(first, count, detail::sorted_median(first, count));
    }

  // best[j][r]: minimal cost of splitting runs r..runs-1 into j clusters.
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best(segments + 1, std::vector<double>(runs + 1, inf));
  best[0][runs] = 0.0;
  for (std::size_t j = 1; j <= segments; ++j)
    for (std::size_t r = 0; r + j <= runs; ++r)
      for (std::size_t e = r + 1; e + (j - 1) <= runs; ++e)
        best[j][r] = std::min(best[j][r], seg_cost[r][e] + best[j - 1][e]);

  // Forward reconstruction, taking the earliest boundary that stays optimal.
  auto near = [](double a, double b) {
    return std::isfinite(a) && std::abs(a - b) <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)});
  };
  Partition p;
  p.assignment.assign(n, 0);
  p.clusters = static_cast<int>(segments);
  std::size_t r = 0;
  for (std::size_t j = segments; j >= 1; --j) {
    std::size_t e = r + 1;
    for (; e + (j - 1) <= runs; ++e)
      if (near(seg_cost[r][e] + best[j - 1][e], best[j][r])) break;
    const int id = static_cast<int>(segments - j);
    for (std::size_t i = start[r]; i < start[e]; ++i) p.assignment[order[i]] = id;
    p.centers.push_back(detail::sorted_median(sorted.data() + start[r], start[e] - start[r]));
    r = e;
  }
  return p;
}

inline CommPolicy comm_policy_from_partition(const Partition& p) {
  return CommPolicy(p.assignment, bits_for(std::max(p.clusters, 1)));
}

/// Same map, but declared at a fixed channel rate (clusters must fit).
inline CommPolicy comm_policy_from_partition(const Partition& p, int rate_bits) {
  return CommPolicy(p.assignment, rate_bits);
}

// --- aggregated values -------------------------------------------------------

/// p(o | message) as rows indexed [message][o].
using ConditionalTable = std::vector<std::vector<double>>;

/// Conditional law of an observation given its message, obtained by
/// restricting `obs_dist` to each preimage. A message whose preimage has no
/// mass falls back to uniform over the preimage; unused messages get an
/// all-zero row.
inline ConditionalTable conditional_from_marginal(const CommPolicy& comm, const Distribution& obs_dist) {
  check_distribution(obs_dist, "conditional_from_marginal");
  const int msgs = comm.messages();
  ConditionalTable cond(msgs, std::vector<double>(obs_dist.size(), 0.0));
  std::vector<double> mass(msgs, 0.0);
  std::vector<int> size(msgs, 0);
  for (std::size_t o = 0; o < obs_dist.size(); ++o) {
    mass[comm(static_cast<Observation>(o))] += obs_dist[o];
    ++size[comm(static_cast<Observation>(o))];
  }
  for (std::size_t o = 0; o < obs_dist.size(); ++o) {
    const int c = comm(static_cast<Observation>(o));
    cond[c][o] = mass[c] > 0.0 ? obs_dist[o] / mass[c] : 1.0 / size[c];
  }
  return cond;
}

/// V(o_i, c) = sum_{o_j in preimage(c)} V(o_i, o_j) p(o_j | c), for every
/// observation o_i and every used message c. `v_joint` is indexed
/// [o_i * cells + o_j]. Result is indexed [o_i * messages + c]; unused
/// messages are NaN.
inline std::vector<double> aggregated_value(const std::vector<double>& v_joint, const CommPolicy& comm,
                                            const ConditionalTable& cond) {
  const std::size_t cells = comm.observations();
  if (v_joint.size() != cells * cells) throw std::invalid_argument("aggregated_value: joint table size mismatch");
  if (cond.size() != static_cast<std::size_t>(comm.messages()))
    throw std::invalid_argument("aggregated_value: one conditional row per message required");
  std::vector<bool> used(comm.messages(), false);
  for (std::size_t o = 0; o < cells; ++o) used[comm(static_cast<Observation>(o))] = true;
  for (int c = 0; c < comm.messages(); ++c) {
    if (cond[c].size() != cells) throw std::invalid_argument("aggregated_value: conditional row size mismatch");
    double sum = 0.0;
    for (std::size_t o = 0; o < cells; ++o) {
      if (cond[c][o] < 0.0) throw std::invalid_argument("aggregated_value: negative conditional mass");
      if (cond[c][o] > 0.0 && comm(static_cast<Observation>(o)) != c)
        throw std::invalid_argument("aggregated_value: conditional puts mass outside the message preimage");
      sum += cond[c][o];
    }
    if (used[c] && std::abs(sum - 1.0) > 1e-9)
      throw std::invalid_argument("aggregated_value: conditional row does not sum to 1");
  }
  std::vector<double> out(cells * comm.messages(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t oi = 0; oi < cells; ++oi)
    for (int c = 0; c < comm.messages(); ++c) {
      if (!used[c]) continue;
      double acc = 0.0;
      for (std::size_t oj = 0; oj < cells; ++oj)
        if (cond[c][oj] > 0.0) acc += v_joint[oi * cells + oj] * cond[c][oj];
      out[oi * comm.messages() + c] = acc;
    }
  return out;
}

// --- cluster radius and return-gap bound -------------------------------------

/// epsilon = 2 * max over clusters and members of |v(o) - median(cluster)|.
inline double epsilon_of_partition(const MarginalValues& values, const Partition& p) {
  if (p.assignment.size() != values.size()) throw std::invalid_argument("epsilon_of_partition: size mismatch");
  std::vector<double> centers = p.centers;
  if (centers.size() != static_cast<std::size_t>(p.clusters)) {
    centers.assign(p.clusters, 0.0);
    auto members = p.members();
    for (int k = 0; k < p.clusters; ++k) {
      std::vector<double> xs;
      for (Observation o : members[k]) xs.push_back(values[o]);
      if (!xs.empty()) centers[k] = median_of(xs);
    }
  }
  double radius = 0.0;
  for (std::size_t o = 0; o < values.size(); ++o)
    radius = std::max(radius, std::abs(values[o] - centers[p.assignment[o]]));
  return 2.0 * radius;
}

/// 2 epsilon / (1 - gamma)^2.
inline double return_gap_bound(double epsilon, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("return_gap_bound: gamma must lie in [0,1)");
  return 2.0 * epsilon / ((1.0 - gamma) * (1.0 - gamma));
}

// --- entropy and compression ratio -------------------------------------------

/// Shannon entropy in bits, with 0 log 0 = 0.
inline double entropy(const Distribution& p) {
  double sum = 0.0;
  for (double x : p) {
    if (x < 0.0 || std::isnan(x)) throw std::invalid_argument("entropy: negative or NaN mass");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("entropy: mass does not sum to 1");
  double h = 0.0;
  for (double x : p)
    if (x > 0.0) h -= x * std::log2(x);
  return h;
}

/// Law of the message when observations follow `obs_dist`.
inline Distribution message_distribution(const CommPolicy& comm, const Distribution& obs_dist) {
  Distribution out(comm.messages(), 0.0);
  for (std::size_t o = 0; o < obs_dist.size(); ++o) out[comm(static_cast<Observation>(o))] += obs_dist[o];
  return out;
}

struct CompressionRatio {
  int observation_bits = 0;  // ceil H(observation)
  int message_bits = 0;      // ceil H(message)
  std::string str() const { return std::to_string(observation_bits) + ":" + std::to_string(message_bits); }
  friend bool operator==(const CompressionRatio&, const CompressionRatio&) = default;
};

inline int ceil_bits(double h) {
  // Guard against log2 round-off on exact powers of two.
  const double r = std::round(h);
  return static_cast<int>(std::abs(h - r) < 1e-9 ? r : std::ceil(h));
}

inline CompressionRatio compression_ratio(const Distribution& obs_dist, const Distribution& msg_dist) {
  return {ceil_bits(entropy(obs_dist)), ceil_bits(entropy(msg_dist))};
}

// --- weighted Lloyd quantization ---------------------------------------------

struct WeightedPoint {
  double row = 0.0;
  double col = 0.0;
  double weight = 0.0;
};

struct LloydResult {
  Partition partition;
  std::vector<std::pair<double, double>> centroids;
  std::vector<double> cost_history;  // weighted distortion after each assignment step
  int iterations = 0;
};

inline std::vector<WeightedPoint> grid_points(const GridSpec& spec, const Distribution& weights) {
  if (weights.size() != static_cast<std::size_t>(spec.cells()))
    throw std::invalid_argument("grid_points: one weight per cell required");
  std::vector<WeightedPoint> pts(spec.cells());
  for (int o = 0; o < spec.cells(); ++o) pts[o] = {double(spec.row(o)), double(spec.col(o)), weights[o]};
  return pts;
}

inline double squared_distance(const WeightedPoint& p, std::pair<double, double> c) {
  const double dr = p.row - c.first;
  const double dc = p.col - c.second;
  return dr * dr + dc * dc;
}

/// Lloyd iteration on weighted 2-D points under squared Euclidean distortion.
///
/// Initial centroids are `k` distinct points drawn by weighted sampling
/// without replacement (zero-weight points only once positive ones run out).
/// Iterates until assignments stop changing or 100 rounds pass. Every point
/// is assigned, weighted or not; empty clusters are dropped and ids are
/// renumbered densely in order of first appearance.
template <class Rng>
LloydResult lloyd_quantize(const std::vector<WeightedPoint>& points, int k, Rng& rng, int max_iterations = 100) {
  if (k < 1) throw std::invalid_argument("lloyd_quantize: k must be >= 1");
  if (points.empty()) throw std::invalid_argument("lloyd_quantize: no points");
  double total = 0.0;
  for (const auto& p : points) {
    if (!(p.weight >= 0.0)) throw std::invalid_argument("lloyd_quantize: negative weight");
    total += p.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("lloyd_quantize: weights must sum to 1");

  const std::size_t levels = std::min<std::size_t>(static_cast<std::size_t>(k), points.size());
  std::vector<std::size_t> seeds;
  {
    std::vector<double> w(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) w[i] = points[i].weight;
    std::vector<bool> taken(points.size(), false);
    while (seeds.size() < levels) {
      double remaining = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i)
        if (!taken[i]) remaining += w[i];
      std::size_t pick = points.size();
      if (remaining > 0.0) {
        std::uniform_real_distribution<double> u(0.0, remaining);
        double x = u(rng);
        for (std::size_t i = 0; i < w.size(); ++i) {
          if (taken[i] || w[i] == 0.0) continue;
          pick = i;
          if (x < w[i]) break;
          x -= w[i];
        }
      } else {
        std::vector<std::size_t> free;
        for (std::size_t i = 0; i < w.size(); ++i)
          if (!taken[i]) free.push_back(i);
        std::uniform_int_distribution<std::size_t> u(0, free.size() - 1);
        pick = free[u(rng)];
      }
      taken[pick] = true;
      seeds.push_back(pick);
    }
  }

  LloydResult res;
  for (std::size_t s : seeds) res.centroids.emplace_back(points[s].row, points[s].col);
  std::vector<int> assign(points.size(), -1);
  for (int it = 0; it < max_iterations; ++it) {
    bool changed = false;
    double cost = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      int best = 0;
      double best_d = squared_distance(points[i], res.centroids[0]);
      for (std::size_t c = 1; c < res.centroids.size(); ++c) {
        const double d = squared_distance(points[i], res.centroids[c]);
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(c);
        }
      }
      if (assign[i] != best) changed = true;
      assign[i] = best;
      cost += points[i].weight * best_d;
    }
    res.cost_history.push_back(cost);
    res.iterations = it + 1;
    if (!changed && it > 0) break;
    // Weighted centroid update; clusters without mass keep their centroid.
    std::vector<double> wr(res.centroids.size(), 0.0), wc(res.centroids.size(), 0.0), ww(res.centroids.size(), 0.0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      wr[assign[i]] += points[i].weight * points[i].row;
      wc[assign[i]] += points[i].weight * points[i].col;
      ww[assign[i]] += points[i].weight;
    }
    for (std::size_t c = 0; c < res.centroids.size(); ++c)
      if (ww[c] > 0.0) res.centroids[c] = {wr[c] / ww[c], wc[c] / ww[c]};
  }

  // Dense relabelling in order of first appearance.
  std::vector<int> relabel(res.centroids.size(), -1);
  std::vector<std::pair<double, double>> kept;
  res.partition.assignment.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    int& id = relabel[assign[i]];
    if (id < 0) {
      id = static_cast<int>(kept.size());
      kept.push_back(res.centroids[assign[i]]);
    }
    res.partition.assignment[i] = id;
  }
  res.partition.clusters = static_cast<int>(kept.size());
  res.centroids = std::move(kept);
  return res;
}

/// Weighted squared-distance distortion of a partition around its own
/// weighted centroids.
inline double lloyd_cost(const std::vector<WeightedPoint>& points, const Partition& p) {
  std::vector<double> wr(p.clusters, 0.0), wc(p.clusters, 0.0), ww(p.clusters, 0.0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    wr[p.assignment[i]] += points[i].weight * points[i].row;
    wc[p.assignment[i]] += points[i].weight * points[i].col;
    ww[p.assignment[i]] += points[i].weight;
  }
  double cost = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const int c = p.assignment[i];
    if (ww[c] == 0.0) continue;
    cost += points[i].weight * squared_distance(points[i], {wr[c] / ww[c], wc[c] / ww[c]});
  }
  return cost;
}

}  // namespace saic
