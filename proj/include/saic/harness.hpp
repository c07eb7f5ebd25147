#pragma once

// Experiment configuration, sweeps over (scheme, rate, seed) cells, and CSV
// emission.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "saic/aggregation.hpp"
#include "saic/schemes.hpp"

namespace saic {

// --- smoothing ------------------------------------------------------------------

/// Trailing moving average; the first entries average what is available.
inline std::vector<double> smooth(const std::vector<double>& series, std::size_t window) {
  if (window < 1) throw std::invalid_argument("smooth: window must be >= 1");
  std::vector<double> out(series.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    sum += series[i];
    if (i >= window) sum -= series[i - window];
    out[i] = sum / static_cast<double>(std::min(window, i + 1));
  }
  return out;
}

inline std::vector<double> returns_of(const RunRecord& r) {
  std::vector<double> out;
  out.reserve(r.episodes.size());
  for (const auto& e : r.episodes) out.push_back(e.discounted_return);
  return out;
}

/// Last point of the smoothed learning curve, normalized; NaN for scripted
/// schemes that have no training record.
inline double final_smoothed_normalized(const SchemeResult& r, std::size_t window) {
  if (r.record.episodes.empty()) return kNaN;
  return normalize(smooth(returns_of(r.record), window).back(), r.optimum);
}

// --- configuration ----------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw std::invalid_argument(key + ": not a number: '" + v + "'");
  return x;
}

inline std::int64_t to_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw std::invalid_argument(key + ": not an integer: '" + v + "'");
  return x;
}

template <class T>
std::string join(const std::vector<T>& xs) {
  std::ostringstream os;
  for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? "," : "") << xs[i];
  return os.str();
}

inline std::string fmt(double x, int digits) {
  if (std::isnan(x)) return "nan";
  std::ostringstream os;
  os << std::setprecision(digits) << x;
  return os.str();
}

}  // namespace detail

struct ExperimentConfig {
  GridSpec spec;
  TrainConfig train;  // seed is overwritten per cell
  std::vector<std::string> schemes{"saic"};
  std::vector<int> rates{2};
  std::vector<std::uint64_t> seeds{1};
  std::size_t smooth_window = 20000;
  std::size_t curve_stride = 1000;
  std::size_t workers = 0;  // 0: one per hardware thread
  SchemeOptions options;

  /// Keys in the order they are written back out.
  static const std::vector<std::string>& keys() {
    static const std::vector<std::string> k = {
        "grid_size", "goal_cell", "reward_small", "reward_large", "gamma", "alpha", "ucb_c",
        "episodes", "horizon", "rate_bits", "compression_ratios", "schemes", "seeds",
        "smooth_window", "curve_stride", "workers", "update_rule", "eval_episodes", "obs_dist",
        "hnc_wait"};
    return k;
  }

  void set(const std::string& raw_key, const std::string& raw_value) {
    const std::string key = detail::trim(raw_key);
    const std::string v = detail::trim(raw_value);
    if (key == "grid_size") spec.size = static_cast<int>(detail::to_int(key, v));
    else if (key == "goal_cell") spec.goal = static_cast<int>(detail::to_int(key, v));
    else if (key == "reward_small") spec.reward_small = detail::to_double(key, v);
    else if (key == "reward_large") spec.reward_large = detail::to_double(key, v);
    else if (key == "gamma") train.gamma = detail::to_double(key, v);
    else if (key == "alpha") train.alpha = detail::to_double(key, v);
    else if (key == "ucb_c") train.ucb_c = detail::to_double(key, v);
    else if (key == "episodes") train.episodes = detail::to_int(key, v);
    else if (key == "horizon") train.horizon = static_cast<int>(detail::to_int(key, v));
    else if (key == "rate_bits") {
      rates.clear();
      for (const auto& s : detail::split_list(v)) rates.push_back(static_cast<int>(detail::to_int(key, s)));
    } else if (key == "compression_ratios") {
      // "a:b" pairs; the message side b is the channel rate.
      rates.clear();
      for (const auto& s : detail::split_list(v)) {
        const auto colon = s.find(':');
        if (colon == std::string::npos) throw std::invalid_argument(key + ": expected a:b, got '" + s + "'");
        rates.push_back(static_cast<int>(detail::to_int(key, detail::trim(s.substr(colon + 1)))));
      }
    } else if (key == "schemes") schemes = detail::split_list(v);
    else if (key == "seeds") {
      seeds.clear();
      for (const auto& s : detail::split_list(v)) seeds.push_back(static_cast<std::uint64_t>(detail::to_int(key, s)));
    } else if (key == "smooth_window") smooth_window = static_cast<std::size_t>(detail::to_int(key, v));
    else if (key == "curve_stride") curve_stride = static_cast<std::size_t>(detail::to_int(key, v));
    else if (key == "workers") workers = static_cast<std::size_t>(detail::to_int(key, v));
    else if (key == "update_rule") options.rule = parse_update_rule(v);
    else if (key == "eval_episodes") options.eval_episodes = static_cast<std::size_t>(detail::to_int(key, v));
    else if (key == "obs_dist") {
      if (v == "reset") options.obs_dist = SchemeOptions::ObsDist::Reset;
      else if (v == "occupancy") options.obs_dist = SchemeOptions::ObsDist::Occupancy;
      else throw std::invalid_argument("obs_dist must be reset or occupancy");
    } else if (key == "hnc_wait") options.hnc_wait = static_cast<int>(detail::to_int(key, v));
    else throw std::invalid_argument("unknown config key: " + key);
  }

  /// "key=value" form, as used by --set.
  void apply(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("expected key=value, got '" + assignment + "'");
    set(assignment.substr(0, eq), assignment.substr(eq + 1));
  }

  void validate() const {
    spec.validate();
    train.validate();
    if (schemes.empty()) throw std::invalid_argument("schemes: at least one scheme required");
    for (const auto& s : schemes)
      if (!scheme_registry().contains(s)) throw std::invalid_argument("schemes: unknown scheme '" + s + "'");
    if (rates.empty()) throw std::invalid_argument("rate_bits: at least one rate required");
    for (int r : rates)
      if (r < 0 || r > CommPolicy::kMaxRate) throw std::invalid_argument("rate_bits: rate out of range");
    if (seeds.empty()) throw std::invalid_argument("seeds: at least one seed required");
    if (smooth_window < 1) throw std::invalid_argument("smooth_window must be >= 1");
    if (curve_stride < 1) throw std::invalid_argument("curve_stride must be >= 1");
  }

  /// Canonical text form; parsing it yields an equal configuration.
  std::string to_text() const {
    std::ostringstream os;
    os << "grid_size=" << spec.size << "\n"
       << "goal_cell=" << spec.goal << "\n"
       << "reward_small=" << detail::fmt(spec.reward_small, 17) << "\n"
       << "reward_large=" << detail::fmt(spec.reward_large, 17) << "\n"
       << "gamma=" << detail::fmt(train.gamma, 17) << "\n"
       << "alpha=" << detail::fmt(train.alpha, 17) << "\n"
       << "ucb_c=" << detail::fmt(train.ucb_c, 17) << "\n"
       << "episodes=" << train.episodes << "\n"
       << "horizon=" << train.horizon << "\n"
       << "rate_bits=" << detail::join(rates) << "\n"
       << "schemes=" << detail::join(schemes) << "\n"
       << "seeds=" << detail::join(seeds) << "\n"
       << "smooth_window=" << smooth_window << "\n"
       << "curve_stride=" << curve_stride << "\n"
       << "update_rule=" << to_string(options.rule) << "\n"
       << "eval_episodes=" << options.eval_episodes << "\n"
       << "obs_dist=" << (options.obs_dist == SchemeOptions::ObsDist::Reset ? "reset" : "occupancy") << "\n"
       << "hnc_wait=" << options.hnc_wait << "\n";
    return os.str();
  }

  /// FNV-1a of the canonical text, excluding the worker count, which does
  /// not affect results.
  std::string hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : to_text()) {
      h ^= ch;
      h *= 1099511628211ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
  }
};

inline ExperimentConfig parse_config(std::istream& is) {
  ExperimentConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key=value");
    cfg.set(line.substr(0, eq), line.substr(eq + 1));
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config: " + path.string());
  return parse_config(is);
}

// --- sweeps ---------------------------------------------------------------------

struct Cell {
  std::string scheme;
  int rate = 0;
  std::uint64_t seed = 0;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

struct CellOutcome {
  Cell cell;
  bool ok = false;
  std::string error;
  SchemeResult result;
  double smoothed_normalized = kNaN;
};

/// Every (scheme, rate, seed) cell, sorted. Rate-independent schemes appear
/// once per seed, under the rate they actually use.
inline std::vector<Cell> cells_of(const ExperimentConfig& cfg) {
  std::vector<Cell> out;
  for (const auto& s : cfg.schemes)
    for (std::uint64_t seed : cfg.seeds) {
      if (rate_independent(s)) {
        const GridSpec& g = cfg.spec;
        const int r = s == "centralized" ? bits_for(g.cells()) : s == "hoc" ? 1 : 0;
        out.push_back({s, r, seed});
      } else {
        for (int r : cfg.rates) out.push_back({s, r, seed});
      }
    }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline CellOutcome run_cell(const ExperimentConfig& cfg, const Cell& cell) {
  CellOutcome out;
  out.cell = cell;
  try {
    TrainConfig tc = cfg.train;
    tc.seed = cell.seed;
    const Context ctx(cfg.spec, tc);
    out.result = run_scheme(cell.scheme, ctx, cell.rate, cfg.options);
    out.smoothed_normalized = final_smoothed_normalized(out.result, cfg.smooth_window);
    out.ok = true;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

/// Runs every cell on a bounded pool of worker threads. Cells share no
/// mutable state; results are returned in cell order.
inline std::vector<CellOutcome> run_cells(const ExperimentConfig& cfg, const std::vector<Cell>& cells) {
  std::vector<CellOutcome> out(cells.size());
  std::size_t workers = cfg.workers ? cfg.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, std::max<std::size_t>(cells.size(), 1));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) out[i] = run_cell(cfg, cells[i]);
  };
  if (workers <= 1) {
    work();
    return out;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  return out;
}

// --- CSV output -----------------------------------------------------------------

inline void write_curves_header(std::ostream& os) {
  os << "scheme,rate,seed,episode,smoothed_return,smoothed_normalized\n";
}

/// Every `stride`-th point of the smoothed learning curve, plus the last.
inline void write_curve_rows(std::ostream& os, const SchemeResult& r, std::size_t window, std::size_t stride) {
  if (r.record.episodes.empty()) return;
  const auto s = smooth(returns_of(r.record), window);
  for (std::size_t i = 0; i < s.size(); ++i) {
    if ((i + 1) % stride != 0 && i + 1 != s.size()) continue;
    os << r.scheme << ',' << r.rate << ',' << r.seed << ',' << (i + 1) << ',' << detail::fmt(s[i], 6) << ','
       << detail::fmt(s[i] / r.optimum, 6) << '\n';
  }
}

struct SummaryRow {
  std::string scheme;
  int rate = 0;
  std::uint64_t seed = 0;
  std::string status;  // "ok" or the failure message
  double mean = kNaN;
  double std_error = kNaN;
  double optimum = kNaN;
  double normalized = kNaN;
  double smoothed_normalized = kNaN;
  double epsilon = kNaN;
  double bound = kNaN;
};

inline const char* summary_header() {
  return "scheme,rate,seed,status,mean,std_error,optimum,normalized,smoothed_normalized,epsilon,bound";
}

inline SummaryRow summary_row(const CellOutcome& c) {
  SummaryRow r;
  r.scheme = c.cell.scheme;
  r.rate = c.cell.rate;
  r.seed = c.cell.seed;
  r.status = c.ok ? "ok" : c.error;
  if (c.ok) {
    r.mean = c.result.mean;
    r.std_error = c.result.std_error;
    r.optimum = c.result.optimum;
    r.normalized = c.result.normalized;
    r.smoothed_normalized = c.smoothed_normalized;
    r.epsilon = c.result.epsilon;
    r.bound = c.result.bound;
  }
  return r;
}

namespace detail {

/// Status strings may contain anything; keep them on one field.
inline std::string csv_field(const std::string& s) {
  std::string clean;
  for (char ch : s) clean += (ch == ',' || ch == '\n' || ch == '\r' || ch == '"') ? ' ' : ch;
  return clean;
}

}  // namespace detail

/// Numbers use 17 significant digits so that reloading is exact.
inline void write_summary_row(std::ostream& os, const SummaryRow& r) {
  auto f = [](double x) { return detail::fmt(x, 17); };
  os << r.scheme << ',' << r.rate << ',' << r.seed << ',' << detail::csv_field(r.status) << ',' << f(r.mean) << ','
     << f(r.std_error) << ',' << f(r.optimum) << ',' << f(r.normalized) << ',' << f(r.smoothed_normalized) << ','
     << f(r.epsilon) << ',' << f(r.bound) << '\n';
}

inline std::vector<SummaryRow> read_summary(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || detail::trim(line) != summary_header())
    throw std::runtime_error("summary: unexpected header");
  std::vector<SummaryRow> out;
  while (std::getline(is, line)) {
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> f;
    std::string item;
    std::istringstream ls(line);
    while (std::getline(ls, item, ',')) f.push_back(item);
    if (f.size() != 11) throw std::runtime_error("summary: expected 11 fields: " + line);
    auto num = [](const std::string& s) { return s == "nan" ? kNaN : std::strtod(s.c_str(), nullptr); };
    SummaryRow r;
    r.scheme = f[0];
    r.rate = std::stoi(f[1]);
    r.seed = std::stoull(f[2]);
    r.status = f[3];
    r.mean = num(f[4]);
    r.std_error = num(f[5]);
    r.optimum = num(f[6]);
    r.normalized = num(f[7]);
    r.smoothed_normalized = num(f[8]);
    r.epsilon = num(f[9]);
    r.bound = num(f[10]);
    out.push_back(r);
  }
  return out;
}

/// Cluster ids as an N x N integer grid, top grid row first so the text
/// reads like the board.
inline void write_partition_grid(std::ostream& os, const GridSpec& spec, const std::vector<int>& assignment) {
  for (int r = spec.size - 1; r >= 0; --r)
    for (int c = 0; c < spec.size; ++c)
      os << assignment[spec.cell(r, c)] << (c + 1 < spec.size ? ',' : '\n');
}

inline void write_value_grid(std::ostream& os, const GridSpec& spec, const std::vector<double>& values) {
  for (int r = spec.size - 1; r >= 0; --r)
    for (int c = 0; c < spec.size; ++c)
      os << detail::fmt(values[spec.cell(r, c)], 6) << (c + 1 < spec.size ? ',' : '\n');
}

inline std::vector<int> read_partition_grid(std::istream& is, const GridSpec& spec) {
  std::vector<int> out(spec.cells(), 0);
  std::string line;
  for (int r = spec.size - 1; r >= 0; --r) {
    if (!std::getline(is, line)) throw std::runtime_error("partition grid: too few rows");
    std::istringstream ls(line);
    std::string item;
    for (int c = 0; c < spec.size; ++c) {
      if (!std::getline(ls, item, ',')) throw std::runtime_error("partition grid: too few columns");
      out[spec.cell(r, c)] = std::stoi(item);
    }
  }
  return out;
}

/// Seed-level rows collapsed to one row per (scheme, rate): mean of the
/// normalized return and its standard error across seeds.
struct AggregateRow {
  std::string scheme;
  int rate = 0;
  std::size_t seeds = 0;
  double normalized = kNaN;
  double normalized_se = kNaN;
  double smoothed_normalized = kNaN;
};

inline std::vector<AggregateRow> aggregate(const std::vector<SummaryRow>& rows) {
  std::map<std::pair<std::string, int>, std::vector<const SummaryRow*>> groups;
  for (const auto& r : rows)
    if (r.status == "ok") groups[{r.scheme, r.rate}].push_back(&r);
  std::vector<AggregateRow> out;
  for (const auto& [key, members] : groups) {
    AggregateRow a;
    a.scheme = key.first;
    a.rate = key.second;
    a.seeds = members.size();
    double sum = 0.0, smooth_sum = 0.0;
    for (const auto* m : members) {
      sum += m->normalized;
      smooth_sum += m->smoothed_normalized;
    }
    const double n = static_cast<double>(members.size());
    a.normalized = sum / n;
    double ss = 0.0;
    for (const auto* m : members) ss += (m->normalized - a.normalized) * (m->normalized - a.normalized);
    a.normalized_se = n > 1 ? std::sqrt(ss / (n - 1) / n) : 0.0;
    a.smoothed_normalized = smooth_sum / n;
    out.push_back(a);
  }
  return out;
}

inline void write_aggregate(std::ostream& os, const std::vector<AggregateRow>& rows) {
  os << "scheme,rate,seeds,normalized,normalized_se,smoothed_normalized\n";
  for (const auto& a : rows)
    os << a.scheme << ',' << a.rate << ',' << a.seeds << ',' << detail::fmt(a.normalized, 6) << ','
       << detail::fmt(a.normalized_se, 6) << ',' << detail::fmt(a.smoothed_normalized, 6) << '\n';
}

inline std::string cell_tag(const Cell& c) {
  return c.scheme + "_R" + std::to_string(c.rate) + "_seed" + std::to_string(c.seed);
}

/// Writes config.cfg, curves.csv, summary.csv, aggregate.csv, and a
/// partition grid (plus a value grid for SAIC) per partitioned cell.
inline void write_outputs(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                          const std::vector<CellOutcome>& outcomes) {
  std::filesystem::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream os(dir / name);
    if (!os) throw std::runtime_error("cannot write " + (dir / name).string());
    return os;
  };
  {
    auto os = open("config.cfg");
    os << cfg.to_text();
  }
  std::vector<SummaryRow> rows;
  {
    auto curves = open("curves.csv");
    auto summary = open("summary.csv");
    write_curves_header(curves);
    summary << summary_header() << '\n';
    for (const auto& c : outcomes) {
      if (c.ok) write_curve_rows(curves, c.result, cfg.smooth_window, cfg.curve_stride);
      rows.push_back(summary_row(c));
      write_summary_row(summary, rows.back());
    }
  }
  {
    auto os = open("aggregate.csv");
    write_aggregate(os, aggregate(rows));
  }
  for (const auto& c : outcomes) {
    if (!c.ok) continue;
    if (c.result.partition) {
      auto os = open("partition_" + cell_tag(c.cell) + ".csv");
      write_partition_grid(os, cfg.spec, c.result.partition->assignment);
    }
    if (c.result.values) {
      auto os = open("values_" + cell_tag(c.cell) + ".csv");
      write_value_grid(os, cfg.spec, *c.result.values);
    }
  }
}

/// `<config hash>-<UTC timestamp>` under `root`.
inline std::filesystem::path run_directory(const std::filesystem::path& root, const ExperimentConfig& cfg) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &tm);
  return root / (cfg.hash() + "-" + stamp);
}

struct SweepResult {
  std::vector<CellOutcome> cells;
  std::size_t failures() const {
    return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](const auto& c) { return !c.ok; }));
  }
};

/// Validates, runs every cell, and writes the outputs into `dir` when it is
/// non-empty. Failed cells are recorded and the sweep carries on.
inline SweepResult run_sweep(const ExperimentConfig& cfg, const std::filesystem::path& dir = {}) {
  cfg.validate();
  SweepResult out;
  out.cells = run_cells(cfg, cells_of(cfg));
  if (!dir.empty()) write_outputs(dir, cfg, out.cells);
  return out;
}

}  // namespace saic
