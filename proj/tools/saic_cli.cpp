#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "saic/aggregation.hpp"
#include "saic/harness.hpp"
#include "saic/schemes.hpp"

namespace fs = std::filesystem;
using namespace saic;

#ifndef SAIC_PRESET_DIR
#define SAIC_PRESET_DIR "presets"
#endif

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string out_root = "runs";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "key=value config file");
  cmd->add_option("-s,--set", c.sets, "override a config key (key=value), repeatable");
}

ExperimentConfig build_config(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  for (const auto& s : c.sets) cfg.apply(s);
  return cfg;
}

/// A bare name resolves to a shipped preset; anything else is a path.
fs::path resolve_preset(const std::string& name) {
  if (fs::exists(name)) return name;
  for (const fs::path dir : {fs::path("presets"), fs::path(SAIC_PRESET_DIR)}) {
    const fs::path p = dir / (name + ".cfg");
    if (fs::exists(p)) return p;
  }
  throw std::runtime_error("no config or preset named '" + name + "'");
}

TrainConfig train_of(const ExperimentConfig& cfg) {
  TrainConfig t = cfg.train;
  t.seed = cfg.seeds.front();
  return t;
}

void print_outcomes(const std::vector<CellOutcome>& cells) {
  std::printf("%-12s %4s %6s %12s %12s %12s\n", "scheme", "rate", "seed", "return", "normalized", "smoothed");
  for (const auto& c : cells) {
    if (!c.ok) {
      std::printf("%-12s %4d %6llu  FAILED: %s\n", c.cell.scheme.c_str(), c.cell.rate,
                  static_cast<unsigned long long>(c.cell.seed), c.error.c_str());
      continue;
    }
    std::printf("%-12s %4d %6llu %12.6f %12.6f %12.6f\n", c.cell.scheme.c_str(), c.cell.rate,
                static_cast<unsigned long long>(c.cell.seed), c.result.mean, c.result.normalized,
                c.smoothed_normalized);
  }
}

int run_cells_cmd(const ExperimentConfig& cfg, const std::string& out_root) {
  cfg.validate();
  const fs::path dir = run_directory(out_root, cfg);
  const auto res = run_sweep(cfg, dir);
  print_outcomes(res.cells);
  std::printf("artifacts: %s\n", dir.string().c_str());
  return res.failures() ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Value-based observation aggregation for rate-limited rendezvous"};
  app.require_subcommand(1);

  // train-central
  Common tc;
  std::string tc_out = "central.qtable";
  auto* train_central = app.add_subcommand("train-central", "train the centralized learner and dump its Q-table");
  add_common(train_central, tc);
  train_central->add_option("-o,--out", tc_out, "Q-table dump path");

  // aggregate
  Common ag;
  std::string ag_qtable, ag_out = ".";
  auto* aggregate_cmd = app.add_subcommand("aggregate", "cluster marginal values of a centralized Q-table");
  add_common(aggregate_cmd, ag);
  aggregate_cmd->add_option("-q,--qtable", ag_qtable, "centralized Q-table dump")->required();
  aggregate_cmd->add_option("-o,--out", ag_out, "output directory");

  // train-dist
  Common td;
  std::string td_partition, td_comm = "identity", td_out = ".";
  auto* train_dist = app.add_subcommand("train-dist", "train two agents over a fixed communication map");
  add_common(train_dist, td);
  train_dist->add_option("-p,--partition", td_partition, "partition grid CSV (overrides --comm)");
  train_dist->add_option("--comm", td_comm, "identity or constant")->check(CLI::IsMember({"identity", "constant"}));
  train_dist->add_option("-o,--out", td_out, "output directory for agent Q-tables");

  // run
  Common rn;
  std::string rn_scheme;
  auto* run = app.add_subcommand("run", "run one scheme for every configured rate and seed");
  add_common(run, rn);
  run->add_option("scheme", rn_scheme, "scheme name")->required();
  run->add_option("-o,--out", rn.out_root, "root directory for run artifacts");

  // sweep
  Common sw;
  std::string sw_target;
  auto* sweep = app.add_subcommand("sweep", "run a preset or config file");
  sweep->add_option("target", sw_target, "preset name (schemes_r2, maps, rate_sweep, ratio_sweep) or config path")->required();
  sweep->add_option("-s,--set", sw.sets, "override a config key (key=value), repeatable");
  sweep->add_option("-o,--out", sw.out_root, "root directory for run artifacts");

  // report
  std::string rp_dir;
  auto* report = app.add_subcommand("report", "summarize a run directory");
  report->add_option("run_dir", rp_dir, "run directory")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_central) {
      const auto cfg = build_config(tc);
      const Context ctx(cfg.spec, train_of(cfg));
      const auto c = train_centralized(ctx.spec, ctx.cfg);
      std::ofstream os(tc_out);
      if (!os) throw std::runtime_error("cannot write " + tc_out);
      save(os, c.table, ctx.cfg.gamma, ctx.cfg.seed);
      const auto ev = evaluate_exact(ctx.spec, greedy_policy(ctx.spec, c.table), ctx.cfg.gamma, ctx.cfg.horizon);
      std::printf("greedy return %.6f  optimum %.6f  normalized %.6f\nwrote %s\n", ev.mean, ctx.optimum,
                  normalize(ev.mean, ctx.optimum), tc_out.c_str());
      return 0;
    }
    if (*aggregate_cmd) {
      const auto cfg = build_config(ag);
      cfg.spec.validate();
      std::ifstream is(ag_qtable);
      if (!is) throw std::runtime_error("cannot open " + ag_qtable);
      QTableHeader header;
      const auto table = load_central(is, &header);
      if (table.grid_size != cfg.spec.size) throw std::runtime_error("Q-table grid size does not match grid_size");
      const auto obs = reset_distribution(cfg.spec);
      const auto values = marginal_value(table, obs);
      fs::create_directories(ag_out);
      for (int rate : cfg.rates) {
        const auto p = kmedian_1d(values, 1 << rate);
        const auto comm = comm_policy_from_partition(p, rate);
        const double eps = epsilon_of_partition(values, p);
        const auto ratio = compression_ratio(obs, message_distribution(comm, obs));
        const fs::path file = fs::path(ag_out) / ("partition_R" + std::to_string(rate) + ".csv");
        std::ofstream os(file);
        write_partition_grid(os, cfg.spec, p.assignment);
        std::printf("R=%d clusters=%d epsilon=%.6f bound=%.6f ratio=%s -> %s\n", rate, p.clusters, eps,
                    return_gap_bound(eps, header.gamma), ratio.str().c_str(), file.string().c_str());
      }
      std::ofstream vs(fs::path(ag_out) / "values.csv");
      write_value_grid(vs, cfg.spec, values);
      return 0;
    }
    if (*train_dist) {
      const auto cfg = build_config(td);
      const Context ctx(cfg.spec, train_of(cfg));
      CommPolicy comm = td_comm == "constant" ? CommPolicy::constant(ctx.spec) : CommPolicy::identity(ctx.spec);
      if (!td_partition.empty()) {
        std::ifstream is(td_partition);
        if (!is) throw std::runtime_error("cannot open " + td_partition);
        auto assignment = read_partition_grid(is, ctx.spec);
        int clusters = 0;
        for (int a : assignment) clusters = std::max(clusters, a + 1);
        comm = CommPolicy(std::move(assignment), bits_for(clusters));
      }
      const auto d = train_distributed(ctx.spec, comm, comm, ctx.cfg, cfg.options.rule);
      fs::create_directories(td_out);
      std::ofstream a1(fs::path(td_out) / "agent1.qtable"), a2(fs::path(td_out) / "agent2.qtable");
      save(a1, d.agent1.table, ctx.cfg.gamma, ctx.cfg.seed);
      save(a2, d.agent2.table, ctx.cfg.gamma, ctx.cfg.seed);
      const auto ev = evaluate_exact(ctx.spec, greedy_policy(d.agent1.table, d.agent2.table, comm, comm),
                                     ctx.cfg.gamma, ctx.cfg.horizon);
      std::printf("rate %d  greedy return %.6f  normalized %.6f\n", comm.rate(), ev.mean,
                  normalize(ev.mean, ctx.optimum));
      return 0;
    }
    if (*run) {
      auto cfg = build_config(rn);
      cfg.schemes = {rn_scheme};
      return run_cells_cmd(cfg, rn.out_root);
    }
    if (*sweep) {
      auto cfg = load_config(resolve_preset(sw_target));
      for (const auto& s : sw.sets) cfg.apply(s);
      return run_cells_cmd(cfg, sw.out_root);
    }
    if (*report) {
      std::ifstream is(fs::path(rp_dir) / "summary.csv");
      if (!is) throw std::runtime_error("no summary.csv in " + rp_dir);
      const auto rows = read_summary(is);
      write_aggregate(std::cout, aggregate(rows));
      std::size_t failed = 0;
      for (const auto& r : rows)
        if (r.status != "ok") {
          ++failed;
          std::printf("failed: %s R=%d seed=%llu: %s\n", r.scheme.c_str(), r.rate,
                      static_cast<unsigned long long>(r.seed), r.status.c_str());
        }
      return failed ? 1 : 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
