// Command-line front end for the experiment harness.

#include <fmt/format.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <numeric>

#include "drps/errors.hpp"
#include "drps/harness.hpp"

namespace {

struct CommonOptions {
  std::string config_path;
  std::string preset_name;
  int seeds = 0;
  std::string out_dir;
  int workers = 1;
};

int default_workers() {
  if (const char* env = std::getenv("DRPS_WORKERS")) {
    try {
      return std::max(1, std::stoi(env));
    } catch (const std::exception&) {
      throw drps::ConfigError(fmt::format("DRPS_WORKERS='{}' is not an integer", env));
    }
  }
  return 1;
}

void add_common(CLI::App* cmd, CommonOptions& opts) {
  auto* config = cmd->add_option("--config", opts.config_path, "experiment config file");
  auto* preset = cmd->add_option("--preset", opts.preset_name, "named preset (see `presets`)");
  config->excludes(preset);
  cmd->add_option("--seeds", opts.seeds, "number of seeds")->check(CLI::PositiveNumber);
  cmd->add_option("--out", opts.out_dir, "output directory");
  cmd->add_option("--workers", opts.workers, "worker threads (default: DRPS_WORKERS or 1)")
      ->check(CLI::PositiveNumber);
}

drps::ExperimentConfig resolve(const CommonOptions& opts, const std::string& fallback_preset) {
  drps::ExperimentConfig cfg;
  if (!opts.config_path.empty())
    cfg = drps::load_config(opts.config_path);
  else
    cfg = drps::preset(opts.preset_name.empty() ? fallback_preset : opts.preset_name);
  if (opts.seeds > 0) cfg.n_seeds = opts.seeds;
  if (!opts.out_dir.empty()) cfg.output = opts.out_dir;
  cfg.validate();
  return cfg;
}

int cmd_run(const CommonOptions& opts) {
  const auto cfg = resolve(opts, "lqr-full-table3");
  const auto result = drps::run_experiment(cfg, opts.workers);
  drps::emit_outputs(result, cfg.output);
  for (const auto& f : result.failures) fmt::print(stderr, "seed {} failed at epoch {}: {}\n", f.seed, f.epoch, f.message);
  const auto rows = drps::aggregate(result);
  if (!rows.empty()) {
    const auto& last = rows.back();
    fmt::print("epoch {} episodes {} mean return {:.6g} over {} seeds ({} failed)\n", last.epoch, last.episodes,
               last.mean, last.n_seeds, last.failures);
  }
  fmt::print("wrote {}\n", cfg.output);
  return static_cast<int>(result.failures.size()) == result.n_seeds ? 2 : 0;
}

int cmd_pr_study(const CommonOptions& opts) {
  const auto cfg = resolve(opts, "lqr-pr-table5");
  const auto records = drps::run_precision_recall_study(cfg, opts.workers);
  const std::filesystem::path path = std::filesystem::path(cfg.output) / "precision_recall.csv";
  drps::write_precision_recall_csv(records, path);
  for (auto m : cfg.pr_m) {
    int last = -1;
    for (const auto& r : records)
      if (r.m == m) last = std::max(last, r.epoch);
    double p = 0.0, rc = 0.0;
    int count = 0;
    for (const auto& r : records)
      if (r.m == m && r.epoch == last) {
        p += r.precision;
        rc += r.recall;
        ++count;
      }
    if (count > 0) fmt::print("m={} epoch {}: precision {:.4f} recall {:.4f}\n", m, last, p / count, rc / count);
  }
  fmt::print("wrote {}\n", path.string());
  return records.empty() ? 2 : 0;
}

int cmd_mi_bench(const CommonOptions& opts) {
  const auto cfg = resolve(opts, "mi-bench");
  const auto seeds = cfg.seeds();
  const auto records = drps::run_mi_benchmark(cfg.mi_bench, seeds, cfg.algorithm.mi);
  const std::filesystem::path path = std::filesystem::path(cfg.output) / "mi_bench.csv";
  drps::write_mi_bench_csv(records, path);
  for (auto n : cfg.mi_bench.sample_counts) {
    std::string line = fmt::format("N={:<5}", n);
    for (const char* name : {"histogram", "ksg", "knn-regression"}) {
      double sum = 0.0;
      int count = 0;
      for (const auto& r : records)
        if (r.sample_count == n && r.estimator == name && r.error.empty()) {
          sum += r.abs_error;
          ++count;
        }
      line += fmt::format("  {} |err| {:.4f}", name, count ? sum / count : std::nan(""));
    }
    fmt::print("{}\n", line);
  }
  fmt::print("wrote {}\n", path.string());
  return 0;
}

int cmd_lqr_oracle(const CommonOptions& opts) {
  const auto cfg = resolve(opts, "lqr-full-table3");
  if (cfg.environment.kind != drps::EnvironmentKind::Lqr) throw drps::ConfigError("lqr-oracle needs an LQR config");
  const auto env = std::get<drps::LqrEnv>(cfg.environment.build());
  const auto sol = drps::lqr_riccati(env);
  const auto policy = drps::LinearGainPolicy::from_feedback_gain(sol.k);
  const auto episode = drps::lqr_episode(env, policy);
  fmt::print("ineffective dims: {}\n", fmt::join(env.ineffective_dims, " "));
  fmt::print("K* diagonal:");
  for (drps::Index i = 0; i < sol.k.rows(); ++i) fmt::print(" {:.8f}", sol.k(i, i));
  fmt::print("\noptimal return: {:.10g}\n", episode.discounted_return);
  fmt::print("effective parameters: {}\n", fmt::join(drps::lqr_effective_parameters(env), " "));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Episodic policy search with dimensionality reduction and prioritized exploration"};
  app.require_subcommand(1);
  CommonOptions opts;
  try {
    opts.workers = default_workers();
  } catch (const drps::ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return 1;
  }

  auto* run = app.add_subcommand("run", "multi-seed learning run");
  auto* pr = app.add_subcommand("pr-study", "precision/recall of parameter identification");
  auto* mi = app.add_subcommand("mi-bench", "MI estimator benchmark");
  auto* oracle = app.add_subcommand("lqr-oracle", "print the Riccati gain and optimal return");
  auto* presets = app.add_subcommand("presets", "list presets, or print one with --preset");
  for (auto* cmd : {run, pr, mi, oracle}) add_common(cmd, opts);
  presets->add_option("--preset", opts.preset_name, "preset to print");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*run) return cmd_run(opts);
    if (*pr) return cmd_pr_study(opts);
    if (*mi) return cmd_mi_bench(opts);
    if (*oracle) return cmd_lqr_oracle(opts);
    if (opts.preset_name.empty()) {
      for (const auto& name : drps::preset_names()) fmt::print("{}\n", name);
    } else {
      fmt::print("{}", drps::format_config(drps::preset(opts.preset_name)));
    }
    return 0;
  } catch (const drps::ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  }
}
