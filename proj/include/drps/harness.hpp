#pragma once

// Experiment harness: configuration, multi-seed learning runs, the
// parameter-identification study, the MI-estimator benchmark and CSV output.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "drps/environments.hpp"
#include "drps/policy_search.hpp"

namespace drps {

enum class EnvironmentKind { Lqr, ShipSteering };

struct EnvironmentSpec {
  EnvironmentKind kind = EnvironmentKind::Lqr;
  Index lqr_dim = 10;
  Index lqr_ineffective = 7;
  std::uint64_t env_seed = 0;
  int horizon = 50;
  double discount = 0.99;
  double clip = 1.0;
  double sigma_init = 0.3;  // initial search distribution N(0, σ²I)

  Environment build() const;
};

struct MiBenchSettings {
  std::vector<Index> sample_counts{25, 50, 100, 200, 500, 1000};
  std::optional<double> a;        // randomized per seed when absent
  std::optional<double> sigma_e;  // randomized per seed when absent
  double sigma_x = 1.0;
};

struct ExperimentConfig {
  EnvironmentSpec environment;
  AlgorithmConfig algorithm;
  Index episodes_per_fit = 50;
  int n_epochs = 100;
  int n_seeds = 25;
  std::uint64_t first_seed = 0;
  Index eval_episodes = 25;
  std::string output = "out";
  std::vector<Index> pr_m{10, 30, 50};
  MiBenchSettings mi_bench;

  /// Throws ConfigError.
  void validate() const;
  std::vector<std::uint64_t> seeds() const;
};

/// INI-style document with [environment], [algorithm] and [run] sections.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string format_config(const ExperimentConfig& config);

std::vector<std::string> preset_names();
/// Throws ConfigError for unknown names.
ExperimentConfig preset(const std::string& name);

// ---------------------------------------------------------------------------
// learning curves

struct LearningCurveRecord {
  std::uint64_t seed = 0;
  int epoch = 0;
  Index episodes = 0;  // cumulative training episodes
  double mean_return = 0.0;
  double kl = 0.0;
  double entropy = 0.0;
  std::optional<IndexSet> selection;
};

struct FailureRecord {
  std::uint64_t seed = 0;
  int epoch = 0;
  std::string message;
};

struct ExperimentResult {
  std::vector<LearningCurveRecord> records;  // sorted by seed, then epoch
  std::vector<FailureRecord> failures;       // sorted by seed
  int n_seeds = 0;
};

struct AggregateRecord {
  int epoch = 0;
  Index episodes = 0;
  double mean = 0.0;
  std::optional<std::pair<double, double>> ci95;  // absent for a single seed
  int n_seeds = 0;
  int failures = 0;
};

/// One learning run per seed. Seeds run on up to `workers` threads; the
/// result is identical for any worker count.
ExperimentResult run_experiment(const ExperimentConfig& config, int workers = 1);

/// Per-epoch mean and t-distribution 95% interval over seeds that did not fail.
std::vector<AggregateRecord> aggregate(const ExperimentResult& result);

/// Half-width of the two-sided 95% t interval of the mean; nullopt for n < 2.
std::optional<double> ci95_half_width(const std::vector<double>& values);

// ---------------------------------------------------------------------------
// parameter identification

struct PrecisionRecallRecord {
  std::uint64_t seed = 0;
  int epoch = 0;
  Index m = 0;
  Metric metric = Metric::Pcc;
  double precision = 0.0;
  double recall = 0.0;
};

/// (|S ∩ T| / |S|, |S ∩ T| / |T|). Throws InvalidArgument on empty sets.
std::pair<double, double> precision_recall(const IndexSet& selected, const IndexSet& truth);

/// Maps rotated directions to original coordinates by a one-to-one greedy
/// matching on |loading| (largest first). Identity for an identity frame.
IndexSet map_rotated_to_original(const Matrix& u, const IndexSet& rotated);

/// DR-CREPS/DR-REPS on the LQR for each m in config.pr_m, scoring every
/// epoch's selection against the support of the optimal gain.
std::vector<PrecisionRecallRecord> run_precision_recall_study(const ExperimentConfig& config, int workers = 1);

// ---------------------------------------------------------------------------
// MI estimator benchmark

struct MiBenchRecord {
  std::string estimator;
  Index sample_count = 0;
  std::uint64_t seed = 0;
  double estimate = 0.0;
  double analytic_value = 0.0;
  double abs_error = 0.0;
  std::string error;  // nonempty when the estimator failed
};

std::vector<MiBenchRecord> run_mi_benchmark(const MiBenchSettings& settings, const std::vector<std::uint64_t>& seeds,
                                            const MiOptions& options = {});

// ---------------------------------------------------------------------------
// output

void write_learning_curve_csv(const std::vector<LearningCurveRecord>& records, const std::filesystem::path& path);
void write_aggregate_csv(const std::vector<AggregateRecord>& rows, const std::filesystem::path& path);
void write_plot_data(const std::vector<AggregateRecord>& rows, const std::filesystem::path& path);
void write_failures_csv(const std::vector<FailureRecord>& failures, const std::filesystem::path& path);
void write_precision_recall_csv(const std::vector<PrecisionRecallRecord>& records, const std::filesystem::path& path);
void write_mi_bench_csv(const std::vector<MiBenchRecord>& records, const std::filesystem::path& path);

/// learning_curve.csv, aggregate.csv, failures.csv and plot.dat under `dir`.
void emit_outputs(const ExperimentResult& result, const std::filesystem::path& dir);

}  // namespace drps
