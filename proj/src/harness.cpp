#include <fmt/format.h>

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "drps/errors.hpp"
#include "drps/harness.hpp"
#include "drps/random.hpp"

namespace drps {

namespace {

enum StreamTag : std::uint64_t { kSampleTag = 1, kRolloutTag = 2, kSelectTag = 3, kEvalSampleTag = 4, kEvalRolloutTag = 5 };

using EpochHook = std::function<void(int epoch, const SearchState& state)>;

struct SeedOutcome {
  std::vector<LearningCurveRecord> records;
  std::optional<FailureRecord> failure;
};

double evaluate_dist(const Environment& env, const GaussianDist& dist, std::uint64_t seed, int epoch, Index count,
                     int workers) {
  const auto e = static_cast<std::uint64_t>(epoch);
  const Matrix thetas = sample(dist, derive_seed(seed, {e, kEvalSampleTag}), count);
  return evaluate_batch(env, thetas, derive_seed(seed, {e, kEvalRolloutTag}), workers).mean();
}

SeedOutcome run_seed(const ExperimentConfig& config, const Environment& env, std::uint64_t seed, int workers,
                     const EpochHook& hook) {
  SeedOutcome out;
  const Index n = parameter_count(env);
  int epoch = 0;
  try {
    SearchState state(GaussianDist::isotropic(n, config.environment.sigma_init));
    LearningCurveRecord first;
    first.seed = seed;
    first.mean_return = evaluate_dist(env, state.dist, seed, 0, config.eval_episodes, workers);
    first.entropy = entropy(state.dist);
    out.records.push_back(first);
    if (hook) hook(0, state);

    for (epoch = 1; epoch <= config.n_epochs; ++epoch) {
      const auto e = static_cast<std::uint64_t>(epoch);
      Matrix thetas = sample(state.sampling_dist, derive_seed(seed, {e, kSampleTag}), config.episodes_per_fit);
      Vector returns = evaluate_batch(env, thetas, derive_seed(seed, {e, kRolloutTag}), workers);
      const SampleBatch batch(std::move(thetas), std::move(returns));
      SearchState next = update(state, batch, config.algorithm, derive_seed(seed, {e, kSelectTag}));

      LearningCurveRecord rec;
      rec.seed = seed;
      rec.epoch = epoch;
      rec.episodes = static_cast<Index>(epoch) * config.episodes_per_fit;
      rec.kl = std::max(0.0, kl_divergence(state.dist, next.dist));
      rec.entropy = entropy(next.dist);
      rec.mean_return = evaluate_dist(env, next.dist, seed, epoch, config.eval_episodes, workers);
      if (next.split) rec.selection = next.split->effective;
      state = std::move(next);
      out.records.push_back(std::move(rec));
      if (hook) hook(epoch, state);
    }
  } catch (const Error& e) {
    out.failure = FailureRecord{seed, epoch, e.what()};
  }
  return out;
}

// Runs job(i) for i in [0, count) on up to `workers` threads.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& job) {
  const std::size_t n_workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), 1, count);
  if (n_workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n_workers);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < count; i += n_workers) job(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);
}

int inner_workers(int workers, std::size_t seeds) {
  return std::max(1, workers / static_cast<int>(std::max<std::size_t>(seeds, 1)));
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, int workers) {
  config.validate();
  const Environment env = config.environment.build();
  const auto seeds = config.seeds();
  std::vector<SeedOutcome> outcomes(seeds.size());
  const int inner = inner_workers(workers, seeds.size());
  parallel_for(seeds.size(), workers,
               [&](std::size_t i) { outcomes[i] = run_seed(config, env, seeds[i], inner, EpochHook{}); });

  ExperimentResult result;
  result.n_seeds = static_cast<int>(seeds.size());
  for (auto& o : outcomes) {
    for (auto& r : o.records) result.records.push_back(std::move(r));
    if (o.failure) result.failures.push_back(*o.failure);
  }
  std::stable_sort(result.records.begin(), result.records.end(), [](const auto& a, const auto& b) {
    return std::tie(a.seed, a.epoch) < std::tie(b.seed, b.epoch);
  });
  std::stable_sort(result.failures.begin(), result.failures.end(),
                   [](const auto& a, const auto& b) { return a.seed < b.seed; });
  return result;
}

std::optional<double> ci95_half_width(const std::vector<double>& values) {
  if (values.size() < 2) return std::nullopt;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  const boost::math::students_t dist(n - 1.0);
  return boost::math::quantile(dist, 0.975) * sd / std::sqrt(n);
}

std::vector<AggregateRecord> aggregate(const ExperimentResult& result) {
  std::vector<std::uint64_t> failed;
  for (const auto& f : result.failures) failed.push_back(f.seed);
  std::sort(failed.begin(), failed.end());
  failed.erase(std::unique(failed.begin(), failed.end()), failed.end());

  std::map<int, std::pair<Index, std::vector<double>>> by_epoch;
  for (const auto& r : result.records) {
    if (std::binary_search(failed.begin(), failed.end(), r.seed)) continue;
    auto& slot = by_epoch[r.epoch];
    slot.first = r.episodes;
    slot.second.push_back(r.mean_return);
  }
  std::vector<AggregateRecord> rows;
  for (const auto& [epoch, slot] : by_epoch) {
    const auto& values = slot.second;
    AggregateRecord row;
    row.epoch = epoch;
    row.episodes = slot.first;
    row.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (auto h = ci95_half_width(values)) row.ci95 = std::make_pair(row.mean - *h, row.mean + *h);
    row.n_seeds = static_cast<int>(values.size());
    row.failures = static_cast<int>(failed.size());
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// parameter identification

std::pair<double, double> precision_recall(const IndexSet& selected, const IndexSet& truth) {
  if (selected.empty() || truth.empty()) throw InvalidArgument("precision/recall needs nonempty selection and truth");
  IndexSet s = selected, t = truth;
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  IndexSet common;
  std::set_intersection(s.begin(), s.end(), t.begin(), t.end(), std::back_inserter(common));
  const double hits = static_cast<double>(common.size());
  return {hits / static_cast<double>(s.size()), hits / static_cast<double>(t.size())};
}

IndexSet map_rotated_to_original(const Matrix& u, const IndexSet& rotated) {
  if (u.rows() != u.cols()) throw DimensionMismatch("rotation must be square");
  const Index n = u.rows();
  struct Entry {
    double loading;
    Index row;
    Index col;
  };
  std::vector<Entry> entries;
  entries.reserve(static_cast<std::size_t>(n * n));
  for (Index c = 0; c < n; ++c)
    for (Index r = 0; r < n; ++r) entries.push_back({std::abs(u(r, c)), r, c});
  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.loading != b.loading) return a.loading > b.loading;
    return std::tie(a.col, a.row) < std::tie(b.col, b.row);
  });
  std::vector<Index> assigned(static_cast<std::size_t>(n), -1);
  std::vector<bool> taken(static_cast<std::size_t>(n), false);
  for (const auto& e : entries) {
    auto& slot = assigned[static_cast<std::size_t>(e.col)];
    if (slot >= 0 || taken[static_cast<std::size_t>(e.row)]) continue;
    slot = e.row;
    taken[static_cast<std::size_t>(e.row)] = true;
  }
  IndexSet out;
  for (auto j : rotated) {
    if (j < 0 || j >= n) throw InvalidArgument(fmt::format("rotated index {} out of range", j));
    out.push_back(assigned[static_cast<std::size_t>(j)]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<PrecisionRecallRecord> run_precision_recall_study(const ExperimentConfig& config, int workers) {
  if (config.environment.kind != EnvironmentKind::Lqr) throw ConfigError("the precision/recall study needs the LQR");
  if (!is_dimensionality_reduced(config.algorithm.algorithm))
    throw ConfigError("the precision/recall study needs DR-REPS or DR-CREPS");
  const Environment env = config.environment.build();
  const IndexSet truth = lqr_effective_parameters(std::get<LqrEnv>(env));
  const auto seeds = config.seeds();

  std::vector<std::pair<Index, std::uint64_t>> jobs;
  for (auto m : config.pr_m)
    for (auto s : seeds) jobs.emplace_back(m, s);
  std::vector<std::vector<PrecisionRecallRecord>> per_job(jobs.size());
  const int inner = inner_workers(workers, jobs.size());

  parallel_for(jobs.size(), workers, [&](std::size_t i) {
    auto [m, seed] = jobs[i];
    ExperimentConfig cfg = config;
    cfg.algorithm.m = m;
    cfg.validate();
    auto& out = per_job[i];
    run_seed(cfg, env, seed, inner, [&](int epoch, const SearchState& state) {
      if (!state.frame || !state.split) return;
      const auto [p, r] = precision_recall(map_rotated_to_original(state.frame->u, state.split->effective), truth);
      out.push_back({seed, epoch, m, cfg.algorithm.metric, p, r});
    });
  });

  std::vector<PrecisionRecallRecord> records;
  for (auto& job : per_job)
    for (auto& r : job) records.push_back(r);
  std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    return std::tie(a.m, a.seed, a.epoch) < std::tie(b.m, b.seed, b.epoch);
  });
  return records;
}

// ---------------------------------------------------------------------------
// MI estimator benchmark

std::vector<MiBenchRecord> run_mi_benchmark(const MiBenchSettings& settings, const std::vector<std::uint64_t>& seeds,
                                            const MiOptions& options) {
  if (settings.sample_counts.empty()) throw ConfigError("MI benchmark needs at least one sample count");
  if (!(settings.sigma_x > 0.0)) throw ConfigError("sigma_x must be positive");
  const Index max_n = *std::max_element(settings.sample_counts.begin(), settings.sample_counts.end());

  Vector xs(max_n);
  {
    Rng rng(derive_seed(0x5eedULL, {1}));
    std::normal_distribution<double> normal(0.0, settings.sigma_x);
    for (Index i = 0; i < max_n; ++i) xs(i) = normal(rng);
  }

  std::vector<MiBenchRecord> records;
  for (auto seed : seeds) {
    Rng rng(derive_seed(seed, {2}));
    std::uniform_real_distribution<double> coef(0.5, 2.0);
    const double a = settings.a ? *settings.a : coef(rng);
    const double sigma_e = settings.sigma_e ? *settings.sigma_e : coef(rng);
    const double analytic = analytic_gaussian_mi(GaussianLinearModel::scalar(a, settings.sigma_x, sigma_e));
    std::normal_distribution<double> normal(0.0, sigma_e);
    Vector ys(max_n);
    for (Index i = 0; i < max_n; ++i) ys(i) = a * xs(i) + normal(rng);

    for (auto count : settings.sample_counts) {
      const Vector x = xs.head(count);
      const Vector y = ys.head(count);
      const std::array<std::pair<std::string, std::function<double()>>, 3> estimators{{
          {"histogram", [&] { return mi_histogram(x, y, options.bins); }},
          {"ksg", [&] { return mi_ksg(x, y, options.neighbors, seed); }},
          {"knn-regression", [&] { return mi_knn_regression(x, y, options.neighbors, seed); }},
      }};
      for (const auto& [name, estimate] : estimators) {
        MiBenchRecord rec;
        rec.estimator = name;
        rec.sample_count = count;
        rec.seed = seed;
        rec.analytic_value = analytic;
        try {
          rec.estimate = estimate();
          rec.abs_error = std::abs(rec.estimate - analytic);
        } catch (const Error& e) {
          rec.estimate = std::nan("");
          rec.abs_error = std::nan("");
          rec.error = e.what();
        }
        records.push_back(std::move(rec));
      }
    }
  }
  return records;
}

}  // namespace drps
