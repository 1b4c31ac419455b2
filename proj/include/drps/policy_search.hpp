#pragma once

// Episodic policy-search updates over a Gaussian search distribution:
// REPS and C-REPS, their dimensionality-reduced variants with prioritized
// exploration (DR-REPS, DR-CREPS), and the RWR / CEM baselines.

#include <cstdint>
#include <optional>
#include <string_view>

#include "drps/correlation.hpp"
#include "drps/gaussian.hpp"

namespace drps {

enum class Algorithm { Reps, Creps, DrReps, DrCreps, Rwr, Cem };

std::string_view to_string(Algorithm algorithm);
std::optional<Algorithm> parse_algorithm(std::string_view text);
bool is_dimensionality_reduced(Algorithm algorithm);

struct AlgorithmConfig {
  Algorithm algorithm = Algorithm::DrCreps;
  double eps = 4.7;
  double kappa = 17.0;
  Index m = 50;
  double lambda = 0.1;  // exploration scaling of ineffective directions; 1 disables PE
  Metric metric = Metric::MiKnnRegression;
  MiOptions mi{};
  double beta = 0.2;
  Index elite_count = 25;
  CovarianceKind covariance = CovarianceKind::Full;
  // false: DR algorithms refit every rotated coordinate and use the split for
  // prioritized exploration only
  bool reduce = true;

  /// Range checks for every field, and m <= n when `dim` is given.
  void validate(std::optional<Index> dim = std::nullopt) const;
};

struct SearchState {
  GaussianDist dist;                  // target distribution
  GaussianDist sampling_dist;         // exploration-scaled copy used for sampling
  std::optional<RotatedFrame> frame;  // frame of the previous dist used by the last DR update
  std::optional<EffectiveSplit> split;
  int epoch = 0;

  explicit SearchState(GaussianDist initial);
  SearchState(GaussianDist dist_, GaussianDist sampling_, std::optional<RotatedFrame> frame_,
              std::optional<EffectiveSplit> split_, int epoch_);
};

struct DualSolution {
  double eta_star = 1.0;
  double dual_value = 0.0;
  bool flat = false;  // all returns equal; weights are uniform
};

/// REPS dual g(η) = η·eps + η·ln mean exp((J − max J)/η) + max J, minimized
/// over η ∈ [1e-8, 1e8]·range(J).
DualSolution reps_dual_minimize(const Vector& returns, double eps);

/// Value of the REPS dual at η.
double reps_dual(const Vector& returns, double eps, double eta);

/// dᵢ = exp((Jᵢ − max J)/η*)
Vector compute_weights(const Vector& returns, double eta_star);

/// KL(normalized weights || uniform)
double weights_kl_from_uniform(const Vector& weights);

SearchState reps_update(const SearchState& state, const SampleBatch& batch, double eps,
                        CovarianceKind kind = CovarianceKind::Full);
SearchState creps_update(const SearchState& state, const SampleBatch& batch, double eps, double kappa,
                         CovarianceKind kind = CovarianceKind::Full);
SearchState dr_creps_update(const SearchState& state, const SampleBatch& batch, const AlgorithmConfig& config,
                            std::uint64_t seed = 0);
SearchState dr_reps_update(const SearchState& state, const SampleBatch& batch, const AlgorithmConfig& config,
                           std::uint64_t seed = 0);
SearchState rwr_update(const SearchState& state, const SampleBatch& batch, double beta);
SearchState cem_update(const SearchState& state, const SampleBatch& batch, Index elite_count);

/// Dispatches on config.algorithm. `seed` feeds the random selector.
SearchState update(const SearchState& state, const SampleBatch& batch, const AlgorithmConfig& config,
                   std::uint64_t seed = 0);

/// Covariance u·S'·uᵀ where S' scales the ineffective diagonal of `s_mat` by λ.
GaussianDist prioritized_sampling_dist(const GaussianDist& target, const RotatedFrame& frame, const Matrix& s_mat,
                                       const EffectiveSplit& split, double lambda);

}  // namespace drps
