#pragma once

// Parameter-effectiveness metrics and effective/ineffective index selection.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "drps/gaussian.hpp"

namespace drps {

enum class Metric { Pcc, MiHistogram, MiKsg, MiKnnRegression, Random };

std::string_view to_string(Metric metric);
/// Accepts "pcc", "mi-histogram", "mi-ksg", "mi-knn-regression" (alias "mi"), "random".
std::optional<Metric> parse_metric(std::string_view text);

inline constexpr int kDefaultBins = 4;
inline constexpr int kDefaultNeighbors = 4;

struct CorrelationScores {
  Vector scores;
  Metric metric = Metric::Pcc;
};

/// Partition of {0..n-1}; both sides sorted ascending.
struct EffectiveSplit {
  IndexSet effective;
  IndexSet ineffective;
};

/// Y = A X + E with X ~ N(mu_xx, sigma_xx), E ~ N(mu_e, sigma_e).
struct GaussianLinearModel {
  Matrix a;
  Matrix sigma_xx;
  Vector mu_xx;
  Matrix sigma_e;
  Vector mu_e;

  /// 1-D model y = a·x + e with x ~ N(0, sigma_x²), e ~ N(0, sigma_e²).
  static GaussianLinearModel scalar(double a, double sigma_x, double sigma_e);
};

struct MiOptions {
  int bins = kDefaultBins;
  int neighbors = kDefaultNeighbors;
};

/// |Pearson correlation|. Throws UndefinedCorrelation on zero variance.
double pcc(const Vector& xs, const Vector& ys);

/// Plug-in H(X) + H(Y) − H(X,Y) from equal-width histograms, clamped at 0.
double mi_histogram(const Vector& xs, const Vector& ys, int bins = kDefaultBins);

/// Kraskov–Stögbauer–Grassberger estimator (first variant, max-norm). Exact
/// duplicate coordinates are broken by a seeded jitter of 1e-10·range.
double mi_ksg(const Vector& xs, const Vector& ys, int k = kDefaultNeighbors, std::uint64_t jitter_seed = 0);

/// Standardizes both inputs, applies mi_ksg, clamps at zero.
double mi_knn_regression(const Vector& xs, const Vector& ys, int k = kDefaultNeighbors, std::uint64_t jitter_seed = 0);

/// ½ ln det(Σe + AΣxxAᵀ) − ½ ln det(Σe).
double analytic_gaussian_mi(const GaussianLinearModel& model);

/// Scores every column of `thetas_rot` against `returns`.
CorrelationScores score_parameters(const Matrix& thetas_rot, const Vector& returns, Metric metric,
                                   std::uint64_t seed, const MiOptions& options = {});

/// Indices of the m highest scores (ties: lowest index first).
EffectiveSplit select_effective(const CorrelationScores& scores, Index m);

}  // namespace drps
