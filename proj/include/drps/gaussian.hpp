#pragma once

// Gaussian search-distribution algebra: sampling, KL and entropy, the SVD
// rotation into a decorrelated frame, weighted maximum-likelihood fits and
// the KL/entropy constrained fit used by C-REPS.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

namespace drps {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;
using IndexSet = std::vector<Index>;

/// N(mean, cov) over a flat parameter vector. Immutable once built; the
/// constructor symmetrizes `cov` and rejects anything that is not positive
/// definite with DegenerateDistribution.
class GaussianDist {
 public:
  GaussianDist(Vector mean, Matrix cov);

  static GaussianDist isotropic(Index dim, double sigma);

  const Vector& mean() const { return mean_; }
  const Matrix& cov() const { return cov_; }
  Index dim() const { return mean_.size(); }

  /// Lower Cholesky factor L with cov = L Lᵀ.
  Matrix chol_factor() const { return llt_.matrixL(); }
  const Eigen::LLT<Matrix>& llt() const { return llt_; }
  double log_det() const;

 private:
  Vector mean_;
  Matrix cov_;
  Eigen::LLT<Matrix> llt_;
};

/// Decorrelated workspace of a distribution: cov = u diag(s) uᵀ.
struct RotatedFrame {
  Matrix u;         // orthogonal, columns are principal axes
  Vector s;         // strictly positive, descending
  Vector mean_rot;  // zero at construction
};

/// Sampled parameter vectors (one per row) with their returns.
struct SampleBatch {
  Matrix thetas;
  Vector returns;

  SampleBatch() = default;
  SampleBatch(Matrix thetas_, Vector returns_);
  Index size() const { return thetas.rows(); }
};

/// Diagnostics of one constrained fit.
struct ConstrainedFitInfo {
  double eta = 0.0;    // KL multiplier
  double omega = 0.0;  // entropy multiplier
  double kl = 0.0;     // KL(prev || result)
  double entropy_drop = 0.0;
  double dual_value = 0.0;
  int iterations = 0;
};

/// True when `cov` admits a Cholesky factorization that is not numerically
/// singular (smallest pivot above 1e-15 of the largest).
bool is_positive_definite(const Matrix& cov);

/// Draws `count` i.i.d. rows from `dist`; deterministic in `seed`.
Matrix sample(const GaussianDist& dist, std::uint64_t seed, Index count);

/// Standard closed-form KL(p || q) in nats.
double kl_divergence(const GaussianDist& p, const GaussianDist& q);

/// ½ ln((2πe)ⁿ det Σ)
double entropy(const GaussianDist& dist);

/// Entropy of a Gaussian with the given log-determinant in `dim` dimensions.
double gaussian_entropy(Index dim, double log_det);

/// Eigen-decomposition of the (symmetric PD) covariance, ordered by
/// descending variance. Column signs are fixed so that the largest-magnitude
/// entry of each column is positive.
RotatedFrame svd_rotate(const GaussianDist& dist);

/// Row i of the result is uᵀ(θᵢ − mean).
Matrix project_samples(const RotatedFrame& frame, const Vector& mean, const Matrix& thetas);

/// Inverse of the rotation: N(prev_mean + u·mean_rot, u·s_mat·uᵀ).
/// Throws IndefiniteCovariance if the result is not positive definite.
GaussianDist back_project(const Vector& prev_mean, const RotatedFrame& frame, const Vector& mean_rot,
                          const Matrix& s_mat);

/// Places `block` at `indices` of `base`. Indices must be strictly increasing
/// and in range.
Vector subst(const Vector& base, const Vector& block, std::span<const Index> indices);
/// Matrix form: overwrites the rows/columns intersection base(I, I); cross
/// terms between I and its complement are left alone.
Matrix subst(const Matrix& base, const Matrix& block, std::span<const Index> indices);

Vector extract(const Vector& base, std::span<const Index> indices);
Matrix extract(const Matrix& base, std::span<const Index> indices);
/// Columns of `thetas` at `indices`.
Matrix extract_columns(const Matrix& thetas, std::span<const Index> indices);

/// Covariance family of a fit. Diagonal keeps only the per-coordinate variances.
enum class CovarianceKind { Full, Diagonal };

/// Weighted MLE: mean = Σdθ/Σd, cov = Σd(θ−μ)(θ−μ)ᵀ/Σd.
GaussianDist wmle_fit(const Matrix& thetas, const Vector& weights, CovarianceKind kind = CovarianceKind::Full);

/// Weighted log-likelihood Σ dᵢ log q(θᵢ).
double weighted_log_likelihood(const GaussianDist& q, const Matrix& thetas, const Vector& weights);

/// Maximizes Σ dᵢ log q(θᵢ) subject to KL(prev || q) ≤ eps and
/// H(prev) − H(q) ≤ kappa. Throws ConstrainedUpdateFailed when no feasible
/// multipliers exist.
GaussianDist constrained_wmle(const GaussianDist& prev, const Matrix& thetas, const Vector& weights, double eps,
                              double kappa, ConstrainedFitInfo* info = nullptr,
                              CovarianceKind kind = CovarianceKind::Full);

}  // namespace drps
