#include "drps/gaussian.hpp"

#include <fmt/format.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "drps/errors.hpp"
#include "drps/random.hpp"

namespace drps {

namespace {

constexpr double kSymmetryTol = 1e-9;
constexpr double kPivotRatio = 1e-15;
const double kLog2PiE = std::log(2.0 * std::numbers::pi) + 1.0;

Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

bool llt_ok(const Eigen::LLT<Matrix>& llt) {
  if (llt.info() != Eigen::Success) return false;
  const Vector pivots = llt.matrixLLT().diagonal().array().square();
  if (!pivots.allFinite() || pivots.size() == 0) return pivots.size() == 0;
  return pivots.minCoeff() > kPivotRatio * pivots.maxCoeff();
}

double llt_log_det(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

void check_indices(std::span<const Index> indices, Index bound) {
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= bound)
      throw InvalidArgument(fmt::format("index {} out of range [0, {})", indices[i], bound));
    if (i > 0 && indices[i] <= indices[i - 1])
      throw InvalidArgument("indices must be strictly increasing (no duplicates)");
  }
}

}  // namespace

bool is_positive_definite(const Matrix& cov) {
  if (cov.rows() != cov.cols() || !cov.allFinite()) return false;
  return llt_ok(Eigen::LLT<Matrix>(cov));
}

GaussianDist::GaussianDist(Vector mean, Matrix cov) : mean_(std::move(mean)) {
  if (cov.rows() != cov.cols())
    throw DimensionMismatch(fmt::format("covariance is {}x{}, not square", cov.rows(), cov.cols()));
  if (cov.rows() != mean_.size())
    throw DimensionMismatch(fmt::format("mean has length {} but covariance is {}x{}", mean_.size(),
                                        cov.rows(), cov.cols()));
  if (!mean_.allFinite() || !cov.allFinite()) throw DegenerateDistribution("non-finite distribution parameters");
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > kSymmetryTol)
    throw InvalidArgument("covariance is not symmetric");
  cov_ = symmetrized(cov);
  llt_.compute(cov_);
  if (!llt_ok(llt_)) throw DegenerateDistribution("degenerate distribution: covariance is not positive definite");
}

GaussianDist GaussianDist::isotropic(Index dim, double sigma) {
  return GaussianDist(Vector::Zero(dim), Matrix::Identity(dim, dim) * (sigma * sigma));
}

double GaussianDist::log_det() const { return llt_log_det(llt_); }

SampleBatch::SampleBatch(Matrix thetas_, Vector returns_) : thetas(std::move(thetas_)), returns(std::move(returns_)) {
  if (thetas.rows() != returns.size())
    throw DimensionMismatch(fmt::format("{} parameter rows but {} returns", thetas.rows(), returns.size()));
  if (!thetas.allFinite() || !returns.allFinite()) throw InvalidArgument("sample batch contains non-finite entries");
}

Matrix sample(const GaussianDist& dist, std::uint64_t seed, Index count) {
  if (count < 1) throw InvalidArgument("sample count must be positive");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix z(dist.dim(), count);
  for (Index j = 0; j < count; ++j)
    for (Index i = 0; i < dist.dim(); ++i) z(i, j) = normal(rng);
  Matrix out = (dist.llt().matrixL() * z).transpose();
  out.rowwise() += dist.mean().transpose();
  return out;
}

double gaussian_entropy(Index dim, double log_det) { return 0.5 * (static_cast<double>(dim) * kLog2PiE + log_det); }

double entropy(const GaussianDist& dist) { return gaussian_entropy(dist.dim(), dist.log_det()); }

double kl_divergence(const GaussianDist& p, const GaussianDist& q) {
  if (p.dim() != q.dim())
    throw DimensionMismatch(fmt::format("KL between dimensions {} and {}", p.dim(), q.dim()));
  const Index n = p.dim();
  // tr(Σq⁻¹Σp) = ‖Lq⁻¹ Lp‖², Mahalanobis term via Lq⁻¹(μq − μp)
  const Matrix a = q.llt().matrixL().solve(p.chol_factor());
  const Vector b = q.llt().matrixL().solve(q.mean() - p.mean());
  const double kl = 0.5 * (a.squaredNorm() + b.squaredNorm() - static_cast<double>(n) + q.log_det() - p.log_det());
  return std::max(kl, 0.0);
}

RotatedFrame svd_rotate(const GaussianDist& dist) {
  const Index n = dist.dim();
  const Matrix& cov = dist.cov();

  // Decompose each block of exactly coupled coordinates on its own so that
  // untouched coordinates stay axis-aligned even when variances coincide.
  std::vector<Index> block(static_cast<std::size_t>(n), -1);
  std::vector<std::vector<Index>> blocks;
  for (Index start = 0; start < n; ++start) {
    if (block[static_cast<std::size_t>(start)] >= 0) continue;
    const auto id = static_cast<Index>(blocks.size());
    std::vector<Index> members{start};
    block[static_cast<std::size_t>(start)] = id;
    for (std::size_t k = 0; k < members.size(); ++k) {
      for (Index j = 0; j < n; ++j) {
        if (block[static_cast<std::size_t>(j)] < 0 && cov(members[k], j) != 0.0) {
          block[static_cast<std::size_t>(j)] = id;
          members.push_back(j);
        }
      }
    }
    std::sort(members.begin(), members.end());
    blocks.push_back(std::move(members));
  }

  Matrix vectors = Matrix::Zero(n, n);
  Vector values(n);
  Index next = 0;
  for (const auto& members : blocks) {
    const auto size = static_cast<Index>(members.size());
    Matrix sub(size, size);
    for (Index a = 0; a < size; ++a)
      for (Index b = 0; b < size; ++b) sub(a, b) = cov(members[static_cast<std::size_t>(a)], members[static_cast<std::size_t>(b)]);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sub);
    if (eig.info() != Eigen::Success) throw DegenerateDistribution("eigen-decomposition of covariance failed");
    for (Index c = 0; c < size; ++c, ++next) {
      values(next) = eig.eigenvalues()(c);
      for (Index a = 0; a < size; ++a) vectors(members[static_cast<std::size_t>(a)], next) = eig.eigenvectors()(a, c);
    }
  }

  // descending variance; ties keep the order of their leading coordinate
  std::vector<Index> lead(static_cast<std::size_t>(n));
  for (Index c = 0; c < n; ++c) {
    Index arg = 0;
    vectors.col(c).cwiseAbs().maxCoeff(&arg);
    lead[static_cast<std::size_t>(c)] = arg;
  }
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    if (values(a) != values(b)) return values(a) > values(b);
    return lead[static_cast<std::size_t>(a)] < lead[static_cast<std::size_t>(b)];
  });
  RotatedFrame frame{Matrix(n, n), Vector(n), Vector::Zero(n)};
  for (Index c = 0; c < n; ++c) {
    const Index src = order[static_cast<std::size_t>(c)];
    Vector col = vectors.col(src);
    if (col(lead[static_cast<std::size_t>(src)]) < 0) col = -col;
    frame.u.col(c) = col;
    frame.s(c) = values(src);
  }
  if (n > 0 && !(frame.s.minCoeff() > 0.0)) throw DegenerateDistribution("covariance has a non-positive eigenvalue");
  return frame;
}

Matrix project_samples(const RotatedFrame& frame, const Vector& mean, const Matrix& thetas) {
  if (thetas.cols() != frame.u.rows() || mean.size() != frame.u.rows())
    throw DimensionMismatch(fmt::format("projecting {}-column samples with mean {} into a {}-dim frame",
                                        thetas.cols(), mean.size(), frame.u.rows()));
  return (thetas.rowwise() - mean.transpose()) * frame.u;
}

GaussianDist back_project(const Vector& prev_mean, const RotatedFrame& frame, const Vector& mean_rot,
                          const Matrix& s_mat) {
  const Index n = frame.u.rows();
  if (prev_mean.size() != n || mean_rot.size() != n || s_mat.rows() != n || s_mat.cols() != n)
    throw DimensionMismatch("back_project: argument dimensions do not match the frame");
  Matrix cov = symmetrized(frame.u * symmetrized(s_mat) * frame.u.transpose());
  Vector mean = prev_mean + frame.u * mean_rot;
  if (!is_positive_definite(cov))
    throw IndefiniteCovariance("update produced indefinite covariance (positive definiteness violated)");
  return GaussianDist(std::move(mean), std::move(cov));
}

Vector subst(const Vector& base, const Vector& block, std::span<const Index> indices) {
  check_indices(indices, base.size());
  if (block.size() != static_cast<Index>(indices.size()))
    throw DimensionMismatch(fmt::format("block of size {} for {} indices", block.size(), indices.size()));
  Vector out = base;
  for (std::size_t i = 0; i < indices.size(); ++i) out(indices[i]) = block(static_cast<Index>(i));
  return out;
}

Matrix subst(const Matrix& base, const Matrix& block, std::span<const Index> indices) {
  if (base.rows() != base.cols()) throw DimensionMismatch("subst: base matrix must be square");
  check_indices(indices, base.rows());
  const auto k = static_cast<Index>(indices.size());
  if (block.rows() != k || block.cols() != k)
    throw DimensionMismatch(fmt::format("block of shape {}x{} for {} indices", block.rows(), block.cols(), k));
  Matrix out = base;
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j) out(indices[i], indices[j]) = block(i, j);
  return out;
}

Vector extract(const Vector& base, std::span<const Index> indices) {
  check_indices(indices, base.size());
  Vector out(static_cast<Index>(indices.size()));
  for (std::size_t i = 0; i < indices.size(); ++i) out(static_cast<Index>(i)) = base(indices[i]);
  return out;
}

Matrix extract(const Matrix& base, std::span<const Index> indices) {
  check_indices(indices, base.rows());
  const auto k = static_cast<Index>(indices.size());
  Matrix out(k, k);
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j) out(i, j) = base(indices[i], indices[j]);
  return out;
}

Matrix extract_columns(const Matrix& thetas, std::span<const Index> indices) {
  check_indices(indices, thetas.cols());
  Matrix out(thetas.rows(), static_cast<Index>(indices.size()));
  for (std::size_t j = 0; j < indices.size(); ++j) out.col(static_cast<Index>(j)) = thetas.col(indices[j]);
  return out;
}

namespace {

void check_weighted_batch(const Matrix& thetas, const Vector& weights) {
  if (thetas.rows() != weights.size())
    throw DimensionMismatch(fmt::format("{} samples but {} weights", thetas.rows(), weights.size()));
  if (thetas.rows() < 2) throw InvalidArgument("weighted fit needs at least two samples");
  if (!weights.allFinite() || (weights.array() < 0.0).any()) throw InvalidArgument("weights must be finite and >= 0");
  if (!(weights.sum() > 0.0)) throw InvalidArgument("weights sum to zero");
  if (!thetas.allFinite()) throw InvalidArgument("non-finite samples");
}

// Weighted mean and scatter Σ dᵢ(θᵢ − μ)(θᵢ − μ)ᵀ about it.
struct WeightedMoments {
  double total;
  Vector mean;
  Matrix scatter;
};

WeightedMoments weighted_moments(const Matrix& thetas, const Vector& weights) {
  const double total = weights.sum();
  Vector mean = thetas.transpose() * weights / total;
  const Matrix centered = thetas.rowwise() - mean.transpose();
  Matrix scatter = centered.transpose() * weights.asDiagonal() * centered;
  return {total, std::move(mean), symmetrized(scatter)};
}

}  // namespace

GaussianDist wmle_fit(const Matrix& thetas, const Vector& weights, CovarianceKind kind) {
  check_weighted_batch(thetas, weights);
  const auto support = (weights.array() > 0.0).count();
  if (kind == CovarianceKind::Full && support <= thetas.cols())
    throw DegenerateDistribution(fmt::format(
        "degenerate distribution: {} weighted samples cannot span {} dimensions", support, thetas.cols()));
  auto moments = weighted_moments(thetas, weights);
  Matrix cov = moments.scatter / moments.total;
  if (kind == CovarianceKind::Diagonal) cov = Matrix(cov.diagonal().asDiagonal());
  if (!is_positive_definite(cov)) throw DegenerateDistribution("degenerate distribution: weighted scatter is singular");
  return GaussianDist(std::move(moments.mean), std::move(cov));
}

double weighted_log_likelihood(const GaussianDist& q, const Matrix& thetas, const Vector& weights) {
  const Matrix centered = (thetas.rowwise() - q.mean().transpose()).transpose();
  const Matrix white = q.llt().matrixL().solve(centered);
  const Vector maha = white.colwise().squaredNorm().transpose();
  const double norm = 0.5 * (static_cast<double>(q.dim()) * std::log(2.0 * std::numbers::pi) + q.log_det());
  return -(weights.array() * (0.5 * maha.array() + norm)).sum();
}

namespace {

// The constrained M-step family. For multipliers (η, ω) the stationary point
// of the Lagrangian is
//   μ(η)    = (Σdθ + η μp) / (D + η)
//   Σ(η, ω) = M(η) / (D + η − ω)
//   M(η)    = Σd(θ − μ)(θ − μ)ᵀ + η Σp + η(μp − μ)(μp − μ)ᵀ
//           = S_w + η Σp + (Dη / (D + η)) δδᵀ,   δ = μp − μ_w.
// For a fixed η the optimal ω makes the entropy bound active or is zero, so
// the dual reduces to a 1-D search over η on the KL condition. The diagonal
// family keeps diag(M).
class ConstrainedFamily {
 public:
  ConstrainedFamily(const GaussianDist& prev, const Matrix& thetas, const Vector& weights, double eps, double kappa,
                    CovarianceKind kind)
      : prev_(prev), moments_(weighted_moments(thetas, weights)), eps_(eps), kind_(kind) {
    delta_ = prev.mean() - moments_.mean;
    entropy_floor_ = entropy(prev) - kappa;
    prev_l_ = prev.chol_factor();
  }

  struct Point {
    bool valid = false;
    double eta = 0.0;
    double omega = 0.0;
    double kl = 0.0;
    double entropy = 0.0;
    Vector mean;
    Matrix cov;
  };

  Point evaluate(double eta) const {
    Point pt;
    pt.eta = eta;
    const Index n = prev_.dim();
    const double d = moments_.total;
    Matrix m = moments_.scatter + eta * prev_.cov() + (d * eta / (d + eta)) * delta_ * delta_.transpose();
    m = kind_ == CovarianceKind::Diagonal ? Matrix(m.diagonal().asDiagonal()) : symmetrized(m);
    Eigen::LLT<Matrix> llt(m);
    if (!llt_ok(llt)) return pt;
    const double log_det_m = llt_log_det(llt);
    double denom = d + eta;
    if (gaussian_entropy(n, log_det_m - static_cast<double>(n) * std::log(denom)) < entropy_floor_) {
      const double log_z = (static_cast<double>(n) * kLog2PiE + log_det_m - 2.0 * entropy_floor_) / static_cast<double>(n);
      denom = std::exp(log_z);
    }
    pt.omega = std::max(0.0, d + eta - denom);
    pt.mean = (d * moments_.mean + eta * prev_.mean()) / (d + eta);
    pt.cov = m / denom;
    const Index nn = n;
    const double log_det_q = log_det_m - static_cast<double>(nn) * std::log(denom);
    // KL(prev || q) with Σq⁻¹ = denom · M⁻¹
    const Matrix a = llt.matrixL().solve(prev_l_);
    const Vector b = llt.matrixL().solve(pt.mean - prev_.mean());
    pt.kl = 0.5 * (denom * (a.squaredNorm() + b.squaredNorm()) - static_cast<double>(nn) + log_det_q - prev_.log_det());
    pt.entropy = gaussian_entropy(nn, log_det_q);
    pt.valid = std::isfinite(pt.kl);
    return pt;
  }

  bool feasible(const Point& pt) const { return pt.valid && pt.kl <= eps_; }
  double total_weight() const { return moments_.total; }

 private:
  const GaussianDist& prev_;
  WeightedMoments moments_;
  double eps_;
  CovarianceKind kind_;
  Vector delta_;
  double entropy_floor_ = 0.0;
  Matrix prev_l_;
};

}  // namespace

GaussianDist constrained_wmle(const GaussianDist& prev, const Matrix& thetas, const Vector& weights, double eps,
                              double kappa, ConstrainedFitInfo* info, CovarianceKind kind) {
  check_weighted_batch(thetas, weights);
  if (thetas.cols() != prev.dim())
    throw DimensionMismatch(fmt::format("samples have {} columns, distribution has {}", thetas.cols(), prev.dim()));
  if (!(eps > 0.0) || !(kappa > 0.0)) throw InvalidArgument("eps and kappa must be positive");

  const ConstrainedFamily family(prev, thetas, weights, eps, kappa, kind);
  const double scale = family.total_weight();
  int iterations = 0;

  auto best = family.evaluate(0.0);
  ++iterations;
  if (!family.feasible(best)) {
    // Grow η until the KL bound holds.
    double hi = scale;
    auto hi_pt = family.evaluate(hi);
    ++iterations;
    while (!family.feasible(hi_pt)) {
      hi *= 4.0;
      if (hi > scale * 1e16)
        throw ConstrainedUpdateFailed(fmt::format(
            "constrained update failed: no feasible KL multiplier up to eta={:.3e} (eps={}, kappa={}, last kl={:.6g})",
            hi, eps, kappa, hi_pt.kl));
      hi_pt = family.evaluate(hi);
      ++iterations;
    }
    // Shrink to bracket the crossing from below.
    double lo = hi / 4.0;
    const double floor = scale * 1e-14;
    bool bracketed = false;
    while (lo > floor) {
      auto lo_pt = family.evaluate(lo);
      ++iterations;
      if (!family.feasible(lo_pt)) {
        bracketed = true;
        break;
      }
      hi = lo;
      hi_pt = std::move(lo_pt);
      lo /= 4.0;
    }
    if (bracketed) {
      for (int it = 0; it < 200 && hi / lo - 1.0 > 1e-13; ++it) {
        const double mid = std::sqrt(lo * hi);
        auto mid_pt = family.evaluate(mid);
        ++iterations;
        if (family.feasible(mid_pt)) {
          hi = mid;
          hi_pt = std::move(mid_pt);
        } else {
          lo = mid;
        }
      }
    }
    best = std::move(hi_pt);
  }

  GaussianDist result = [&] {
    try {
      return GaussianDist(best.mean, symmetrized(best.cov));
    } catch (const DegenerateDistribution& e) {
      throw ConstrainedUpdateFailed(
          fmt::format("constrained update failed: indefinite interpolated covariance at eta={:.6g}, omega={:.6g}",
                      best.eta, best.omega));
    }
  }();

  // a-posteriori check on the finished distribution
  const double kl = kl_divergence(prev, result);
  const double drop = entropy(prev) - entropy(result);
  if (kl > eps + 1e-4 || drop > kappa + 1e-4)
    throw ConstrainedUpdateFailed(fmt::format(
        "constrained update failed: kl={:.6g} (eps={}), entropy drop={:.6g} (kappa={}) at eta={:.6g}, omega={:.6g}",
        kl, eps, drop, kappa, best.eta, best.omega));

  if (info != nullptr) {
    info->eta = best.eta;
    info->omega = best.omega;
    info->kl = kl;
    info->entropy_drop = drop;
    info->iterations = iterations;
    info->dual_value = weighted_log_likelihood(result, thetas, weights) + best.eta * (eps - kl) +
                       best.omega * (kappa - drop);
  }
  return result;
}

}  // namespace drps
