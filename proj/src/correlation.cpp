#include "drps/correlation.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "drps/errors.hpp"
#include "drps/random.hpp"

namespace drps {

std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::Pcc: return "pcc";
    case Metric::MiHistogram: return "mi-histogram";
    case Metric::MiKsg: return "mi-ksg";
    case Metric::MiKnnRegression: return "mi-knn-regression";
    case Metric::Random: return "random";
  }
  return "unknown";
}

std::optional<Metric> parse_metric(std::string_view text) {
  if (text == "pcc" || text == "PCC") return Metric::Pcc;
  if (text == "mi-histogram") return Metric::MiHistogram;
  if (text == "mi-ksg") return Metric::MiKsg;
  if (text == "mi-knn-regression" || text == "mi" || text == "MI") return Metric::MiKnnRegression;
  if (text == "random") return Metric::Random;
  return std::nullopt;
}

GaussianLinearModel GaussianLinearModel::scalar(double a, double sigma_x, double sigma_e) {
  GaussianLinearModel m;
  m.a = Matrix::Constant(1, 1, a);
  m.sigma_xx = Matrix::Constant(1, 1, sigma_x * sigma_x);
  m.mu_xx = Vector::Zero(1);
  m.sigma_e = Matrix::Constant(1, 1, sigma_e * sigma_e);
  m.mu_e = Vector::Zero(1);
  return m;
}

namespace {

void check_pair(const Vector& xs, const Vector& ys) {
  if (xs.size() != ys.size())
    throw DimensionMismatch(fmt::format("inputs of lengths {} and {}", xs.size(), ys.size()));
}

double variance(const Vector& v) { return (v.array() - v.mean()).square().mean(); }

Vector standardized(const Vector& v) {
  const double sd = std::sqrt(variance(v));
  if (!(sd > 0.0)) throw UndefinedCorrelation("zero-variance input");
  return (v.array() - v.mean()) / sd;
}

bool has_duplicates(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return std::adjacent_find(values.begin(), values.end()) != values.end();
}

std::vector<double> with_jitter(const Vector& v, Rng& rng) {
  std::vector<double> out(v.data(), v.data() + v.size());
  if (!has_duplicates(out)) return out;
  const double range = v.size() > 0 ? v.maxCoeff() - v.minCoeff() : 0.0;
  const double scale = 1e-10 * (range > 0.0 ? range : std::max(1.0, v.cwiseAbs().maxCoeff()));
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (auto& x : out) x += scale * unif(rng);
  return out;
}

// #{j ≠ i : |v_j − center| < radius} for a sorted copy of v that contains center.
// Bounds are refined with the exact |v − center| < radius test so rounding in
// center ± radius never admits the neighbor that defines the radius.
Index count_within(const std::vector<double>& sorted, double center, double radius) {
  auto inside = [&](double v) { return std::abs(v - center) < radius; };
  auto lo = std::lower_bound(sorted.begin(), sorted.end(), center - radius);
  while (lo != sorted.end() && *lo < center && !inside(*lo)) ++lo;
  while (lo != sorted.begin() && inside(*(lo - 1))) --lo;
  auto hi = std::upper_bound(sorted.begin(), sorted.end(), center + radius);
  while (hi != sorted.begin() && *(hi - 1) > center && !inside(*(hi - 1))) --hi;
  while (hi != sorted.end() && inside(*hi)) ++hi;
  return std::max<Index>(0, static_cast<Index>(hi - lo) - 1);
}

std::vector<int> bin_indices(const Vector& v, int bins) {
  const double lo = v.minCoeff();
  const double width = (v.maxCoeff() - lo) / bins;
  std::vector<int> out(static_cast<std::size_t>(v.size()), 0);
  if (!(width > 0.0)) return out;
  for (Index i = 0; i < v.size(); ++i)
    out[static_cast<std::size_t>(i)] = std::min(bins - 1, static_cast<int>(std::floor((v(i) - lo) / width)));
  return out;
}

double plugin_entropy(const std::vector<Index>& counts, Index total) {
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log(p);
  }
  return h;
}

}  // namespace

double pcc(const Vector& xs, const Vector& ys) {
  check_pair(xs, ys);
  if (xs.size() < 2) throw InvalidArgument("pcc needs at least two samples");
  const Eigen::ArrayXd dx = xs.array() - xs.mean();
  const Eigen::ArrayXd dy = ys.array() - ys.mean();
  const double sxx = dx.square().sum();
  const double syy = dy.square().sum();
  if (!(sxx > 0.0) || !(syy > 0.0)) throw UndefinedCorrelation("undefined correlation: zero-variance input");
  return std::min(1.0, std::abs((dx * dy).sum()) / std::sqrt(sxx * syy));
}

double mi_histogram(const Vector& xs, const Vector& ys, int bins) {
  check_pair(xs, ys);
  if (bins < 2) throw InvalidArgument("mi_histogram needs at least two bins");
  if (xs.size() < bins) throw InvalidArgument(fmt::format("{} samples for {} bins", xs.size(), bins));
  const auto bx = bin_indices(xs, bins);
  const auto by = bin_indices(ys, bins);
  const auto b = static_cast<std::size_t>(bins);
  std::vector<Index> cx(b, 0), cy(b, 0), cxy(b * b, 0);
  for (std::size_t i = 0; i < bx.size(); ++i) {
    const auto ix = static_cast<std::size_t>(bx[i]);
    const auto iy = static_cast<std::size_t>(by[i]);
    ++cx[ix];
    ++cy[iy];
    ++cxy[ix * b + iy];
  }
  const Index n = xs.size();
  const double mi = plugin_entropy(cx, n) + plugin_entropy(cy, n) - plugin_entropy(cxy, n);
  return std::max(0.0, mi);
}

double mi_ksg(const Vector& xs, const Vector& ys, int k, std::uint64_t jitter_seed) {
  check_pair(xs, ys);
  const Index n = xs.size();
  if (k < 1 || k >= n) throw InvalidArgument(fmt::format("mi_ksg requires 1 <= k < N (k={}, N={})", k, n));

  Rng rng(jitter_seed);
  const auto x = with_jitter(xs, rng);
  const auto y = with_jitter(ys, rng);
  std::vector<double> sx = x, sy = y;
  std::sort(sx.begin(), sx.end());
  std::sort(sy.begin(), sy.end());

  const auto un = static_cast<std::size_t>(n);
  std::vector<double> dist(un - 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < un; ++i) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < un; ++j) {
      if (j == i) continue;
      dist[c++] = std::max(std::abs(x[j] - x[i]), std::abs(y[j] - y[i]));
    }
    const auto kth = dist.begin() + (k - 1);
    std::nth_element(dist.begin(), kth, dist.end());
    const double radius = *kth;
    const Index nx = count_within(sx, x[i], radius);
    const Index ny = count_within(sy, y[i], radius);
    acc += boost::math::digamma(static_cast<double>(nx + 1)) + boost::math::digamma(static_cast<double>(ny + 1));
  }
  return boost::math::digamma(static_cast<double>(k)) + boost::math::digamma(static_cast<double>(n)) -
         acc / static_cast<double>(n);
}

double mi_knn_regression(const Vector& xs, const Vector& ys, int k, std::uint64_t jitter_seed) {
  check_pair(xs, ys);
  return std::max(0.0, mi_ksg(standardized(xs), standardized(ys), k, jitter_seed));
}

double analytic_gaussian_mi(const GaussianLinearModel& model) {
  const Index ny = model.sigma_e.rows();
  if (model.a.rows() != ny || model.a.cols() != model.sigma_xx.rows())
    throw DimensionMismatch("analytic_gaussian_mi: inconsistent model dimensions");
  Eigen::LLT<Matrix> noise(model.sigma_e);
  if (!is_positive_definite(model.sigma_e)) throw DegenerateDistribution("singular noise covariance");
  const Matrix marginal = model.sigma_e + model.a * model.sigma_xx * model.a.transpose();
  Eigen::LLT<Matrix> llt(marginal);
  const double log_det_y = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double log_det_e = 2.0 * noise.matrixLLT().diagonal().array().log().sum();
  return std::max(0.0, 0.5 * (log_det_y - log_det_e));
}

CorrelationScores score_parameters(const Matrix& thetas_rot, const Vector& returns, Metric metric,
                                   std::uint64_t seed, const MiOptions& options) {
  if (thetas_rot.rows() != returns.size())
    throw DimensionMismatch(fmt::format("{} samples but {} returns", thetas_rot.rows(), returns.size()));
  const Index n = thetas_rot.cols();
  CorrelationScores out{Vector::Zero(n), metric};

  if (metric == Metric::Random) {
    Rng rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (Index j = 0; j < n; ++j) out.scores(j) = unif(rng);
    return out;
  }

  const bool flat_returns = !(variance(returns) > 0.0);
  if (metric == Metric::Pcc && flat_returns) throw UndefinedCorrelation("undefined correlation: constant returns");

  for (Index j = 0; j < n; ++j) {
    const Vector col = thetas_rot.col(j);
    try {
      switch (metric) {
        case Metric::Pcc:
          // a frozen direction carries no information
          out.scores(j) = variance(col) > 0.0 ? pcc(col, returns) : 0.0;
          break;
        case Metric::MiHistogram:
          out.scores(j) = mi_histogram(col, returns, options.bins);
          break;
        case Metric::MiKsg:
          out.scores(j) = std::max(0.0, mi_ksg(col, returns, options.neighbors, derive_seed(seed, {static_cast<std::uint64_t>(j)})));
          break;
        case Metric::MiKnnRegression:
          out.scores(j) = (flat_returns || !(variance(col) > 0.0))
                              ? 0.0
                              : mi_knn_regression(col, returns, options.neighbors,
                                                  derive_seed(seed, {static_cast<std::uint64_t>(j)}));
          break;
        case Metric::Random:
          break;
      }
    } catch (const UndefinedCorrelation& e) {
      throw UndefinedCorrelation(fmt::format("column {}: {}", j, e.what()));
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(fmt::format("column {}: {}", j, e.what()));
    }
  }
  return out;
}

EffectiveSplit select_effective(const CorrelationScores& scores, Index m) {
  const Index n = scores.scores.size();
  if (m < 1 || m > n) throw InvalidArgument(fmt::format("m={} outside [1, {}]", m, n));
  IndexSet order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return scores.scores(a) > scores.scores(b); });
  EffectiveSplit split;
  split.effective.assign(order.begin(), order.begin() + m);
  split.ineffective.assign(order.begin() + m, order.end());
  std::sort(split.effective.begin(), split.effective.end());
  std::sort(split.ineffective.begin(), split.ineffective.end());
  return split;
}

}  // namespace drps
