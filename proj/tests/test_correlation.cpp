#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "drps/correlation.hpp"
#include "drps/environments.hpp"
#include "drps/errors.hpp"
#include "oracles.hpp"

using namespace drps;

namespace {

Vector normals(Index n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

Vector of(std::initializer_list<double> values) {
  Vector v(static_cast<Index>(values.size()));
  Index i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

const double kHalfLn2 = 0.5 * std::log(2.0);

}  // namespace

TEST_CASE("pcc of linear maps") {
  const Vector x = normals(50, 1);
  CHECK(pcc(x, (2.0 * x).array() + 3.0) == doctest::Approx(1.0));
  CHECK(pcc(x, -x) == doctest::Approx(1.0));
}

TEST_CASE("pcc of independent samples is small") {
  CHECK(pcc(normals(2000, 2), normals(2000, 3)) < 0.06);
}

TEST_CASE("pcc matches the loop oracle and is affine invariant") {
  for (unsigned seed = 0; seed < 20; ++seed) {
    const Vector x = normals(100, seed), noise = normals(100, seed + 500);
    const Vector y = 0.3 * x + noise;
    const double base = pcc(x, y);
    CHECK(base == doctest::Approx(oracle::pearson(x, y)).epsilon(1e-12));
    CHECK(base >= 0.0);
    CHECK(base <= 1.0);
    for (double a : {-3.0, -0.1, 0.5, 40.0}) {
      CHECK(pcc((a * x).array() + 1.5, y) == doctest::Approx(base).epsilon(1e-10));
      CHECK(pcc(x, (a * y).array() - 2.0) == doctest::Approx(base).epsilon(1e-10));
    }
  }
}

TEST_CASE("pcc rejects degenerate input") {
  CHECK_THROWS_AS(pcc(Vector::Ones(5), normals(5, 1)), UndefinedCorrelation);
  CHECK_THROWS_AS(pcc(normals(5, 1), normals(4, 1)), DimensionMismatch);
}

TEST_CASE("mi_histogram") {
  const Vector x = normals(5000, 4);
  std::vector<Index> perm(5000);
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), std::mt19937(5));
  Vector shuffled(5000);
  for (Index i = 0; i < 5000; ++i) shuffled(i) = x(perm[static_cast<std::size_t>(i)]);
  CHECK(mi_histogram(x, shuffled, 4) <= 0.05);

  // H(X) of the 4-bin histogram
  Vector counts = Vector::Zero(4);
  const double lo = x.minCoeff(), width = (x.maxCoeff() - lo) / 4.0;
  for (Index i = 0; i < x.size(); ++i) counts(std::min(3, static_cast<int>(std::floor((x(i) - lo) / width)))) += 1;
  double hx = 0.0;
  for (Index b = 0; b < 4; ++b)
    if (counts(b) > 0) hx -= counts(b) / 5000.0 * std::log(counts(b) / 5000.0);
  CHECK(mi_histogram(x, x, 4) == doctest::Approx(hx).epsilon(1e-10));

  const Vector xs = normals(10000, 6);
  const Vector ys = xs + normals(10000, 7);
  // equal-width bins over the sample range lose information at this N; the
  // estimate converges to the MI of the quantized pair instead
  std::vector<double> x_edges, y_edges;
  for (int b = 1; b < 4; ++b) {
    x_edges.push_back(xs.minCoeff() + b * (xs.maxCoeff() - xs.minCoeff()) / 4.0);
    y_edges.push_back(ys.minCoeff() + b * (ys.maxCoeff() - ys.minCoeff()) / 4.0);
  }
  const double hist = mi_histogram(xs, ys, 4);
  CHECK(std::abs(hist - oracle::quantized_gaussian_mi(x_edges, y_edges)) < 0.02);
  CHECK(hist < kHalfLn2);
  CHECK(mi_histogram(xs.head(300), ys.head(300), 5) ==
        doctest::Approx(oracle::histogram_mi(xs.head(300), ys.head(300), 5)).epsilon(1e-10));

  CHECK_THROWS_AS(mi_histogram(x.head(3), x.head(3), 4), InvalidArgument);
  CHECK_THROWS_AS(mi_histogram(x, x, 1), InvalidArgument);
}

TEST_CASE("mi_ksg") {
  CHECK(std::abs(mi_ksg(normals(2000, 8), normals(2000, 9), 4)) <= 0.05);
  const Vector x = normals(2000, 10);
  const Vector y = x + normals(2000, 11);
  CHECK(std::abs(mi_ksg(x, y, 4) - kHalfLn2) < 0.1);
  CHECK_THROWS_AS(mi_ksg(x.head(10), y.head(10), 10), InvalidArgument);
}

TEST_CASE("mi_ksg matches the brute-force oracle") {
  for (unsigned seed = 0; seed < 5; ++seed) {
    const Vector x = normals(150, 20 + seed);
    const Vector y = 0.7 * x + normals(150, 40 + seed);
    for (int k : {1, 4, 7}) CHECK(mi_ksg(x, y, k) == doctest::Approx(oracle::ksg(x, y, k)).epsilon(1e-10));
  }
}

TEST_CASE("mi_ksg handles duplicate points reproducibly") {
  const Vector x = of({0, 0, 0, 1, 1, 2, 2, 2, 3, 3});
  const Vector y = of({1, 1, 2, 2, 3, 3, 4, 4, 5, 5});
  const double a = mi_ksg(x, y, 3, 17);
  CHECK(std::isfinite(a));
  CHECK(mi_ksg(x, y, 3, 17) == a);
}

TEST_CASE("mi_knn_regression") {
  const Vector x = normals(1000, 12);
  const Vector y = x + normals(1000, 13);
  CHECK(std::abs(mi_knn_regression(x, y, 4) - kHalfLn2) < 0.1);
  for (double c : {0.001, 3.0, 1e4}) CHECK(mi_knn_regression(c * x, y, 4) == mi_knn_regression(x, y, 4));
  CHECK_THROWS_AS(mi_knn_regression(Vector::Ones(10), y.head(10)), UndefinedCorrelation);
}

TEST_CASE("mi_knn_regression clamps negative KSG values") {
  int negatives = 0;
  for (unsigned seed = 0; seed < 30; ++seed) {
    const Vector x = normals(40, 100 + seed), y = normals(40, 200 + seed);
    Vector zx = (x.array() - x.mean()).matrix(), zy = (y.array() - y.mean()).matrix();
    zx /= std::sqrt(zx.squaredNorm() / 40.0);
    zy /= std::sqrt(zy.squaredNorm() / 40.0);
    const double raw = mi_ksg(zx, zy, 4);
    const double clamped = mi_knn_regression(x, y, 4);
    if (raw < 0.0) {
      ++negatives;
      CHECK(clamped == 0.0);
    } else {
      CHECK(clamped == doctest::Approx(raw).epsilon(1e-9));
    }
  }
  CHECK(negatives > 0);
}

TEST_CASE("analytic_gaussian_mi") {
  CHECK(analytic_gaussian_mi(GaussianLinearModel::scalar(0.0, 1.0, 1.0)) == doctest::Approx(0.0));
  CHECK(analytic_gaussian_mi(GaussianLinearModel::scalar(1.0, 1.0, 1.0)) ==
        doctest::Approx(oracle::scalar_gaussian_mi(1.0, 1.0, 1.0)));
  double previous = 0.0;
  for (double se : {1.0, 0.1, 1e-3, 1e-6}) {
    const double mi = analytic_gaussian_mi(GaussianLinearModel::scalar(1.0, 1.0, se));
    CHECK(mi > previous);
    CHECK(mi == doctest::Approx(oracle::scalar_gaussian_mi(1.0, 1.0, se)));
    previous = mi;
  }
  previous = -1.0;
  for (double a = 0.0; a <= 5.0; a += 0.25) {
    const double mi = analytic_gaussian_mi(GaussianLinearModel::scalar(a, 1.3, 0.7));
    CHECK(mi >= previous);
    CHECK(mi == doctest::Approx(analytic_gaussian_mi(GaussianLinearModel::scalar(-a, 1.3, 0.7))));
    previous = mi;
  }

  GaussianLinearModel two;
  two.a = Matrix::Identity(2, 2);
  two.sigma_xx = Matrix::Identity(2, 2);
  two.mu_xx = Vector::Zero(2);
  two.sigma_e = Matrix::Identity(2, 2);
  two.mu_e = Vector::Zero(2);
  CHECK(analytic_gaussian_mi(two) == doctest::Approx(2.0 * kHalfLn2));
  two.sigma_e = Matrix::Zero(2, 2);
  CHECK_THROWS_AS(analytic_gaussian_mi(two), DegenerateDistribution);
}

TEST_CASE("score_parameters") {
  Matrix thetas(200, 6);
  for (Index j = 0; j < 6; ++j) thetas.col(j) = normals(200, 300 + static_cast<unsigned>(j));
  const Vector returns = thetas.col(3);
  const auto pcc_scores = score_parameters(thetas, returns, Metric::Pcc, 0);
  CHECK(pcc_scores.scores(3) == doctest::Approx(1.0));
  Index arg = 0;
  pcc_scores.scores.maxCoeff(&arg);
  CHECK(arg == 3);
  CHECK(pcc_scores.scores.size() == 6);

  const auto r1 = score_parameters(thetas, returns, Metric::Random, 42);
  const auto r2 = score_parameters(thetas, returns, Metric::Random, 42);
  CHECK(r1.scores == r2.scores);
  CHECK(r1.scores != score_parameters(thetas, returns, Metric::Random, 43).scores);

  for (Metric metric : {Metric::MiHistogram, Metric::MiKsg, Metric::MiKnnRegression}) {
    const auto s = score_parameters(thetas, returns, metric, 0);
    CHECK(s.scores.minCoeff() >= 0.0);
    s.scores.maxCoeff(&arg);
    CHECK(arg == 3);
  }
}

TEST_CASE("score_parameters on constant returns") {
  const Matrix thetas = Matrix::Random(30, 4);
  const Vector flat = Vector::Constant(30, 2.0);
  CHECK_THROWS_AS(score_parameters(thetas, flat, Metric::Pcc, 0), UndefinedCorrelation);
  CHECK(score_parameters(thetas, flat, Metric::MiKnnRegression, 0).scores.isZero());
  CHECK(score_parameters(thetas, flat, Metric::MiHistogram, 0).scores.isZero());
}

TEST_CASE("score_parameters tags the offending column") {
  Matrix thetas = Matrix::Random(3, 4);
  try {
    score_parameters(thetas, normals(3, 1), Metric::MiHistogram, 0);
    FAIL("expected an error");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("column 0") != std::string::npos);
  }
}

TEST_CASE("score_parameters ranks planted LQR gains") {
  const auto env = lqr_make(10, 7, 0, 50, 0.99, 1.0);
  const auto truth = lqr_effective_parameters(env);
  const Matrix thetas = sample(GaussianDist::isotropic(100, 0.3), 5, 200);
  const Vector returns = evaluate_batch(env, thetas, 0);
  const auto split = select_effective(score_parameters(thetas, returns, Metric::Pcc, 0), 10);
  for (Index t : truth) CHECK(std::find(split.effective.begin(), split.effective.end(), t) != split.effective.end());
}

TEST_CASE("select_effective") {
  const CorrelationScores s{of({0.9, 0.1, 0.5}), Metric::Pcc};
  auto split = select_effective(s, 2);
  CHECK(split.effective == IndexSet{0, 2});
  CHECK(split.ineffective == IndexSet{1});
  split = select_effective(s, 3);
  CHECK(split.ineffective.empty());
  split = select_effective(CorrelationScores{of({0.5, 0.5, 0.1}), Metric::Pcc}, 1);
  CHECK(split.effective == IndexSet{0});
  CHECK_THROWS_AS(select_effective(s, 0), InvalidArgument);
  CHECK_THROWS_AS(select_effective(s, 4), InvalidArgument);
}

TEST_CASE("select_effective partitions by score") {
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> unif;
  for (int t = 0; t < 100; ++t) {
    Vector scores(12);
    for (Index i = 0; i < 12; ++i) scores(i) = std::round(unif(rng) * 5.0);
    const Index m = 1 + t % 12;
    const auto split = select_effective(CorrelationScores{scores, Metric::Pcc}, m);
    CHECK(static_cast<Index>(split.effective.size()) == m);
    IndexSet all = split.effective;
    all.insert(all.end(), split.ineffective.begin(), split.ineffective.end());
    std::sort(all.begin(), all.end());
    IndexSet expected(12);
    std::iota(expected.begin(), expected.end(), Index{0});
    CHECK(all == expected);
    CHECK(std::is_sorted(split.effective.begin(), split.effective.end()));
    CHECK(std::is_sorted(split.ineffective.begin(), split.ineffective.end()));
    for (Index e : split.effective)
      for (Index i : split.ineffective) CHECK(scores(e) >= scores(i));
  }
}

TEST_CASE("selection is permutation equivariant") {
  Matrix thetas(150, 8);
  for (Index j = 0; j < 8; ++j) thetas.col(j) = normals(150, 400 + static_cast<unsigned>(j));
  const Vector returns = 2.0 * thetas.col(1) - thetas.col(6) + 0.5 * thetas.col(4) + 0.1 * normals(150, 999);
  std::vector<Index> perm{5, 2, 7, 0, 3, 1, 6, 4};
  Matrix permuted(150, 8);
  for (Index j = 0; j < 8; ++j) permuted.col(j) = thetas.col(perm[static_cast<std::size_t>(j)]);
  for (Metric metric : {Metric::Pcc, Metric::MiHistogram}) {
    const auto a = select_effective(score_parameters(thetas, returns, metric, 0), 3);
    const auto b = select_effective(score_parameters(permuted, returns, metric, 0), 3);
    IndexSet mapped;
    for (Index j : b.effective) mapped.push_back(perm[static_cast<std::size_t>(j)]);
    std::sort(mapped.begin(), mapped.end());
    CHECK(mapped == a.effective);
  }
}

TEST_CASE("metric names round-trip") {
  for (Metric m : {Metric::Pcc, Metric::MiHistogram, Metric::MiKsg, Metric::MiKnnRegression, Metric::Random})
    CHECK(parse_metric(to_string(m)) == m);
  CHECK(parse_metric("mi") == Metric::MiKnnRegression);
  CHECK_FALSE(parse_metric("spearman").has_value());
}
