#include <doctest.h>

#include <cmath>
#include <random>

#include "drps/environments.hpp"
#include "drps/errors.hpp"
#include "drps/policy_search.hpp"
#include "oracles.hpp"

using namespace drps;

namespace {

Vector of(std::initializer_list<double> values) {
  Vector v(static_cast<Index>(values.size()));
  Index i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

Vector normalized(const Vector& w) { return w / w.sum(); }

// Quadratic bowl −‖θ − t‖² around a fixed target.
SampleBatch bowl_batch(const GaussianDist& dist, const Vector& target, std::uint64_t seed, Index count) {
  Matrix thetas = sample(dist, seed, count);
  Vector returns(count);
  for (Index i = 0; i < count; ++i) returns(i) = -(thetas.row(i).transpose() - target).squaredNorm();
  return {thetas, returns};
}

SampleBatch lqr_batch(const LqrEnv& env, const GaussianDist& dist, std::uint64_t seed, Index count) {
  Matrix thetas = sample(dist, seed, count);
  return {thetas, evaluate_batch(Environment(env), thetas, seed)};
}

AlgorithmConfig dr_config(Algorithm algorithm, Index m, double lambda) {
  AlgorithmConfig c;
  c.algorithm = algorithm;
  c.m = m;
  c.lambda = lambda;
  c.metric = Metric::Pcc;
  c.eps = 0.5;
  c.kappa = 2.0;
  return c;
}

double max_diff(const GaussianDist& a, const GaussianDist& b) {
  return std::max((a.mean() - b.mean()).cwiseAbs().maxCoeff(), (a.cov() - b.cov()).cwiseAbs().maxCoeff());
}

}  // namespace

TEST_CASE("flat returns give uniform weights") {
  const Vector flat = Vector::Constant(6, 5.0);
  const auto dual = reps_dual_minimize(flat, 0.5);
  CHECK(dual.flat);
  CHECK(compute_weights(flat, dual.eta_star) == Vector::Ones(6));
}

TEST_CASE("dual optimum matches the KL bisection oracle") {
  const auto dual = reps_dual_minimize(of({1, 0}), 0.01);
  CHECK(weights_kl_from_uniform(compute_weights(of({1, 0}), dual.eta_star)) == doctest::Approx(0.01).epsilon(0.1));
  CHECK(dual.eta_star == doctest::Approx(oracle::kl_temperature(of({1, 0}), 0.01)).epsilon(1e-3));

  std::mt19937 rng(5);
  std::normal_distribution<double> normal;
  for (int t = 0; t < 50; ++t) {
    Vector returns(30);
    for (Index i = 0; i < 30; ++i) returns(i) = 10.0 * normal(rng);
    const double eps = 0.05 + 0.05 * t;
    const auto sol = reps_dual_minimize(returns, eps);
    CHECK(sol.eta_star > 0.0);
    CHECK(std::isfinite(sol.eta_star));
    CHECK(oracle::weights_kl(returns, sol.eta_star) == doctest::Approx(eps).epsilon(1e-3));
  }
}

TEST_CASE("dual is scale covariant and shift invariant") {
  const Vector returns = of({3.0, -1.0, 0.5, 2.2, -4.0, 1.1});
  const auto base = reps_dual_minimize(returns, 0.3);
  const Vector wb = normalized(compute_weights(returns, base.eta_star));
  for (double c : {0.01, 2.0, 300.0}) {
    const auto scaled = reps_dual_minimize(c * returns, 0.3);
    CHECK(scaled.eta_star == doctest::Approx(c * base.eta_star).epsilon(1e-6));
    CHECK((normalized(compute_weights(c * returns, scaled.eta_star)) - wb).cwiseAbs().maxCoeff() < 1e-8);
  }
  const Vector shifted = (returns.array() + 1234.5).matrix();
  CHECK((compute_weights(shifted, 0.7) - compute_weights(returns, 0.7)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("dual value is minimal at the reported temperature") {
  const Vector returns = of({1.0, 4.0, -2.0, 0.3, 2.5});
  const auto sol = reps_dual_minimize(returns, 0.2);
  CHECK(sol.dual_value == doctest::Approx(reps_dual(returns, 0.2, sol.eta_star)));
  for (double f : {0.5, 0.9, 1.1, 2.0}) CHECK(reps_dual(returns, 0.2, f * sol.eta_star) >= sol.dual_value - 1e-12);
}

TEST_CASE("dual rejects non-finite returns") {
  CHECK_THROWS_AS(reps_dual_minimize(of({1.0, NAN}), 0.1), InvalidArgument);
}

TEST_CASE("compute_weights") {
  CHECK(compute_weights(of({5, 5, 5}), 2.0) == Vector::Ones(3));
  const Vector w = compute_weights(of({1, 0}), 1.0);
  CHECK(w(0) == 1.0);
  CHECK(w(1) == doctest::Approx(std::exp(-1.0)));
  CHECK((compute_weights(of({3, -2, 0.5}), 1e12) - Vector::Ones(3)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("reps_update") {
  const auto dist = GaussianDist::isotropic(3, 1.0);
  const SearchState state(dist);
  const Matrix thetas = sample(dist, 3, 40);
  const auto flat = reps_update(state, {thetas, Vector::Zero(40)}, 0.5);
  CHECK(max_diff(flat.dist, wmle_fit(thetas, Vector::Ones(40))) < 1e-12);
  CHECK(flat.epoch == 1);

  Vector target(3);
  target << 2.0, -1.0, 0.5;
  const auto batch = bowl_batch(dist, target, 9, 500);
  const auto next = reps_update(state, batch, 0.5);
  CHECK((next.dist.mean() - target).norm() < (dist.mean() - target).norm());
  CHECK(max_diff(reps_update(state, batch, 0.5).dist, next.dist) == 0.0);
}

TEST_CASE("creps_update") {
  const auto dist = GaussianDist::isotropic(3, 1.0);
  const SearchState state(dist);
  Vector target(3);
  target << 2.0, -1.0, 0.5;
  const auto batch = bowl_batch(dist, target, 10, 200);
  const auto informed = creps_update(state, batch, 0.5, 50.0);
  CHECK((informed.dist.mean() - target).norm() < target.norm());
  CHECK(kl_divergence(dist, informed.dist) <= 0.5 + 1e-4);

  // returns unrelated to θ keep the REPS fit near the prior, so the bounds are
  // inactive and C-REPS reproduces it
  const Matrix wide = sample(dist, 12, 2000);
  std::mt19937 rng(13);
  std::normal_distribution<double> normal;
  Vector noise(2000);
  for (Index i = 0; i < 2000; ++i) noise(i) = normal(rng);
  const auto plain = reps_update(state, {wide, noise}, 0.5);
  REQUIRE(kl_divergence(dist, plain.dist) < 0.5);
  REQUIRE(entropy(dist) - entropy(plain.dist) < 2.0);
  CHECK(max_diff(creps_update(state, {wide, noise}, 0.5, 2.0).dist, plain.dist) < 1e-9);

  // three samples in three dimensions give a singular fit, so the KL bound binds
  const Matrix few = sample(dist, 11, 3);
  const auto step = creps_update(state, {few, of({0.0, -1.0, -2.5})}, 0.2, 50.0);
  CHECK(kl_divergence(dist, step.dist) <= 0.2 + 1e-4);
  CHECK(kl_divergence(dist, step.dist) >= 0.95 * 0.2);
}

TEST_CASE("creps on the diagonal LQR respects both bounds every epoch") {
  const auto env = lqr_make(10, 7, 0);
  SearchState state(GaussianDist::isotropic(100, 0.3));
  for (int epoch = 0; epoch < 15; ++epoch) {
    const auto batch = lqr_batch(env, state.sampling_dist, 100 + static_cast<std::uint64_t>(epoch), 25);
    const auto next = creps_update(state, batch, 2.5, 6.0, CovarianceKind::Diagonal);
    CHECK(kl_divergence(state.dist, next.dist) <= 2.5 + 1e-4);
    CHECK(entropy(state.dist) - entropy(next.dist) <= 6.0 + 1e-4);
    state = next;
  }
}

TEST_CASE("dr_creps with m = n and no PE reduces to creps") {
  const auto env = lqr_make(3, 1, 0);
  auto cfg = dr_config(Algorithm::DrCreps, 9, 1.0);
  SearchState dr(GaussianDist::isotropic(9, 0.3)), plain = dr;
  for (int epoch = 0; epoch < 20; ++epoch) {
    const auto batch = lqr_batch(env, plain.sampling_dist, static_cast<std::uint64_t>(epoch), 30);
    dr = dr_creps_update(dr, batch, cfg);
    plain = creps_update(plain, batch, cfg.eps, cfg.kappa);
    CHECK(max_diff(dr.dist, plain.dist) < 1e-6);
  }
}

TEST_CASE("dr_reps with m = n and no PE reduces to reps") {
  const auto env = lqr_make(3, 1, 0);
  auto cfg = dr_config(Algorithm::DrReps, 9, 1.0);
  SearchState dr(GaussianDist::isotropic(9, 0.3)), plain = dr;
  for (int epoch = 0; epoch < 20; ++epoch) {
    const auto batch = lqr_batch(env, plain.sampling_dist, static_cast<std::uint64_t>(epoch), 40);
    dr = dr_reps_update(dr, batch, cfg);
    plain = reps_update(plain, batch, cfg.eps);
    CHECK(max_diff(dr.dist, plain.dist) < 1e-6);
  }
}

TEST_CASE("prioritized exploration shrinks ineffective directions") {
  const auto env = lqr_make(4, 2, 1);
  const SearchState state(GaussianDist::isotropic(16, 0.3));
  const auto batch = lqr_batch(env, state.dist, 3, 60);
  const auto next = dr_creps_update(state, batch, dr_config(Algorithm::DrCreps, 5, 0.5));
  REQUIRE(next.frame.has_value());
  REQUIRE(next.split.has_value());
  CHECK(next.sampling_dist.mean() == next.dist.mean());

  const Matrix draws = sample(next.sampling_dist, 77, 10000);
  const Matrix rot = project_samples(*next.frame, next.sampling_dist.mean(), draws);
  for (Index j : next.split->ineffective) {
    const Vector axis = next.frame->u.col(j);
    const double target_var = axis.dot(next.dist.cov() * axis);
    const double empirical = rot.col(j).squaredNorm() / 10000.0;
    CHECK(empirical / target_var == doctest::Approx(0.5).epsilon(0.2));
  }
}

TEST_CASE("target distribution does not depend on lambda") {
  const auto env = lqr_make(4, 2, 1);
  const SearchState state(GaussianDist::isotropic(16, 0.3));
  const auto batch = lqr_batch(env, state.dist, 4, 60);
  for (Algorithm algorithm : {Algorithm::DrCreps, Algorithm::DrReps}) {
    const auto a = update(state, batch, dr_config(algorithm, 5, 0.3));
    const auto b = update(state, batch, dr_config(algorithm, 5, 1.0));
    CHECK(a.dist.mean() == b.dist.mean());
    CHECK(a.dist.cov() == b.dist.cov());
    CHECK((b.sampling_dist.cov() - b.dist.cov()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(a.sampling_dist.cov() != a.dist.cov());
  }
}

TEST_CASE("dr_reps leaves the ineffective rotated block untouched") {
  const auto env = lqr_make(4, 2, 2);
  SearchState state(GaussianDist::isotropic(16, 0.3));
  const auto cfg = dr_config(Algorithm::DrReps, 4, 1.0);
  state = dr_reps_update(state, lqr_batch(env, state.dist, 1, 40), cfg);
  const auto frame = svd_rotate(state.dist);
  const auto next = dr_reps_update(state, lqr_batch(env, state.dist, 2, 40), cfg);
  const Matrix s_new = next.frame->u.transpose() * next.dist.cov() * next.frame->u;
  for (Index j : next.split->ineffective) CHECK(s_new(j, j) == doctest::Approx(frame.s(j)).epsilon(1e-9));
  bool off_diagonal = false;
  for (Index a : next.split->effective)
    for (Index b : next.split->effective)
      if (a != b && std::abs(s_new(a, b)) > 1e-8) off_diagonal = true;
  CHECK(off_diagonal);
}

TEST_CASE("dr_reps guards the batch size") {
  const SearchState state(GaussianDist::isotropic(9, 0.3));
  const Matrix thetas = sample(state.dist, 1, 6);
  const SampleBatch batch(thetas, thetas.col(0));
  CHECK_THROWS_AS(dr_reps_update(state, batch, dr_config(Algorithm::DrReps, 5, 1.0)), ConfigError);
  CHECK_NOTHROW(dr_creps_update(state, batch, dr_config(Algorithm::DrCreps, 5, 1.0)));
}

TEST_CASE("dr_creps respects the bounds over a run") {
  const auto env = lqr_make(10, 7, 0);
  SearchState state(GaussianDist::isotropic(100, 0.3));
  auto cfg = dr_config(Algorithm::DrCreps, 50, 0.1);
  cfg.eps = 4.7;
  cfg.kappa = 17.0;
  for (int epoch = 0; epoch < 10; ++epoch) {
    const auto batch = lqr_batch(env, state.sampling_dist, 500 + static_cast<std::uint64_t>(epoch), 50);
    const auto next = update(state, batch, cfg, 3);
    CHECK(kl_divergence(state.dist, next.dist) <= cfg.eps + 1e-4);
    CHECK(entropy(state.dist) - entropy(next.dist) <= cfg.kappa + 1e-4);
    CHECK(is_positive_definite(next.dist.cov()));
    state = next;
  }
}

TEST_CASE("update is deterministic in state, batch, config and seed") {
  const auto env = lqr_make(4, 2, 0);
  const SearchState state(GaussianDist::isotropic(16, 0.3));
  const auto batch = lqr_batch(env, state.dist, 8, 30);
  auto cfg = dr_config(Algorithm::DrCreps, 6, 0.2);
  cfg.metric = Metric::Random;
  const auto a = update(state, batch, cfg, 11), b = update(state, batch, cfg, 11);
  CHECK(a.dist.cov() == b.dist.cov());
  CHECK(a.split->effective == b.split->effective);
  CHECK(update(state, batch, cfg, 12).split->effective != a.split->effective);
}

TEST_CASE("no-reduce mode refits every coordinate") {
  const auto env = lqr_make(3, 1, 0);
  const SearchState state(GaussianDist::isotropic(9, 0.3));
  const auto batch = lqr_batch(env, state.dist, 5, 30);
  auto cfg = dr_config(Algorithm::DrCreps, 2, 1.0);
  cfg.reduce = false;
  const auto dr = dr_creps_update(state, batch, cfg);
  CHECK(max_diff(dr.dist, creps_update(state, batch, cfg.eps, cfg.kappa).dist) < 1e-6);
  cfg.lambda = 0.5;
  CHECK(dr_creps_update(state, batch, cfg).split->effective.size() == 2);
}

TEST_CASE("rwr_update") {
  const auto dist = GaussianDist::isotropic(2, 1.0);
  const SearchState state(dist);
  const Matrix thetas = sample(dist, 1, 30);
  Vector returns(30);
  for (Index i = 0; i < 30; ++i) returns(i) = -thetas.row(i).squaredNorm();
  CHECK(max_diff(rwr_update(state, {thetas, returns}, 1e-12).dist, wmle_fit(thetas, Vector::Ones(30))) < 1e-9);

  const Vector w = (0.2 * (returns.array() - returns.maxCoeff())).exp().matrix();
  CHECK(w.maxCoeff() == 1.0);
  CHECK(w.minCoeff() >= std::exp(0.2 * (returns.minCoeff() - returns.maxCoeff())) - 1e-15);
  CHECK(max_diff(rwr_update(state, {thetas, returns}, 0.2).dist, wmle_fit(thetas, w)) < 1e-12);
  CHECK_THROWS_AS(rwr_update(state, {thetas, returns}, 0.0), InvalidArgument);
}

TEST_CASE("cem_update") {
  const auto dist = GaussianDist::isotropic(2, 1.0);
  const SearchState state(dist);
  Matrix thetas = sample(dist, 2, 20);
  Vector returns = Vector::LinSpaced(20, -10, -1);
  CHECK(max_diff(cem_update(state, {thetas, returns}, 20).dist, wmle_fit(thetas, Vector::Ones(20))) < 1e-12);

  for (Index i = 15; i < 20; ++i) thetas.row(i).array() += 10.0;
  const Vector cluster_mean = thetas.bottomRows(5).colwise().mean();
  CHECK((cem_update(state, {thetas, returns}, 5).dist.mean() - cluster_mean).cwiseAbs().maxCoeff() < 1e-12);

  Matrix same = thetas;
  for (Index i = 15; i < 20; ++i) same.row(i) = same.row(19);
  CHECK_THROWS_AS(cem_update(state, {same, returns}, 5), DegenerateDistribution);
  CHECK_THROWS_AS(cem_update(state, {thetas, returns}, 21), InvalidArgument);
}

TEST_CASE("algorithm config validation") {
  AlgorithmConfig c;
  CHECK_NOTHROW(c.validate(100));
  c.lambda = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.lambda = 1.0;
  c.m = 101;
  CHECK_THROWS_AS(c.validate(100), ConfigError);
  c.m = 50;
  c.eps = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  for (Algorithm a : {Algorithm::Reps, Algorithm::Creps, Algorithm::DrReps, Algorithm::DrCreps, Algorithm::Rwr,
                      Algorithm::Cem})
    CHECK(parse_algorithm(to_string(a)) == a);
  CHECK(is_dimensionality_reduced(Algorithm::DrReps));
  CHECK_FALSE(is_dimensionality_reduced(Algorithm::Creps));
}
