#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "drps/environments.hpp"
#include "drps/errors.hpp"
#include "drps/random.hpp"

namespace drps {

void throw_gain_mismatch(Index rows, Index dim) {
  throw DimensionMismatch(fmt::format("gain has {} rows, LQR dimension is {}", rows, dim));
}

namespace {

bool is_diagonal(const Matrix& m) {
  if (m.rows() != m.cols()) return false;
  Matrix off = m;
  off.diagonal().setZero();
  return off.cwiseAbs().maxCoeff() == 0.0;
}

}  // namespace

void LqrEnv::validate() const {
  const Index n = dim();
  for (const Matrix* m : {&a_mat, &b_mat, &q_mat, &r_mat}) {
    if (m->rows() != n || !is_diagonal(*m)) throw InvalidArgument("LQR matrices must be square, diagonal and equal-sized");
  }
  if ((q_mat.diagonal().array() < 0.0).any()) throw InvalidArgument("Q diagonal must be nonnegative");
  if ((r_mat.diagonal().array() <= 0.0).any()) throw InvalidArgument("R diagonal must be positive");
  if (init_state.size() != n) throw DimensionMismatch("initial state length differs from LQR dimension");
  if (horizon < 0) throw InvalidArgument("horizon must be nonnegative");
  if (!(discount > 0.0) || discount > 1.0) throw InvalidArgument("discount must lie in (0, 1]");
  if (!(clip > 0.0)) throw InvalidArgument("clip bound must be positive");
}

LqrEnv lqr_make(Index dim, Index n_ineffective, std::uint64_t seed, int horizon, double discount, double clip) {
  if (dim < 1) throw InvalidArgument("LQR dimension must be positive");
  if (n_ineffective < 0 || n_ineffective >= dim)
    throw InvalidArgument(fmt::format("n_ineffective={} must be in [0, {})", n_ineffective, dim));
  LqrEnv env;
  env.a_mat = Matrix::Identity(dim, dim);
  env.b_mat = Matrix::Identity(dim, dim);
  env.q_mat = Matrix::Identity(dim, dim);
  env.r_mat = Matrix::Identity(dim, dim);
  env.horizon = horizon;
  env.discount = discount;
  env.clip = clip;
  env.init_state = Vector::Constant(dim, clip);

  IndexSet all(static_cast<std::size_t>(dim));
  std::iota(all.begin(), all.end(), Index{0});
  Rng rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  env.ineffective_dims.assign(all.begin(), all.begin() + n_ineffective);
  std::sort(env.ineffective_dims.begin(), env.ineffective_dims.end());
  for (auto j : env.ineffective_dims) {
    env.q_mat(j, j) = kIneffectiveWeight;
    env.b_mat(j, j) = kIneffectiveWeight;
  }
  env.validate();
  return env;
}

LinearGainPolicy LinearGainPolicy::from_parameters(const Vector& theta, Index dim) {
  if (theta.size() != dim * dim)
    throw DimensionMismatch(fmt::format("{} parameters for a {}x{} gain", theta.size(), dim, dim));
  LinearGainPolicy policy{Matrix(dim, dim)};
  for (Index i = 0; i < dim; ++i)
    for (Index j = 0; j < dim; ++j) policy.gain(i, j) = theta(i * dim + j);
  return policy;
}

LinearGainPolicy LinearGainPolicy::from_feedback_gain(const Matrix& k) { return LinearGainPolicy{-k}; }

Vector LinearGainPolicy::parameters() const {
  const Index n = gain.rows();
  Vector theta(n * gain.cols());
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < gain.cols(); ++j) theta(i * gain.cols() + j) = gain(i, j);
  return theta;
}

EpisodeResult lqr_episode(const LqrEnv& env, const LinearGainPolicy& policy) {
  return lqr_episode_visit(env, policy, [](const Vector&, const Vector&) {});
}

RiccatiSolution lqr_riccati(const LqrEnv& env, double tol, int max_iterations) {
  env.validate();
  const Matrix& a = env.a_mat;
  const Matrix& b = env.b_mat;
  const double g = env.discount;
  RiccatiSolution sol{env.q_mat, Matrix::Zero(env.dim(), env.dim()), 0};
  for (int it = 1; it <= max_iterations; ++it) {
    const Matrix gram = env.r_mat + g * b.transpose() * sol.p * b;
    const Matrix k = gram.ldlt().solve(g * b.transpose() * sol.p * a);
    Matrix next = env.q_mat + g * a.transpose() * sol.p * a - g * a.transpose() * sol.p * b * k;
    next = 0.5 * (next + next.transpose());
    const double change = (next - sol.p).cwiseAbs().maxCoeff();
    sol.p = std::move(next);
    sol.iterations = it;
    if (change < tol) {
      const Matrix gram_final = env.r_mat + g * b.transpose() * sol.p * b;
      sol.k = gram_final.ldlt().solve(g * b.transpose() * sol.p * a);
      return sol;
    }
  }
  throw Error(fmt::format("Riccati recursion did not converge within {} iterations", max_iterations));
}

LinearGainPolicy lqr_optimal_gain(const LqrEnv& env) { return LinearGainPolicy::from_feedback_gain(lqr_riccati(env).k); }

IndexSet lqr_effective_parameters(const LqrEnv& env, double threshold) {
  const Vector theta = lqr_optimal_gain(env).parameters();
  IndexSet out;
  for (Index i = 0; i < theta.size(); ++i)
    if (std::abs(theta(i)) > threshold) out.push_back(i);
  return out;
}

}  // namespace drps
