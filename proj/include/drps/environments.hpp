#pragma once

// Evaluation environments: a diagonal LQR with planted ineffective
// dimensions (plus its Riccati oracle) and a ship-steering task driven by a
// tile-coded linear policy.

#include <array>
#include <cstdint>
#include <variant>

#include "drps/gaussian.hpp"

namespace drps {

struct EpisodeResult {
  double discounted_return = 0.0;
  int steps = 0;
  bool terminated_early = false;
};

// ---------------------------------------------------------------------------
// LQR

inline constexpr double kIneffectiveWeight = 1e-20;

struct LqrEnv {
  Matrix a_mat, b_mat, q_mat, r_mat;  // all diagonal
  int horizon = 50;
  double discount = 0.99;
  double clip = 1.0;
  IndexSet ineffective_dims;
  Vector init_state;

  Index dim() const { return a_mat.rows(); }
  /// Checks diagonality, weights and dimensions; throws InvalidArgument.
  void validate() const;
};

/// Identity LQR with `n_ineffective` seeded dimensions whose Q and B
/// diagonals are set to 1e-20.
LqrEnv lqr_make(Index dim, Index n_ineffective, std::uint64_t seed, int horizon = 50, double discount = 0.99,
                double clip = 1.0);

/// Deterministic linear policy u = G·x. The flat parameter vector is G in
/// row-major order, i.e. −K for the usual u = −K·x convention.
struct LinearGainPolicy {
  Matrix gain;  // G

  static LinearGainPolicy from_parameters(const Vector& theta, Index dim);
  /// Policy u = −K·x.
  static LinearGainPolicy from_feedback_gain(const Matrix& k);
  Vector parameters() const;
  Matrix feedback_gain() const { return -gain; }
};

/// Roll the clipped system from init_state for `horizon` steps.
EpisodeResult lqr_episode(const LqrEnv& env, const LinearGainPolicy& policy);

/// Visitor over every clipped (state, action) pair, used by tests.
template <typename Visit>
EpisodeResult lqr_episode_visit(const LqrEnv& env, const LinearGainPolicy& policy, Visit&& visit);

struct RiccatiSolution {
  Matrix p;
  Matrix k;  // feedback gain, u = −K·x
  int iterations = 0;
};

/// Discounted Riccati fixed point; K* = (R + γBᵀPB)⁻¹ γBᵀPA.
RiccatiSolution lqr_riccati(const LqrEnv& env, double tol = 1e-10, int max_iterations = 100000);
LinearGainPolicy lqr_optimal_gain(const LqrEnv& env);

/// Flat parameter indices whose optimal gain magnitude exceeds `threshold`.
IndexSet lqr_effective_parameters(const LqrEnv& env, double threshold = 1e-6);

// ---------------------------------------------------------------------------
// ship steering

struct ShipState {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;  // heading, radians in [−π, π)
  double omega = 0.0;  // turn rate, rad/s
};

struct ShipSteeringEnv {
  double field_size = 150.0;
  std::array<double, 2> gate_start{100.0, 120.0};
  std::array<double, 2> gate_end{120.0, 100.0};
  double dt = 0.2;
  double turning_time_constant = 5.0;
  double speed = 3.0;
  double max_turn_rate = 0.2617993877991494;  // 15 deg/s
  int horizon = 5000;
  double discount = 0.99;
  double step_reward = -1.0;
  double success_reward = 0.0;
  double out_of_bounds_reward = -100.0;

  bool inside(double x, double y) const;
  void validate() const;
};

/// Fixed-constant environment; the seed only exists for interface symmetry
/// (start states are drawn per episode).
ShipSteeringEnv ship_make(std::uint64_t seed = 0);

/// Three tilings over (x, y, heading) with 5×5×6 tiles, tiling t offset by
/// t/3 of a tile width in every dimension.
struct TileCoding {
  static constexpr int kTilings = 3;
  static constexpr std::array<int, 3> kTiles{5, 5, 6};
  static constexpr Index kFeatures = kTilings * 5 * 5 * 6;

  double field_size = 150.0;

  /// Active feature index of each tiling.
  std::array<Index, kTilings> active(const ShipState& state) const;
  Vector features(const ShipState& state) const;
};

Vector tile_features(const TileCoding& coding, const ShipState& state);

/// Uniform start (position in the field, heading, turn rate) from `seed`.
ShipState ship_random_start(const ShipSteeringEnv& env, std::uint64_t seed);
EpisodeResult ship_episode(const ShipSteeringEnv& env, const Vector& weights, std::uint64_t seed);
EpisodeResult ship_episode_from(const ShipSteeringEnv& env, const Vector& weights, const ShipState& start);

// ---------------------------------------------------------------------------
// batch evaluation

using Environment = std::variant<LqrEnv, ShipSteeringEnv>;

Index parameter_count(const Environment& env);

/// returns[i] = return of row i with episode seed base_seed + i. Rows may be
/// spread across `workers` threads; the result does not depend on it.
Vector evaluate_batch(const Environment& env, const Matrix& thetas, std::uint64_t base_seed, int workers = 1);

// ---------------------------------------------------------------------------

[[noreturn]] void throw_gain_mismatch(Index rows, Index dim);

template <typename Visit>
EpisodeResult lqr_episode_visit(const LqrEnv& env, const LinearGainPolicy& policy, Visit&& visit) {
  const Index n = env.dim();
  if (policy.gain.rows() != n || policy.gain.cols() != n) throw_gain_mismatch(policy.gain.rows(), n);
  EpisodeResult result;
  Vector x = env.init_state.cwiseMax(-env.clip).cwiseMin(env.clip);
  const Vector a = env.a_mat.diagonal(), b = env.b_mat.diagonal();
  const Vector q = env.q_mat.diagonal(), r = env.r_mat.diagonal();
  double discount = 1.0;
  for (int t = 0; t < env.horizon; ++t) {
    const Vector u = (policy.gain * x).cwiseMax(-env.clip).cwiseMin(env.clip);
    visit(x, u);
    const double reward = -(x.cwiseProduct(q).dot(x) + u.cwiseProduct(r).dot(u));
    result.discounted_return += discount * reward;
    discount *= env.discount;
    x = (a.cwiseProduct(x) + b.cwiseProduct(u)).cwiseMax(-env.clip).cwiseMin(env.clip);
    ++result.steps;
  }
  return result;
}
}  // namespace drps
