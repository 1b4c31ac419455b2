#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "drps/environments.hpp"
#include "drps/errors.hpp"
#include "drps/random.hpp"

namespace drps {

namespace {

constexpr double kPi = std::numbers::pi;

double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0.0) a += 2.0 * kPi;
  return a - kPi;
}

double cross(double ox, double oy, double ax, double ay, double bx, double by) {
  return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox);
}

// Closed segments p1p2 and q1q2 intersect.
bool segments_intersect(double p1x, double p1y, double p2x, double p2y, double q1x, double q1y, double q2x,
                        double q2y) {
  const double d1 = cross(q1x, q1y, q2x, q2y, p1x, p1y);
  const double d2 = cross(q1x, q1y, q2x, q2y, p2x, p2y);
  const double d3 = cross(p1x, p1y, p2x, p2y, q1x, q1y);
  const double d4 = cross(p1x, p1y, p2x, p2y, q2x, q2y);
  return ((d1 > 0 && d2 <= 0) || (d1 < 0 && d2 >= 0) || (d1 == 0 && d2 != 0)) &&
         ((d3 > 0 && d4 <= 0) || (d3 < 0 && d4 >= 0) || (d3 == 0 && d4 != 0));
}

}  // namespace

bool ShipSteeringEnv::inside(double x, double y) const {
  return x >= 0.0 && x <= field_size && y >= 0.0 && y <= field_size;
}

void ShipSteeringEnv::validate() const {
  if (!(dt > 0.0) || !(speed > 0.0) || horizon <= 0 || !(turning_time_constant > 0.0))
    throw InvalidArgument("ship steering: dt, speed, horizon and time constant must be positive");
  if (!inside(gate_start[0], gate_start[1]) || !inside(gate_end[0], gate_end[1]))
    throw InvalidArgument("ship steering: gate endpoints must lie inside the field");
}

ShipSteeringEnv ship_make(std::uint64_t /*seed*/) {
  ShipSteeringEnv env;
  env.validate();
  return env;
}

std::array<Index, TileCoding::kTilings> TileCoding::active(const ShipState& state) const {
  if (!(state.x >= 0.0 && state.x <= field_size && state.y >= 0.0 && state.y <= field_size))
    throw InvalidArgument(fmt::format("state ({}, {}) outside the tiled field", state.x, state.y));
  const std::array<double, 3> low{0.0, 0.0, -kPi};
  const std::array<double, 3> width{field_size / kTiles[0], field_size / kTiles[1], 2.0 * kPi / kTiles[2]};
  const std::array<double, 3> value{state.x, state.y, wrap_angle(state.theta)};
  std::array<Index, kTilings> out{};
  const Index per_tiling = kTiles[0] * kTiles[1] * kTiles[2];
  for (int t = 0; t < kTilings; ++t) {
    std::array<Index, 3> idx{};
    for (std::size_t d = 0; d < 3; ++d) {
      const double pos = (value[d] - low[d]) / width[d] + static_cast<double>(t) / kTilings;
      idx[d] = std::clamp<Index>(static_cast<Index>(std::floor(pos)), 0, kTiles[d] - 1);
    }
    out[static_cast<std::size_t>(t)] = t * per_tiling + (idx[0] * kTiles[1] + idx[1]) * kTiles[2] + idx[2];
  }
  return out;
}

Vector TileCoding::features(const ShipState& state) const {
  Vector phi = Vector::Zero(kFeatures);
  for (auto i : active(state)) phi(i) = 1.0;
  return phi;
}

Vector tile_features(const TileCoding& coding, const ShipState& state) { return coding.features(state); }

ShipState ship_random_start(const ShipSteeringEnv& env, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> pos(0.0, env.field_size);
  std::uniform_real_distribution<double> heading(-kPi, kPi);
  std::uniform_real_distribution<double> turn(-env.max_turn_rate, env.max_turn_rate);
  ShipState s;
  s.x = pos(rng);
  s.y = pos(rng);
  s.theta = heading(rng);
  s.omega = turn(rng);
  return s;
}

EpisodeResult ship_episode_from(const ShipSteeringEnv& env, const Vector& weights, const ShipState& start) {
  if (weights.size() != TileCoding::kFeatures)
    throw DimensionMismatch(fmt::format("ship policy needs {} weights (got {})", TileCoding::kFeatures, weights.size()));
  EpisodeResult result;
  if (!env.inside(start.x, start.y)) {
    result.discounted_return = env.out_of_bounds_reward;
    result.steps = 1;
    result.terminated_early = true;
    return result;
  }
  const TileCoding coding{env.field_size};
  ShipState s = start;
  double discount = 1.0;
  for (int t = 0; t < env.horizon; ++t) {
    double action = 0.0;
    for (auto i : coding.active(s)) action += weights(i);
    action = std::clamp(action, -env.max_turn_rate, env.max_turn_rate);

    ShipState next;
    next.x = s.x + env.speed * std::cos(s.theta) * env.dt;
    next.y = s.y + env.speed * std::sin(s.theta) * env.dt;
    next.theta = wrap_angle(s.theta + s.omega * env.dt);
    next.omega = s.omega + (action - s.omega) * env.dt / env.turning_time_constant;

    double reward = env.step_reward;
    bool done = false;
    if (!env.inside(next.x, next.y)) {
      reward = env.out_of_bounds_reward;
      done = true;
    } else if (segments_intersect(s.x, s.y, next.x, next.y, env.gate_start[0], env.gate_start[1], env.gate_end[0],
                                  env.gate_end[1])) {
      reward = env.success_reward;
      done = true;
    }
    result.discounted_return += discount * reward;
    discount *= env.discount;
    ++result.steps;
    s = next;
    if (done) {
      result.terminated_early = true;
      break;
    }
  }
  return result;
}

EpisodeResult ship_episode(const ShipSteeringEnv& env, const Vector& weights, std::uint64_t seed) {
  return ship_episode_from(env, weights, ship_random_start(env, seed));
}

}  // namespace drps
