#include "drps/policy_search.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "drps/errors.hpp"
#include "drps/random.hpp"

namespace drps {

std::string_view to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::Reps: return "reps";
    case Algorithm::Creps: return "creps";
    case Algorithm::DrReps: return "dr-reps";
    case Algorithm::DrCreps: return "dr-creps";
    case Algorithm::Rwr: return "rwr";
    case Algorithm::Cem: return "cem";
  }
  return "unknown";
}

std::optional<Algorithm> parse_algorithm(std::string_view text) {
  if (text == "reps" || text == "REPS") return Algorithm::Reps;
  if (text == "creps" || text == "CREPS" || text == "c-reps") return Algorithm::Creps;
  if (text == "dr-reps" || text == "DR-REPS") return Algorithm::DrReps;
  if (text == "dr-creps" || text == "DR-CREPS") return Algorithm::DrCreps;
  if (text == "rwr" || text == "RWR") return Algorithm::Rwr;
  if (text == "cem" || text == "CEM") return Algorithm::Cem;
  return std::nullopt;
}

bool is_dimensionality_reduced(Algorithm algorithm) {
  return algorithm == Algorithm::DrReps || algorithm == Algorithm::DrCreps;
}

void AlgorithmConfig::validate(std::optional<Index> dim) const {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw ConfigError(fmt::format("eps must be positive (got {})", eps));
  if (!(kappa > 0.0) || !std::isfinite(kappa)) throw ConfigError(fmt::format("kappa must be positive (got {})", kappa));
  if (m < 1) throw ConfigError(fmt::format("m must be positive (got {})", m));
  if (!(lambda > 0.0) || lambda > 1.0) throw ConfigError(fmt::format("lambda must lie in (0, 1] (got {})", lambda));
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError(fmt::format("beta must be positive (got {})", beta));
  if (elite_count < 1) throw ConfigError(fmt::format("elite_count must be positive (got {})", elite_count));
  if (mi.bins < 2) throw ConfigError("histogram bins must be at least 2");
  if (mi.neighbors < 1) throw ConfigError("neighbor count must be positive");
  if (dim && m > *dim) throw ConfigError(fmt::format("m={} exceeds parameter dimension {}", m, *dim));
}

SearchState::SearchState(GaussianDist initial) : dist(initial), sampling_dist(std::move(initial)) {}

SearchState::SearchState(GaussianDist dist_, GaussianDist sampling_, std::optional<RotatedFrame> frame_,
                         std::optional<EffectiveSplit> split_, int epoch_)
    : dist(std::move(dist_)),
      sampling_dist(std::move(sampling_)),
      frame(std::move(frame_)),
      split(std::move(split_)),
      epoch(epoch_) {}

// ---------------------------------------------------------------------------
// REPS dual

namespace {

constexpr double kEtaLow = 1e-8;
constexpr double kEtaHigh = 1e8;

void check_returns(const Vector& returns) {
  if (returns.size() < 2) throw InvalidArgument("the REPS dual needs at least two returns");
  if (!returns.allFinite()) throw InvalidArgument("non-finite returns");
}

double kl_at(const Vector& returns, double eta) { return weights_kl_from_uniform(compute_weights(returns, eta)); }

}  // namespace

double weights_kl_from_uniform(const Vector& weights) {
  const double total = weights.sum();
  const auto n = static_cast<double>(weights.size());
  double kl = 0.0;
  for (Index i = 0; i < weights.size(); ++i) {
    const double w = weights(i) / total;
    if (w > 0.0) kl += w * std::log(w * n);
  }
  return std::max(0.0, kl);
}

Vector compute_weights(const Vector& returns, double eta_star) {
  if (!(eta_star > 0.0)) throw InvalidArgument("eta must be positive");
  if (!returns.allFinite()) throw InvalidArgument("non-finite returns");
  return ((returns.array() - returns.maxCoeff()) / eta_star).exp().matrix();
}

double reps_dual(const Vector& returns, double eps, double eta) {
  const double max_j = returns.maxCoeff();
  const double mean_exp = ((returns.array() - max_j) / eta).exp().mean();
  return eta * eps + eta * std::log(mean_exp) + max_j;
}

DualSolution reps_dual_minimize(const Vector& returns, double eps) {
  check_returns(returns);
  if (!(eps > 0.0)) throw InvalidArgument("eps must be positive");
  const double range = returns.maxCoeff() - returns.minCoeff();
  if (!(range > 0.0)) return {1.0, returns.maxCoeff() + eps, true};

  // g'(η) = eps − KL(w_η || uniform) is increasing in η, so bisect on its sign
  // in log-space.
  double lo = kEtaLow * range;
  double hi = kEtaHigh * range;
  double eta = 0.0;
  if (kl_at(returns, lo) <= eps) {
    eta = lo;
  } else if (kl_at(returns, hi) >= eps) {
    eta = hi;
  } else {
    for (int it = 0; it < 300 && hi / lo - 1.0 > 1e-15; ++it) {
      const double mid = std::sqrt(lo * hi);
      if (kl_at(returns, mid) > eps)
        lo = mid;
      else
        hi = mid;
    }
    eta = std::sqrt(lo * hi);
  }
  return {eta, reps_dual(returns, eps, eta), false};
}

// ---------------------------------------------------------------------------
// updates

namespace {

void check_batch(const SearchState& state, const SampleBatch& batch) {
  if (batch.thetas.cols() != state.dist.dim())
    throw DimensionMismatch(
        fmt::format("batch has {} parameters, distribution has {}", batch.thetas.cols(), state.dist.dim()));
  if (batch.thetas.rows() != batch.returns.size()) throw DimensionMismatch("batch rows and returns differ");
}

SearchState plain_successor(const SearchState& state, GaussianDist dist) {
  return SearchState(dist, dist, std::nullopt, std::nullopt, state.epoch + 1);
}

template <typename Fn>
auto with_context(const std::string& context, Fn&& fn) {
  try {
    return fn();
  } catch (const IndefiniteCovariance& e) {
    throw IndefiniteCovariance(fmt::format("{}: {}", context, e.what()));
  } catch (const DegenerateDistribution& e) {
    throw DegenerateDistribution(fmt::format("{}: {}", context, e.what()));
  } catch (const ConstrainedUpdateFailed& e) {
    throw ConstrainedUpdateFailed(fmt::format("{}: {}", context, e.what()));
  }
}

SearchState dr_update(const SearchState& state, const SampleBatch& batch, const AlgorithmConfig& config,
                      std::uint64_t seed, bool constrained) {
  check_batch(state, batch);
  const Index n = state.dist.dim();
  config.validate(n);
  // the KL-regularized fit stays positive definite below m samples; plain WMLE does not
  if (!constrained && config.reduce && batch.size() < config.m + 2)
    throw ConfigError(
        fmt::format("DR-REPS needs at least m + 2 = {} samples per update (got {})", config.m + 2, batch.size()));

  // rotate into the decorrelated frame and score each rotated coordinate
  const RotatedFrame frame = svd_rotate(state.dist);
  const Matrix rotated = project_samples(frame, state.dist.mean(), batch.thetas);
  const auto scores = score_parameters(rotated, batch.returns, config.metric,
                                       derive_seed(seed, {static_cast<std::uint64_t>(state.epoch)}), config.mi);
  EffectiveSplit split = select_effective(scores, config.m);

  const auto dual = reps_dual_minimize(batch.returns, config.eps);
  const Vector weights = compute_weights(batch.returns, dual.eta_star);

  const std::string context = fmt::format("epoch {} (m={}, effective={})", state.epoch, config.m, split.effective);

  // fit the effective sub-distribution N(0, diag(s_eff)) only
  IndexSet fit_set = split.effective;
  if (!config.reduce) {
    fit_set.resize(static_cast<std::size_t>(n));
    std::iota(fit_set.begin(), fit_set.end(), Index{0});
  }
  const Matrix s_full = frame.s.asDiagonal();
  const Matrix eff_thetas = extract_columns(rotated, fit_set);
  const GaussianDist fitted = with_context(context, [&] {
    if (constrained) {
      const GaussianDist eff_prev(Vector::Zero(static_cast<Index>(fit_set.size())), extract(s_full, fit_set));
      return constrained_wmle(eff_prev, eff_thetas, weights, config.eps, config.kappa, nullptr, config.covariance);
    }
    return wmle_fit(eff_thetas, weights, config.covariance);
  });

  const Vector mean_rot = subst(Vector::Zero(n).eval(), fitted.mean(), fit_set);
  const Matrix s_new = subst(s_full, fitted.cov(), fit_set);
  GaussianDist dist =
      with_context(context, [&] { return back_project(state.dist.mean(), frame, mean_rot, s_new); });

  GaussianDist sampling = config.lambda < 1.0
                              ? with_context(context,
                                             [&] {
                                               return prioritized_sampling_dist(dist, frame, s_new, split,
                                                                                config.lambda);
                                             })
                              : dist;
  return SearchState(std::move(dist), std::move(sampling), frame, std::move(split), state.epoch + 1);
}

}  // namespace

GaussianDist prioritized_sampling_dist(const GaussianDist& target, const RotatedFrame& frame, const Matrix& s_mat,
                                       const EffectiveSplit& split, double lambda) {
  if (split.ineffective.empty()) return target;
  const Matrix scaled = lambda * extract(s_mat, split.ineffective);
  const Matrix s_prime = subst(s_mat, scaled, split.ineffective);
  // mean is the target's mean exactly
  const GaussianDist rotated = back_project(target.mean(), frame, Vector::Zero(target.dim()), s_prime);
  return GaussianDist(target.mean(), rotated.cov());
}

SearchState reps_update(const SearchState& state, const SampleBatch& batch, double eps, CovarianceKind kind) {
  check_batch(state, batch);
  const auto dual = reps_dual_minimize(batch.returns, eps);
  const std::string context = fmt::format("epoch {}", state.epoch);
  return plain_successor(
      state, with_context(context, [&] { return wmle_fit(batch.thetas, compute_weights(batch.returns, dual.eta_star), kind); }));
}

SearchState creps_update(const SearchState& state, const SampleBatch& batch, double eps, double kappa,
                         CovarianceKind kind) {
  check_batch(state, batch);
  const auto dual = reps_dual_minimize(batch.returns, eps);
  const Vector weights = compute_weights(batch.returns, dual.eta_star);
  const std::string context = fmt::format("epoch {}", state.epoch);
  return plain_successor(state, with_context(context, [&] {
                           return constrained_wmle(state.dist, batch.thetas, weights, eps, kappa, nullptr, kind);
                         }));
}

SearchState dr_creps_update(const SearchState& state, const SampleBatch& batch, const AlgorithmConfig& config,
                            std::uint64_t seed) {
  return dr_update(state, batch, config, seed, true);
}

SearchState dr_reps_update(const SearchState& state, const SampleBatch& batch, const AlgorithmConfig& config,
                           std::uint64_t seed) {
  return dr_update(state, batch, config, seed, false);
}

SearchState rwr_update(const SearchState& state, const SampleBatch& batch, double beta) {
  check_batch(state, batch);
  if (!(beta > 0.0)) throw InvalidArgument("beta must be positive");
  const Vector weights = (beta * (batch.returns.array() - batch.returns.maxCoeff())).exp().matrix();
  const std::string context = fmt::format("epoch {}", state.epoch);
  return plain_successor(state, with_context(context, [&] { return wmle_fit(batch.thetas, weights); }));
}

SearchState cem_update(const SearchState& state, const SampleBatch& batch, Index elite_count) {
  check_batch(state, batch);
  if (elite_count < 2 || elite_count > batch.size())
    throw InvalidArgument(fmt::format("elite_count={} outside [2, {}]", elite_count, batch.size()));
  IndexSet order(static_cast<std::size_t>(batch.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return batch.returns(a) > batch.returns(b); });
  Matrix elites(elite_count, batch.thetas.cols());
  for (Index i = 0; i < elite_count; ++i) elites.row(i) = batch.thetas.row(order[static_cast<std::size_t>(i)]);
  const std::string context = fmt::format("epoch {}", state.epoch);
  return plain_successor(state,
                         with_context(context, [&] { return wmle_fit(elites, Vector::Ones(elite_count)); }));
}

SearchState update(const SearchState& state, const SampleBatch& batch, const AlgorithmConfig& config,
                   std::uint64_t seed) {
  switch (config.algorithm) {
    case Algorithm::Reps: return reps_update(state, batch, config.eps, config.covariance);
    case Algorithm::Creps: return creps_update(state, batch, config.eps, config.kappa, config.covariance);
    case Algorithm::DrReps: return dr_reps_update(state, batch, config, seed);
    case Algorithm::DrCreps: return dr_creps_update(state, batch, config, seed);
    case Algorithm::Rwr: return rwr_update(state, batch, config.beta);
    case Algorithm::Cem: return cem_update(state, batch, config.elite_count);
  }
  throw ConfigError("unknown algorithm");
}

}  // namespace drps
