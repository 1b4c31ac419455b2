#include <fmt/format.h>

#include <exception>
#include <thread>
#include <vector>

#include "drps/environments.hpp"
#include "drps/errors.hpp"

namespace drps {

Index parameter_count(const Environment& env) {
  return std::visit(
      [](const auto& e) -> Index {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, LqrEnv>)
          return e.dim() * e.dim();
        else
          return TileCoding::kFeatures;
      },
      env);
}

namespace {

double episode_return(const Environment& env, const Vector& theta, std::uint64_t seed) {
  return std::visit(
      [&](const auto& e) -> double {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, LqrEnv>)
          return lqr_episode(e, LinearGainPolicy::from_parameters(theta, e.dim())).discounted_return;
        else
          return ship_episode(e, theta, seed).discounted_return;
      },
      env);
}

}  // namespace

Vector evaluate_batch(const Environment& env, const Matrix& thetas, std::uint64_t base_seed, int workers) {
  const Index rows = thetas.rows();
  Vector returns(rows);
  if (rows == 0) return returns;
  if (thetas.cols() != parameter_count(env))
    throw DimensionMismatch(
        fmt::format("policy expects {} parameters, batch rows have {}", parameter_count(env), thetas.cols()));

  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(rows));
  auto run_rows = [&](Index first, Index stride) {
    for (Index i = first; i < rows; i += stride) {
      try {
        returns(i) = episode_return(env, thetas.row(i).transpose(), base_seed + static_cast<std::uint64_t>(i));
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };

  const Index n_workers = std::clamp<Index>(workers, 1, rows);
  if (n_workers == 1) {
    run_rows(0, 1);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (Index w = 0; w < n_workers; ++w) pool.emplace_back(run_rows, w, n_workers);
  }

  for (Index i = 0; i < rows; ++i) {
    if (auto err = errors[static_cast<std::size_t>(i)]) {
      try {
        std::rethrow_exception(err);
      } catch (const std::exception& e) {
        throw Error(fmt::format("row {}: {}", i, e.what()));
      }
    }
  }
  return returns;
}

}  // namespace drps
