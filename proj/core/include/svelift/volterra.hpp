#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "svelift/lift.hpp"

namespace svelift {

/// Scalar memory kernel k(t), evaluable on (0, T].
using KernelFn = std::function<double(double)>;

/// Deterministic forcing t -> x(t) in R^d.
using ForcingFn = std::function<void(double t, std::span<double> out)>;

/// Grid samples of the directly discretized Volterra solution.
struct VolterraTrajectory {
  std::size_t dim = 0;
  std::vector<double> times;
  std::vector<std::vector<double>> values;   // u(t_k)
  std::vector<std::vector<double>> forcing;  // x(t_k)
  /// Number of events that fell exactly on a grid point and used the
  /// midpoint kernel value k(dt/2) instead of the singular k(0).
  std::size_t grid_coincidence_fallbacks = 0;
};

/// Explicit left-point convolution quadrature for
///   u(t) = x(t) + int k(t-s) f(s, u(s)) ds
///        + int int k(t-s) sigma(s, xi, u(s)) (pi - nu)(ds, dxi):
///   u_k = x(t_k)
///       + dt * sum_{m<k} k(t_k - t_m) [f(t_m, u_m) - sum_i lambda_i
///         sigma(t_m, xi_i, u_m)]
///       + sum_{events s <= t_k} k(t_k - s) sigma(s, xi, u at s's step
///         left endpoint).
/// The scheme never evaluates k at 0: quadrature offsets are >= dt and
/// an event coinciding exactly with a grid point falls back to k(dt/2)
/// (counted in the trajectory).
VolterraTrajectory simulate_volterra(const KernelFn& kernel,
                                     const CoefficientSet& coeffs,
                                     const LevyModel& model,
                                     const JumpPath& path, const TimeGrid& grid,
                                     const ForcingFn& forcing);

/// Sup-grid gap, RMSE, and per-component maxima between two trajectories
/// on identical grids.
struct PathComparison {
  double sup_gap = 0.0;
  double rmse = 0.0;
  std::vector<double> per_dim_sup;
};

PathComparison compare_series(const std::vector<std::vector<double>>& a,
                              const std::vector<std::vector<double>>& b);

PathComparison compare_paths(const LiftTrajectory& lift,
                             const VolterraTrajectory& direct);

}  // namespace svelift
