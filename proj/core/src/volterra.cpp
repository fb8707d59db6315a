#include "svelift/volterra.hpp"

#include <cmath>
#include <stdexcept>

#include "svelift/common.hpp"

namespace svelift {

VolterraTrajectory simulate_volterra(const KernelFn& kernel,
                                     const CoefficientSet& coeffs,
                                     const LevyModel& model,
                                     const JumpPath& path, const TimeGrid& grid,
                                     const ForcingFn& forcing) {
  if (std::abs(path.horizon - grid.horizon) >
      1e-12 * std::max(1.0, grid.horizon)) {
    throw std::invalid_argument(
        "simulate_volterra: path horizon and grid horizon differ");
  }

  const std::size_t d = coeffs.dim;
  const std::size_t m_pts = grid.steps + 1;
  const double dt = grid.dt();

  VolterraTrajectory traj;
  traj.dim = d;
  traj.times.resize(m_pts);
  traj.values.assign(m_pts, std::vector<double>(d, 0.0));
  traj.forcing.assign(m_pts, std::vector<double>(d, 0.0));

  // Effective drift q_m = f(t_m, u_m) - sum_i lambda_i sigma(t_m, xi_i,
  // u_m) and per-event jump amplitudes, filled as the recursion visits
  // each grid point (the scheme is causal: q_m depends on u_m only).
  std::vector<std::vector<double>> q(m_pts, std::vector<double>(d, 0.0));
  std::vector<std::vector<double>> jump_amp(path.events.size(),
                                            std::vector<double>(d, 0.0));

  std::vector<double> work(d);

  for (std::size_t k = 0; k < m_pts; ++k) {
    const double t_k = grid.time(k);
    traj.times[k] = t_k;
    forcing(t_k, traj.forcing[k]);

    std::vector<double>& u = traj.values[k];
    u = traj.forcing[k];

    for (std::size_t m = 0; m < k; ++m) {
      const double kv = kernel(t_k - grid.time(m));
      for (std::size_t c = 0; c < d; ++c) u[c] += dt * kv * q[m][c];
    }

    for (std::size_t e = 0; e < path.events.size(); ++e) {
      const double s = path.events[e].time;
      if (s > t_k) break;
      double lag = t_k - s;
      if (lag == 0.0) {
        // Exact coincidence with a grid point: k(0) may be singular for
        // rough kernels, so use the midpoint value of the first cell.
        lag = 0.5 * dt;
        ++traj.grid_coincidence_fallbacks;
      }
      const double kv = kernel(lag);
      for (std::size_t c = 0; c < d; ++c) u[c] += kv * jump_amp[e][c];
    }

    // Now that u(t_k) is known, fill the quadrature inputs that later
    // grid points will consume.
    if (coeffs.drift) {
      coeffs.drift(t_k, u, work);
      for (std::size_t c = 0; c < d; ++c) q[k][c] += work[c];
    }
    if (coeffs.noise) {
      for (std::size_t i = 0; i < model.n_marks(); ++i) {
        coeffs.noise(t_k, model.marks[i], u, work);
        for (std::size_t c = 0; c < d; ++c) q[k][c] -= model.rates[i] * work[c];
      }
      for (std::size_t e = 0; e < path.events.size(); ++e) {
        const JumpEvent& ev = path.events[e];
        if (bucket(ev.time, grid) != k) continue;
        coeffs.noise(ev.time, model.marks[ev.mark], u, work);
        jump_amp[e] = work;
      }
    }
  }
  return traj;
}

PathComparison compare_series(const std::vector<std::vector<double>>& a,
                              const std::vector<std::vector<double>>& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("compare_series: grids differ in length");
  }
  PathComparison cmp;
  if (a.empty()) return cmp;
  const std::size_t d = a.front().size();
  cmp.per_dim_sup.assign(d, 0.0);
  double sq_sum = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k].size() != d || b[k].size() != d) {
      throw std::invalid_argument("compare_series: dimensions differ");
    }
    double sq = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = std::abs(a[k][c] - b[k][c]);
      cmp.per_dim_sup[c] = std::max(cmp.per_dim_sup[c], diff);
      sq += diff * diff;
    }
    cmp.sup_gap = std::max(cmp.sup_gap, std::sqrt(sq));
    sq_sum += sq;
    ++count;
  }
  cmp.rmse = std::sqrt(sq_sum / static_cast<double>(count));
  return cmp;
}

PathComparison compare_paths(const LiftTrajectory& lift,
                             const VolterraTrajectory& direct) {
  if (lift.times.size() != direct.times.size()) {
    throw std::invalid_argument("compare_paths: grids differ in length");
  }
  for (std::size_t k = 0; k < lift.times.size(); ++k) {
    if (std::abs(lift.times[k] - direct.times[k]) > 1e-12) {
      throw std::invalid_argument("compare_paths: grid times differ");
    }
  }
  return compare_series(lift.projected, direct.values);
}

}  // namespace svelift
