#include "svelift/lift.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "svelift/common.hpp"

namespace svelift {

std::size_t bucket(double t, const TimeGrid& grid) {
  if (t <= 0.0) return 0;
  std::size_t k = static_cast<std::size_t>(t / grid.dt());
  if (k >= grid.steps) k = grid.steps - 1;
  // An event exactly on a grid point belongs to the step ending there.
  if (k > 0 && t <= grid.time(k)) --k;
  return k;
}

LiftState immerse(std::shared_ptr<const BernsteinMeasure> measure,
                  std::span<const double> v) {
  LiftState state;
  state.dim = v.size();
  state.time = 0.0;
  state.values.resize(measure->size() * v.size());
  for (std::size_t j = 0; j < measure->size(); ++j) {
    for (std::size_t c = 0; c < v.size(); ++c) state.at(j, c) = v[c];
  }
  state.measure = std::move(measure);
  return state;
}

std::vector<double> project(const LiftState& state) {
  const auto& atoms = state.measure->atoms();
  std::vector<double> u(state.dim, 0.0);
  for (std::size_t j = 0; j < atoms.size(); ++j) {
    const double w = atoms[j].weight;
    for (std::size_t c = 0; c < state.dim; ++c) u[c] += w * state.at(j, c);
  }
  return u;
}

namespace {

double weighted_norm(const LiftState& state, bool v_weight) {
  const auto& atoms = state.measure->atoms();
  double acc = 0.0;
  for (std::size_t j = 0; j < atoms.size(); ++j) {
    double w = atoms[j].weight * weight_function(atoms[j].rate);
    if (v_weight) w *= 1.0 + atoms[j].rate;
    double row = 0.0;
    for (std::size_t c = 0; c < state.dim; ++c) {
      const double y = state.at(j, c);
      row += y * y;
    }
    acc += w * row;
  }
  return std::sqrt(acc);
}

/// phi(dt) = (1 - exp(-x dt))/x, continuously extended to dt at x = 0.
double phi_weight(double x, double dt) {
  if (x == 0.0) return dt;
  return -std::expm1(-x * dt) / x;
}

}  // namespace

std::vector<double> expand_initial_field(const BernsteinMeasure& measure,
                                         const std::vector<double>& y0,
                                         std::size_t dim) {
  const std::size_t n = measure.size();
  if (y0.size() == n * dim) return y0;
  if (y0.size() == dim) {
    std::vector<double> full(n * dim);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t c = 0; c < dim; ++c) full[j * dim + c] = y0[c];
    }
    return full;
  }
  std::ostringstream os;
  os << "expected " << dim << " (constant field) or " << n * dim
     << " (per-atom field) values, got " << y0.size();
  throw ConfigError("coefficients.y0", os.str());
}

double h_norm(const LiftState& state) { return weighted_norm(state, false); }
double v_norm(const LiftState& state) { return weighted_norm(state, true); }

LiftState semigroup_apply(const LiftState& state, double t) {
  if (!(t >= 0.0)) {
    throw std::invalid_argument("semigroup_apply: t must be >= 0");
  }
  LiftState out = state;
  out.time = state.time + t;
  const auto& atoms = state.measure->atoms();
  for (std::size_t j = 0; j < atoms.size(); ++j) {
    const double decay = std::exp(-atoms[j].rate * t);
    for (std::size_t c = 0; c < state.dim; ++c) out.at(j, c) *= decay;
  }
  return out;
}

std::vector<double> forcing_eval(const BernsteinMeasure& measure,
                                 std::span<const double> y0, std::size_t dim,
                                 double t) {
  if (!(t >= 0.0)) throw std::invalid_argument("forcing_eval: t must be >= 0");
  const auto& atoms = measure.atoms();
  const bool constant_field = y0.size() == dim;
  std::vector<double> out(dim, 0.0);
  for (std::size_t j = 0; j < atoms.size(); ++j) {
    const double f = atoms[j].weight * std::exp(-atoms[j].rate * t);
    for (std::size_t c = 0; c < dim; ++c) {
      out[c] += f * (constant_field ? y0[c] : y0[j * dim + c]);
    }
  }
  return out;
}

void CoefficientSet::validate(const LevyModel& model, Stream& rng,
                              std::size_t pairs, double tolerance) const {
  std::vector<double> u(dim), v(dim), fu(dim), fv(dim), su(dim), sv(dim);
  for (std::size_t p = 0; p < pairs; ++p) {
    const double t = rng.uniform();
    double dist = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
      u[c] = 10.0 * rng.uniform() - 5.0;
      v[c] = 10.0 * rng.uniform() - 5.0;
      const double d = u[c] - v[c];
      dist += d * d;
    }
    dist = std::sqrt(dist);

    if (drift) {
      drift(t, u, fu);
      drift(t, v, fv);
      double gap = 0.0;
      for (std::size_t c = 0; c < dim; ++c) {
        const double d = fu[c] - fv[c];
        gap += d * d;
      }
      if (std::sqrt(gap) > lip_f * dist + tolerance) {
        throw ConfigError("coefficients.f",
                          "drift violates its declared Lipschitz constant");
      }
    }
    if (noise) {
      const std::size_t mark = rng.categorical(model.rates);
      noise(t, model.marks[mark], u, su);
      noise(t, model.marks[mark], v, sv);
      double gap = 0.0;
      for (std::size_t c = 0; c < dim; ++c) {
        const double d = su[c] - sv[c];
        gap += d * d;
      }
      if (std::sqrt(gap) > lip_sigma * dist + tolerance) {
        throw ConfigError(
            "coefficients.sigma",
            "jump coefficient violates its declared Lipschitz constant");
      }
    }
  }
}

void step(LiftState& state, const CoefficientSet& coeffs,
          const LevyModel& model, std::span<const JumpEvent> events,
          double dt) {
  const auto& atoms = state.measure->atoms();
  const std::size_t n = atoms.size();
  const std::size_t d = state.dim;
  const double t = state.time;

  const std::vector<double> u = project(state);

  // Effective drift: f minus the compensator sum_i lambda_i sigma_i,
  // both frozen at the step's left endpoint (predictable evaluation).
  std::vector<double> eff(d, 0.0);
  std::vector<double> work(d);
  if (coeffs.drift) {
    coeffs.drift(t, u, work);
    for (std::size_t c = 0; c < d; ++c) eff[c] += work[c];
  }
  if (coeffs.noise) {
    for (std::size_t i = 0; i < model.n_marks(); ++i) {
      coeffs.noise(t, model.marks[i], u, work);
      for (std::size_t c = 0; c < d; ++c) eff[c] -= model.rates[i] * work[c];
    }
  }

  for (std::size_t j = 0; j < n; ++j) {
    const double decay = std::exp(-atoms[j].rate * dt);
    const double phi = phi_weight(atoms[j].rate, dt);
    for (std::size_t c = 0; c < d; ++c) {
      state.at(j, c) = decay * state.at(j, c) + phi * eff[c];
    }
  }

  if (coeffs.noise) {
    for (const JumpEvent& ev : events) {
      coeffs.noise(ev.time, model.marks[ev.mark], u, work);
      for (std::size_t j = 0; j < n; ++j) {
        const double decay = std::exp(-atoms[j].rate * (t + dt - ev.time));
        for (std::size_t c = 0; c < d; ++c) {
          state.at(j, c) += decay * work[c];
        }
      }
    }
  }

  state.time = t + dt;
}

LiftTrajectory simulate_lift(std::shared_ptr<const BernsteinMeasure> measure,
                             const CoefficientSet& coeffs,
                             const LevyModel& model, const JumpPath& path,
                             const TimeGrid& grid,
                             const std::vector<double>& y0) {
  if (std::abs(path.horizon - grid.horizon) >
      1e-12 * std::max(1.0, grid.horizon)) {
    throw std::invalid_argument(
        "simulate_lift: path horizon and grid horizon differ");
  }

  const std::size_t d = coeffs.dim;
  LiftTrajectory traj;
  traj.measure = measure;
  traj.dim = d;
  traj.times.resize(grid.steps + 1);
  traj.states.reserve(grid.steps + 1);
  traj.projected.resize(grid.steps + 1);

  LiftState state;
  state.measure = measure;
  state.dim = d;
  state.time = 0.0;
  state.values = expand_initial_field(*measure, y0, d);

  traj.times[0] = 0.0;
  traj.states.push_back(state);
  traj.projected[0] = project(state);

  std::size_t ev = 0;
  const double dt = grid.dt();
  for (std::size_t k = 0; k < grid.steps; ++k) {
    const double t_next = grid.time(k + 1);
    const std::size_t first = ev;
    while (ev < path.events.size() && path.events[ev].time <= t_next) ++ev;
    step(state, coeffs, model,
         std::span<const JumpEvent>(path.events.data() + first, ev - first),
         dt);
    state.time = t_next;  // pin to the grid to avoid accumulation drift
    traj.times[k + 1] = t_next;
    traj.states.push_back(state);
    traj.projected[k + 1] = project(state);
  }
  return traj;
}

PicardResult picard_solve(std::shared_ptr<const BernsteinMeasure> measure,
                          const CoefficientSet& coeffs, const LevyModel& model,
                          const JumpPath& path, const TimeGrid& grid,
                          const std::vector<double>& y0, double tol,
                          std::size_t max_iter) {
  if (std::abs(path.horizon - grid.horizon) >
      1e-12 * std::max(1.0, grid.horizon)) {
    throw std::invalid_argument(
        "picard_solve: path horizon and grid horizon differ");
  }

  const auto& atoms = measure->atoms();
  const std::size_t n = atoms.size();
  const std::size_t d = coeffs.dim;
  const std::size_t m_pts = grid.steps + 1;
  const double dt = grid.dt();

  const std::vector<double> init = expand_initial_field(*measure, y0, d);

  // Semigroup part S(t_k) y0, fixed across iterations.
  std::vector<double> base(m_pts * n * d);
  for (std::size_t k = 0; k < m_pts; ++k) {
    const double t = grid.time(k);
    for (std::size_t j = 0; j < n; ++j) {
      const double decay = std::exp(-atoms[j].rate * t);
      for (std::size_t c = 0; c < d; ++c) {
        base[(k * n + j) * d + c] = decay * init[j * d + c];
      }
    }
  }

  // v-norm atom weights and per-step decay factors.
  std::vector<double> vw(n), step_decay(n);
  for (std::size_t j = 0; j < n; ++j) {
    vw[j] = atoms[j].weight * (1.0 + atoms[j].rate) *
            weight_function(atoms[j].rate);
    step_decay[j] = std::exp(-atoms[j].rate * dt);
  }

  const double big_k =
      measure->projection_constant() *
      (coeffs.lip_f + coeffs.lip_sigma * model.total_rate());
  const double beta = std::max(1.0, 4.0 * big_k * big_k);

  std::vector<double> prev = base;
  std::vector<double> next(prev.size());
  std::vector<double> u(d), work(d), eff(d);

  PicardResult result;
  result.beta = beta;

  for (std::size_t it = 0; it < max_iter; ++it) {
    // Projections of the previous iterate at every grid point.
    std::vector<std::vector<double>> proj(m_pts, std::vector<double>(d, 0.0));
    for (std::size_t k = 0; k < m_pts; ++k) {
      for (std::size_t j = 0; j < n; ++j) {
        const double w = atoms[j].weight;
        for (std::size_t c = 0; c < d; ++c) {
          proj[k][c] += w * prev[(k * n + j) * d + c];
        }
      }
    }

    // One fixed-point application, computed for all grid points in
    // O(M n d) via the semigroup recursions
    //   A_j(k+1) = e^{-x_j dt} (A_j(k) + dt * q_k)       (drift integral)
    //   R_j(k+1) = e^{-x_j dt} R_j(k) + new-event terms  (jump integral)
    // where q_k = f(t_k, u_k) - sum_i lambda_i sigma(t_k, xi_i, u_k).
    std::vector<double> acc_drift(n * d, 0.0), acc_jump(n * d, 0.0);
    std::size_t ev = 0;
    std::copy(base.begin(), base.end(), next.begin());

    for (std::size_t k = 0; k + 1 < m_pts; ++k) {
      const double t = grid.time(k);
      u = proj[k];

      for (std::size_t c = 0; c < d; ++c) eff[c] = 0.0;
      if (coeffs.drift) {
        coeffs.drift(t, u, work);
        for (std::size_t c = 0; c < d; ++c) eff[c] += work[c];
      }
      if (coeffs.noise) {
        for (std::size_t i = 0; i < model.n_marks(); ++i) {
          coeffs.noise(t, model.marks[i], u, work);
          for (std::size_t c = 0; c < d; ++c) {
            eff[c] -= model.rates[i] * work[c];
          }
        }
      }

      const double t_next = grid.time(k + 1);
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t c = 0; c < d; ++c) {
          acc_drift[j * d + c] =
              step_decay[j] * (acc_drift[j * d + c] + dt * eff[c]);
          acc_jump[j * d + c] *= step_decay[j];
        }
      }
      if (coeffs.noise) {
        while (ev < path.events.size() && path.events[ev].time <= t_next) {
          const JumpEvent& e = path.events[ev];
          coeffs.noise(e.time, model.marks[e.mark], u, work);
          for (std::size_t j = 0; j < n; ++j) {
            const double decay = std::exp(-atoms[j].rate * (t_next - e.time));
            for (std::size_t c = 0; c < d; ++c) {
              acc_jump[j * d + c] += decay * work[c];
            }
          }
          ++ev;
        }
      } else {
        while (ev < path.events.size() && path.events[ev].time <= t_next) ++ev;
      }

      double* out = &next[(k + 1) * n * d];
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t c = 0; c < d; ++c) {
          out[j * d + c] += acc_drift[j * d + c] + acc_jump[j * d + c];
        }
      }
    }

    // Successive-gap norms.
    double gap = 0.0, weighted_gap = 0.0;
    for (std::size_t k = 0; k < m_pts; ++k) {
      double sq = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        double row = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          const double diff =
              next[(k * n + j) * d + c] - prev[(k * n + j) * d + c];
          row += diff * diff;
        }
        sq += vw[j] * row;
      }
      const double g = std::sqrt(sq);
      gap = std::max(gap, g);
      weighted_gap = std::max(weighted_gap, std::exp(-beta * grid.time(k)) * g);
    }
    result.gap_history.push_back(gap);
    result.weighted_gap_history.push_back(weighted_gap);
    prev.swap(next);

    if (gap < tol) {
      result.iterations = result.gap_history.size();
      LiftTrajectory traj;
      traj.measure = measure;
      traj.dim = d;
      traj.times.resize(m_pts);
      traj.states.reserve(m_pts);
      traj.projected.resize(m_pts);
      for (std::size_t k = 0; k < m_pts; ++k) {
        LiftState s;
        s.measure = measure;
        s.dim = d;
        s.time = grid.time(k);
        s.values.assign(prev.begin() + static_cast<std::ptrdiff_t>(k * n * d),
                        prev.begin() +
                            static_cast<std::ptrdiff_t>((k + 1) * n * d));
        traj.times[k] = s.time;
        traj.projected[k] = project(s);
        traj.states.push_back(std::move(s));
      }
      result.trajectory = std::move(traj);
      return result;
    }
  }

  std::ostringstream os;
  os << "picard_solve: no convergence to tol " << tol << " within " << max_iter
     << " iterations (last gap " << result.gap_history.back() << ")";
  throw ConvergenceError(os.str(), result.gap_history);
}

}  // namespace svelift
