#include "svelift/bsde.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>

#include <Eigen/Dense>

#include "svelift/common.hpp"
#include "svelift/stats.hpp"

namespace svelift {

namespace {

void enumerate_monomials(std::size_t dim, unsigned max_total,
                         std::vector<unsigned>& current, std::size_t pos,
                         unsigned used,
                         std::vector<std::vector<unsigned>>& out) {
  if (pos == dim) {
    out.push_back(current);
    return;
  }
  for (unsigned e = 0; used + e <= max_total; ++e) {
    current[pos] = e;
    enumerate_monomials(dim, max_total, current, pos + 1, used + e, out);
  }
  current[pos] = 0;
}

}  // namespace

FeatureMap FeatureMap::make(std::size_t dim, std::size_t degree,
                            std::vector<std::size_t> lift_atoms) {
  FeatureMap fm;
  fm.dim = dim;
  fm.degree = degree;
  fm.lift_atoms = std::move(lift_atoms);
  std::vector<unsigned> current(dim, 0);
  enumerate_monomials(dim, static_cast<unsigned>(degree), current, 0, 0,
                      fm.exponents);
  return fm;
}

void FeatureMap::eval(std::span<const double> u, const LiftState* state,
                      std::span<double> out) const {
  std::size_t p = 0;
  for (const auto& expnt : exponents) {
    double v = 1.0;
    for (std::size_t c = 0; c < dim; ++c) {
      for (unsigned e = 0; e < expnt[c]; ++e) v *= u[c];
    }
    out[p++] = v;
  }
  for (std::size_t atom : lift_atoms) {
    for (std::size_t c = 0; c < dim; ++c) out[p++] = state->at(atom, c);
  }
}

namespace {

/// Least-squares solve reused across the backward sweep: QR of the
/// feature matrix when it has full column rank, otherwise a logged ridge
/// on the normal equations.
class StepRegression {
 public:
  StepRegression(const Eigen::MatrixXd& x, double ridge_scale)
      : x_(x), qr_(x) {
    rank_deficient_ = qr_.rank() < x.cols();
    if (rank_deficient_) {
      Eigen::MatrixXd gram = x.transpose() * x;
      regularizer_ =
          ridge_scale * gram.trace() / static_cast<double>(x.cols());
      gram.diagonal().array() += regularizer_;
      ldlt_.compute(gram);
    }
  }

  bool rank_deficient() const noexcept { return rank_deficient_; }
  double regularizer() const noexcept { return regularizer_; }

  Eigen::VectorXd solve(const Eigen::VectorXd& y) const {
    if (rank_deficient_) return ldlt_.solve(x_.transpose() * y);
    return qr_.solve(y);
  }

 private:
  const Eigen::MatrixXd& x_;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;
  Eigen::LDLT<Eigen::MatrixXd> ldlt_;
  bool rank_deficient_ = false;
  double regularizer_ = 0.0;
};

}  // namespace

BsdeSolution bsde_solve(const ControlProblem& problem, const BsdeConfig& config,
                        const RngFamily& rng) {
  const TimeGrid grid = problem.grid;
  const std::size_t m_steps = grid.steps;
  const std::size_t d = problem.coeffs.dim;
  const std::size_t n_marks = problem.levy.n_marks();
  const std::size_t n_actions = problem.n_actions();
  const double dt = grid.dt();
  const std::size_t n = config.n_paths;

  BsdeSolution sol;
  sol.grid = grid;
  sol.dim = d;
  sol.features = FeatureMap::make(d, config.degree, config.lift_feature_atoms);
  const std::size_t p = sol.features.size();

  for (std::size_t atom : config.lift_feature_atoms) {
    if (atom >= problem.measure->size()) {
      throw ConfigError("numerics.lift_feature_atoms",
                        "atom index out of range");
    }
  }
  if (n < std::max<std::size_t>(2, 2 * p)) {
    std::ostringstream os;
    os << "need at least " << std::max<std::size_t>(2, 2 * p)
       << " forward paths for " << p << " regression features, got " << n;
    throw ConfigError("numerics.n_paths", os.str());
  }
  sol.diagnostics.projection_only_features =
      problem.measure->size() > 1 && config.lift_feature_atoms.empty();

  const std::size_t n_sel = config.lift_feature_atoms.size();
  const std::vector<double> init =
      expand_initial_field(*problem.measure, problem.y0, d);

  // ---- Forward ensemble under the base measure ----
  // Stored per path: the projection u at every grid point, per-step
  // per-mark event counts, and (when requested) the selected raw lift
  // coordinates.
  std::vector<double> u_store(n * (m_steps + 1) * d);
  std::vector<std::uint16_t> counts(n * m_steps * n_marks, 0);
  std::vector<double> lift_store(n_sel ? n * (m_steps + 1) * n_sel * d : 0);

  parallel_for(n, [&](std::size_t i) {
    Stream stream = rng.stream(i);
    const JumpPath path = sample_path(problem.levy, grid.horizon, stream);

    LiftState state;
    state.measure = problem.measure;
    state.dim = d;
    state.time = 0.0;
    state.values = init;

    const auto record = [&](std::size_t k) {
      const std::vector<double> u = project(state);
      for (std::size_t c = 0; c < d; ++c) {
        u_store[(i * (m_steps + 1) + k) * d + c] = u[c];
      }
      for (std::size_t s = 0; s < n_sel; ++s) {
        for (std::size_t c = 0; c < d; ++c) {
          lift_store[((i * (m_steps + 1) + k) * n_sel + s) * d + c] =
              state.at(config.lift_feature_atoms[s], c);
        }
      }
    };

    record(0);
    std::size_t ev = 0;
    for (std::size_t k = 0; k < m_steps; ++k) {
      const double t_next = grid.time(k + 1);
      const std::size_t first = ev;
      while (ev < path.events.size() && path.events[ev].time <= t_next) {
        std::uint16_t& cnt =
            counts[(i * m_steps + k) * n_marks + path.events[ev].mark];
        if (cnt < UINT16_MAX) ++cnt;
        ++ev;
      }
      step(state, problem.coeffs, problem.levy,
           std::span<const JumpEvent>(path.events.data() + first, ev - first),
           dt);
      state.time = t_next;
      record(k + 1);
    }
  });

  // Helper to materialize the feature matrix at grid point k.
  Eigen::MatrixXd x(n, p);
  std::vector<double> feat(p);
  LiftState feature_state;  // scratch carrying the selected lift rows
  feature_state.measure = problem.measure;
  feature_state.dim = d;
  const auto build_features = [&](std::size_t k) {
    for (std::size_t i = 0; i < n; ++i) {
      std::span<const double> u(&u_store[(i * (m_steps + 1) + k) * d], d);
      const LiftState* stptr = nullptr;
      if (n_sel) {
        // Rebuild a sparse stand-in whose selected rows are correct.
        feature_state.values.assign(problem.measure->size() * d, 0.0);
        for (std::size_t s = 0; s < n_sel; ++s) {
          for (std::size_t c = 0; c < d; ++c) {
            feature_state.at(config.lift_feature_atoms[s], c) =
                lift_store[((i * (m_steps + 1) + k) * n_sel + s) * d + c];
          }
        }
        stptr = &feature_state;
      }
      sol.features.eval(u, stptr, feat);
      for (std::size_t q = 0; q < p; ++q) {
        x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(q)) = feat[q];
      }
    }
  };

  // ---- Terminal condition and its diagnostic fit ----
  Eigen::VectorXd theta(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::span<const double> u(&u_store[(i * (m_steps + 1) + m_steps) * d], d);
    theta(static_cast<Eigen::Index>(i)) = problem.terminal_cost(u);
  }

  sol.theta_mean.assign(m_steps + 1, 0.0);
  sol.theta_mean[m_steps] = theta.mean();

  build_features(m_steps);
  {
    StepRegression reg(x, config.ridge_scale);
    if (reg.rank_deficient()) {
      sol.diagnostics.ridge_events.push_back(
          {m_steps, "terminal", reg.regularizer()});
    }
    const Eigen::VectorXd coef = reg.solve(theta);
    sol.terminal_coeffs.assign(coef.data(), coef.data() + p);
    sol.diagnostics.terminal_fit_rmse =
        std::sqrt((x * coef - theta).squaredNorm() / static_cast<double>(n));
  }

  sol.value_coeffs.assign(m_steps, {});
  sol.z_coeffs.assign(m_steps, {});
  sol.action_value_mean.assign(m_steps, std::vector<double>(n_actions, 0.0));
  sol.diagnostics.value_r2.assign(m_steps, 0.0);
  sol.diagnostics.martingale_residual_mean.assign(m_steps, 0.0);
  sol.diagnostics.martingale_residual_se.assign(m_steps, 0.0);

  // Running |l| integral along each path under the per-step argmin, for
  // the declared moment assumption's finite-sample check.
  std::vector<double> l_abs_integral(n, 0.0);

  Eigen::VectorXd ehat(n), target(n), theta_new(n);
  Eigen::MatrixXd zhat(n, n_marks);
  std::vector<double> residual(n);
  std::vector<double> action_values(n * n_actions);
  std::vector<double> z_sq(n, 0.0);

  // ---- Backward sweep ----
  for (std::size_t k_plus = m_steps; k_plus-- > 0;) {
    const std::size_t k = k_plus;
    const double t_k = grid.time(k);
    build_features(k);

    StepRegression reg(x, config.ridge_scale);
    if (reg.rank_deficient()) {
      sol.diagnostics.ridge_events.push_back({k, "value", reg.regularizer()});
    }

    // Conditional-mean surrogate of Theta_{k+1}.
    const Eigen::VectorXd value_coef = reg.solve(theta);
    sol.value_coeffs[k].assign(value_coef.data(), value_coef.data() + p);
    ehat = x * value_coef;
    {
      const double mean = theta.mean();
      const double sst = (theta.array() - mean).square().sum();
      const double ssr = (theta - ehat).squaredNorm();
      sol.diagnostics.value_r2[k] = sst > 0.0 ? 1.0 - ssr / sst : 1.0;
    }

    // Z surrogate per mark: regress the baseline-subtracted martingale
    // increment. Subtracting ehat leaves the conditional expectation
    // unchanged (the increment is mean-zero given the step's start) and
    // makes the fitted Z exactly zero when Theta_{k+1} is
    // ensemble-constant.
    sol.z_coeffs[k].assign(n_marks, {});
    for (std::size_t m = 0; m < n_marks; ++m) {
      const double lam_dt = problem.levy.rates[m] * dt;
      for (std::size_t i = 0; i < n; ++i) {
        const double dpi =
            static_cast<double>(counts[(i * m_steps + k) * n_marks + m]) -
            lam_dt;
        target(static_cast<Eigen::Index>(i)) =
            (theta(static_cast<Eigen::Index>(i)) -
             ehat(static_cast<Eigen::Index>(i))) *
            dpi / lam_dt;
      }
      if (reg.rank_deficient()) {
        std::ostringstream os;
        os << "z:" << m;
        sol.diagnostics.ridge_events.push_back({k, os.str(), reg.regularizer()});
      }
      const Eigen::VectorXd z_coef = reg.solve(target);
      sol.z_coeffs[k][m].assign(z_coef.data(), z_coef.data() + p);
      zhat.col(static_cast<Eigen::Index>(m)) = x * z_coef;
    }

    // Driver evaluation per path: Hamiltonian candidates per action.
    parallel_for(n, [&](std::size_t i) {
      std::span<const double> u(&u_store[(i * (m_steps + 1) + k) * d], d);
      double best = 0.0;
      std::size_t best_action = 0;
      for (std::size_t a = 0; a < n_actions; ++a) {
        double val = problem.running_cost(t_k, u, a);
        for (std::size_t m = 0; m < n_marks; ++m) {
          val += zhat(static_cast<Eigen::Index>(i),
                      static_cast<Eigen::Index>(m)) *
                 (problem.intensity(t_k, u, problem.levy.marks[m], a) - 1.0) *
                 problem.levy.rates[m];
        }
        action_values[i * n_actions + a] = val;
        if (a == 0 || val < best) {
          best = val;
          best_action = a;
        }
      }
      theta_new(static_cast<Eigen::Index>(i)) =
          ehat(static_cast<Eigen::Index>(i)) + dt * best;
      l_abs_integral[i] += dt * std::abs(problem.running_cost(t_k, u, best_action));

      double mart = theta(static_cast<Eigen::Index>(i)) -
                    theta_new(static_cast<Eigen::Index>(i)) + dt * best;
      double zsq = 0.0;
      for (std::size_t m = 0; m < n_marks; ++m) {
        const double z = zhat(static_cast<Eigen::Index>(i),
                              static_cast<Eigen::Index>(m));
        const double lam_dt = problem.levy.rates[m] * dt;
        const double dpi =
            static_cast<double>(counts[(i * m_steps + k) * n_marks + m]) -
            lam_dt;
        mart -= z * dpi;
        zsq += z * z * problem.levy.rates[m];
      }
      residual[i] = mart;
      if (k == 0) z_sq[i] = zsq;
    });

    for (std::size_t a = 0; a < n_actions; ++a) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += action_values[i * n_actions + a];
      sol.action_value_mean[k][a] = acc / static_cast<double>(n);
    }
    {
      const Summary s = summarize(residual);
      sol.diagnostics.martingale_residual_mean[k] = s.mean;
      sol.diagnostics.martingale_residual_se[k] = s.se;
    }

    theta.swap(theta_new);
    sol.theta_mean[k] = theta.mean();
  }

  {
    std::vector<double> theta0(theta.data(), theta.data() + n);
    const Summary s = summarize(theta0);
    sol.theta0 = s.mean;
    sol.theta0_se = s.se;
  }
  {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += std::pow(l_abs_integral[i], problem.cost_moment_exponent);
    }
    sol.diagnostics.cost_moment = acc / static_cast<double>(n);
    double zacc = 0.0;
    for (std::size_t i = 0; i < n; ++i) zacc += z_sq[i];
    sol.diagnostics.z_l2_nu = zacc / static_cast<double>(n);
  }
  return sol;
}

Policy feedback_policy(std::shared_ptr<const BsdeSolution> solution,
                       const ControlProblem& problem) {
  // The closure owns a copy of the problem's cost/intensity functions so
  // the policy stays valid independently of the caller's lifetime.
  ControlProblem prob = problem;
  return Policy::feedback(
      [solution, prob = std::move(prob)](double t, const LiftState& pre_jump) {
        const TimeGrid& grid = solution->grid;
        std::size_t k =
            static_cast<std::size_t>(std::floor(t / grid.dt() + 1e-9));
        if (k >= grid.steps) k = grid.steps - 1;

        const std::vector<double> u = project(pre_jump);
        std::vector<double> feat(solution->features.size());
        solution->features.eval(u, &pre_jump, feat);

        std::vector<double> z(prob.levy.n_marks(), 0.0);
        for (std::size_t m = 0; m < z.size(); ++m) {
          const std::vector<double>& coef = solution->z_coeffs[k][m];
          double acc = 0.0;
          for (std::size_t q = 0; q < coef.size(); ++q) acc += coef[q] * feat[q];
          z[m] = acc;
        }
        return hamiltonian(prob, t, u, z).argmin;
      },
      "feedback");
}

std::vector<RelationRow> fundamental_relation_check(
    const ControlProblem& problem, const BsdeSolution& solution,
    const std::vector<Policy>& policies, std::size_t eval_paths,
    const RngFamily& rng) {
  std::vector<RelationRow> rows;
  const double floor_se = 1e-9;  // absolute floor for zero-variance cases

  const auto evaluate = [&](const Policy& policy, bool two_sided) {
    const CostEstimate est = cost_evaluate(problem, policy, eval_paths, rng);
    RelationRow row;
    row.policy = policy.label();
    row.j = est.j;
    row.se = est.se;
    row.gap = est.j - solution.theta0;
    const double band =
        3.0 * std::sqrt(est.se * est.se + solution.theta0_se * solution.theta0_se) +
        floor_se;
    row.pass = two_sided ? std::abs(row.gap) <= band : row.gap >= -band;
    rows.push_back(row);
  };

  auto shared = std::make_shared<BsdeSolution>(solution);
  evaluate(feedback_policy(shared, problem), true);
  for (const Policy& policy : policies) evaluate(policy, false);
  return rows;
}

std::optional<double> extract_switch_time(const BsdeSolution& solution,
                                          std::size_t action_a,
                                          std::size_t action_b,
                                          std::size_t window) {
  const auto& avm = solution.action_value_mean;
  const std::size_t m_steps = avm.size();
  if (m_steps < 2) return std::nullopt;

  std::vector<double> diff(m_steps);
  for (std::size_t k = 0; k < m_steps; ++k) {
    diff[k] = avm[k][action_a] - avm[k][action_b];
  }

  std::size_t crossing = m_steps;
  for (std::size_t k = 0; k + 1 < m_steps; ++k) {
    if ((diff[k] > 0.0) != (diff[k + 1] > 0.0)) {
      crossing = k;
      break;
    }
  }
  if (crossing == m_steps) return std::nullopt;

  // Local-linear fit of the gap around the raw crossing; its root
  // smooths the Monte Carlo noise of the per-step means.
  const std::size_t lo = crossing >= window ? crossing - window : 0;
  const std::size_t hi = std::min(m_steps - 1, crossing + 1 + window);
  double st = 0.0, sd = 0.0, stt = 0.0, std_ = 0.0;
  const double count = static_cast<double>(hi - lo + 1);
  for (std::size_t k = lo; k <= hi; ++k) {
    const double t = solution.grid.time(k);
    st += t;
    sd += diff[k];
    stt += t * t;
    std_ += t * diff[k];
  }
  const double denom = count * stt - st * st;
  if (denom == 0.0) return std::nullopt;
  const double slope = (count * std_ - st * sd) / denom;
  if (slope == 0.0) return std::nullopt;
  const double intercept = (sd - slope * st) / count;
  return -intercept / slope;
}

}  // namespace svelift
