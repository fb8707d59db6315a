#include "svelift/control.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "svelift/common.hpp"
#include "svelift/stats.hpp"

namespace svelift {

void ControlProblem::validate(Stream& rng, std::size_t probes) const {
  if (action_labels.empty()) {
    throw ConfigError("control.actions", "need at least one action");
  }
  if (!(intensity_bound > 0.0) || !std::isfinite(intensity_bound)) {
    throw ConfigError("control.C_r", "must be finite and > 0");
  }
  if (!(cost_moment_exponent > 1.0)) {
    throw ConfigError("control.alpha", "moment exponent must be > 1");
  }
  levy.validate();

  const std::size_t d = coeffs.dim;
  std::vector<double> u(d);
  for (std::size_t p = 0; p < probes; ++p) {
    const double t = grid.horizon * rng.uniform();
    for (std::size_t c = 0; c < d; ++c) u[c] = 10.0 * rng.uniform() - 5.0;
    const std::size_t mark = rng.categorical(levy.rates);
    const std::size_t action =
        static_cast<std::size_t>(rng.uniform() * static_cast<double>(
                                                     action_labels.size())) %
        action_labels.size();

    const double r = intensity(t, u, levy.marks[mark], action);
    if (!(r > 0.0) || r > intensity_bound || !std::isfinite(r)) {
      std::ostringstream os;
      os << "intensity ratio " << r << " outside (0, " << intensity_bound
         << "] at probe t=" << t << ", action '" << action_labels[action]
         << "'";
      throw ConfigError("control.r", os.str());
    }
    const double l = running_cost(t, u, action);
    if (!std::isfinite(l)) {
      throw ConfigError("control.l", "running cost must be finite on probes");
    }
    const double g = terminal_cost(u);
    if (!std::isfinite(g)) {
      throw ConfigError("control.g", "terminal cost must be finite on probes");
    }
  }
}

Policy Policy::constant(std::size_t action, std::string label) {
  Policy p;
  p.kind_ = "constant";
  p.label_ = label.empty() ? "constant" : std::move(label);
  p.fn_ = [action](double, const LiftState&) { return action; };
  return p;
}

Policy Policy::schedule(std::function<std::size_t(double)> fn,
                        std::string label) {
  Policy p;
  p.kind_ = "schedule";
  p.label_ = std::move(label);
  p.fn_ = [fn = std::move(fn)](double t, const LiftState&) { return fn(t); };
  return p;
}

Policy Policy::feedback(
    std::function<std::size_t(double, const LiftState&)> fn,
    std::string label) {
  Policy p;
  p.kind_ = "feedback";
  p.label_ = std::move(label);
  p.fn_ = std::move(fn);
  return p;
}

std::size_t Policy::action(double t, const LiftState& pre_jump) const {
  return fn_(t, pre_jump);
}

HamiltonianResult hamiltonian(const ControlProblem& problem, double t,
                              std::span<const double> u,
                              std::span<const double> z) {
  if (problem.action_labels.empty()) {
    throw std::invalid_argument("hamiltonian: empty action set");
  }
  HamiltonianResult best;
  bool first = true;
  for (std::size_t a = 0; a < problem.n_actions(); ++a) {
    double val = problem.running_cost(t, u, a);
    for (std::size_t i = 0; i < problem.levy.n_marks(); ++i) {
      val += z[i] * (problem.intensity(t, u, problem.levy.marks[i], a) - 1.0) *
             problem.levy.rates[i];
    }
    if (first || val < best.value) {  // strict <: ties keep the lowest index
      best.value = val;
      best.argmin = a;
      first = false;
    }
  }
  return best;
}

namespace {

/// Advances the lifted state step by step while jump events stream in,
/// freezing the policy action and the per-mark intensity ratios at each
/// step's left endpoint. Because the frozen ratios are exactly the ones
/// used for thinning acceptance and for the likelihood ratio, the
/// accumulated log-weight is exact for the discretized dynamics.
class StepDriver {
 public:
  StepDriver(const ControlProblem& problem, const Policy& policy,
             ControlledRun& run)
      : problem_(problem),
        policy_(policy),
        run_(run),
        dt_(problem.grid.dt()),
        rbar_(problem.levy.n_marks()) {
    state_.measure = problem.measure;
    state_.dim = problem.coeffs.dim;
    state_.time = 0.0;
    state_.values = expand_initial_field(*problem.measure, problem.y0,
                                         problem.coeffs.dim);
    record();
    enter_step(0);
  }

  /// Intensity ratio of the step containing t (advancing to it first).
  double ratio(double t, std::size_t mark) {
    advance_to(bucket(t, problem_.grid));
    return rbar_[mark];
  }

  /// Books an accepted event into the current step.
  void accept(const JumpEvent& ev) {
    pending_.push_back(ev);
    run_.log_weight += std::log(rbar_[ev.mark]);
  }

  /// Applies all remaining steps and the terminal cost.
  void finish() {
    while (current_ + 1 < problem_.grid.steps) advance_to(current_ + 1);
    apply_pending_step();
    const std::vector<double> u = project(state_);
    run_.terminal_cost = problem_.terminal_cost(u);
  }

 private:
  void advance_to(std::size_t target) {
    while (current_ < target) {
      apply_pending_step();
      enter_step(current_);
    }
  }

  /// Consumes the buffered events of the current step and moves the
  /// state from t_k to t_{k+1}.
  void apply_pending_step() {
    step(state_, problem_.coeffs, problem_.levy, pending_, dt_);
    pending_.clear();
    ++current_;
    state_.time = problem_.grid.time(current_);
    record();
  }

  /// Freezes action, intensity ratios, running cost, and the
  /// compensator part of the log-weight at the left endpoint of step k.
  void enter_step(std::size_t k) {
    const double t = problem_.grid.time(k);
    const std::vector<double> u = project(state_);
    const std::size_t a = policy_.action(t, state_);
    run_.actions[k] = a;

    for (std::size_t i = 0; i < problem_.levy.n_marks(); ++i) {
      const double r = problem_.intensity(t, u, problem_.levy.marks[i], a);
      if (!(r > 0.0) || r > problem_.intensity_bound || !std::isfinite(r)) {
        throw IntensityBoundError(t, i, problem_.action_labels[a], r,
                                  problem_.intensity_bound);
      }
      rbar_[i] = r;
      run_.log_weight -= dt_ * (r - 1.0) * problem_.levy.rates[i];
    }
    run_.running_cost += dt_ * problem_.running_cost(t, u, a);
  }

  void record() {
    run_.trajectory.times.push_back(state_.time);
    run_.trajectory.states.push_back(state_);
    run_.trajectory.projected.push_back(project(state_));
  }

  const ControlProblem& problem_;
  const Policy& policy_;
  ControlledRun& run_;
  double dt_;
  LiftState state_;
  std::size_t current_ = 0;
  std::vector<JumpEvent> pending_;
  std::vector<double> rbar_;
};

}  // namespace

ControlledRun controlled_simulate(const ControlProblem& problem,
                                  const Policy& policy, Stream& rng,
                                  bool tilted) {
  ControlledRun run;
  run.actions.assign(problem.grid.steps, 0);
  run.trajectory.measure = problem.measure;
  run.trajectory.dim = problem.coeffs.dim;

  StepDriver driver(problem, policy, run);

  if (tilted) {
    run.path = thinning_sample(
        problem.levy, problem.grid.horizon, problem.intensity_bound,
        [&](double t, std::size_t mark) { return driver.ratio(t, mark); }, rng,
        [&](const JumpEvent& ev) { driver.accept(ev); });
  } else {
    run.path = sample_path(problem.levy, problem.grid.horizon, rng);
    for (const JumpEvent& ev : run.path.events) {
      driver.ratio(ev.time, ev.mark);  // advance to the event's step
      driver.accept(ev);
    }
  }
  driver.finish();
  return run;
}

ControlledRun closed_loop_simulate(const ControlProblem& problem,
                                   const Policy& feedback, Stream& rng) {
  return controlled_simulate(problem, feedback, rng, true);
}

CostEstimate cost_evaluate(const ControlProblem& problem, const Policy& policy,
                           std::size_t n_paths, const RngFamily& rng,
                           bool tilted) {
  if (n_paths < 2) {
    throw std::invalid_argument("cost_evaluate: need at least 2 paths");
  }
  std::vector<double> costs(n_paths);
  parallel_for(n_paths, [&](std::size_t i) {
    Stream stream = rng.stream(i);
    const ControlledRun run =
        controlled_simulate(problem, policy, stream, tilted);
    costs[i] =
        tilted ? run.total_cost() : std::exp(run.log_weight) * run.total_cost();
  });
  const Summary s = summarize(costs);
  return CostEstimate{s.mean, s.se, n_paths};
}

}  // namespace svelift
