#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "svelift/rng.hpp"

namespace svelift {

/// Finite-activity marked Poisson model: a finite set of mark vectors
/// xi_i with per-mark rates lambda_i > 0. The compensator measure is
/// nu = sum_i lambda_i * delta_{xi_i}.
struct LevyModel {
  std::vector<std::vector<double>> marks;
  std::vector<double> rates;

  std::size_t n_marks() const noexcept { return marks.size(); }
  std::size_t mark_dim() const noexcept {
    return marks.empty() ? 0 : marks.front().size();
  }
  double total_rate() const noexcept {
    double s = 0.0;
    for (double r : rates) s += r;
    return s;
  }

  /// Throws ConfigError when marks/rates are empty, mismatched,
  /// dimensionally inconsistent, or rates are not strictly positive.
  void validate() const;
};

/// One realized jump: its time in (0, horizon] and the mark index.
struct JumpEvent {
  double time = 0.0;
  std::size_t mark = 0;
};

/// A realized path of the random measure: time-sorted events.
struct JumpPath {
  double horizon = 0.0;
  std::vector<JumpEvent> events;
};

/// Samples a path under the base measure: total event count
/// Poisson(total_rate * T) via exponential gaps, marks i.i.d.
/// proportional to the rates.
JumpPath sample_path(const LevyModel& model, double horizon, Stream& rng);

/// Instantaneous intensity ratio r(t, mark) relative to the base rates.
/// State and action dependence enter through the closure: drivers that
/// need the simulated state advance it lazily inside this callback.
using RateRatio = std::function<double(double t, std::size_t mark)>;

/// Samples a path whose per-mark intensity is ratio(t, i) * lambda_i by
/// thinning a dominating Poisson stream of rate bound * lambda_i:
/// proposals are accepted with probability ratio/bound. Throws
/// IntensityBoundError when a proposal sees ratio outside (0, bound].
/// on_accept (optional) fires for every accepted event, in time order,
/// before the next proposal is drawn — this is the hook by which a
/// driver keeps its state current.
JumpPath thinning_sample(
    const LevyModel& model, double horizon, double bound,
    const RateRatio& ratio, Stream& rng,
    const std::function<void(const JumpEvent&)>& on_accept = {});

/// Likelihood ratio of the tilted measure relative to the base measure
/// on one realized path:
///   log W = sum_events ln(ratio at event) - integral of
///           sum_i (ratio(s, i) - 1) lambda_i ds over [0, T].
struct GirsanovWeight {
  double jump_log_sum = 0.0;
  double compensator = 0.0;

  double log_weight() const noexcept { return jump_log_sum - compensator; }
  double weight() const noexcept { return std::exp(log_weight()); }
};

/// Evaluates the likelihood ratio on a given path. The time integral is
/// computed by composite Simpson quadrature on each segment between
/// consecutive event times (plus the ends), with `panels` panels per
/// segment — exact for ratios that are constant between events and
/// high-order accurate for smooth ones. Throws NumericalError when the
/// ratio is not strictly positive at an event.
GirsanovWeight girsanov_weight(const JumpPath& path, const LevyModel& model,
                               const RateRatio& ratio,
                               std::size_t panels = 8);

}  // namespace svelift
