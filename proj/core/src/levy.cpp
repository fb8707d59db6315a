#include "svelift/levy.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "svelift/common.hpp"

namespace svelift {

void LevyModel::validate() const {
  if (marks.empty()) throw ConfigError("levy.marks", "need at least one mark");
  if (rates.size() != marks.size()) {
    throw ConfigError("levy.rates", "must have one rate per mark");
  }
  const std::size_t dim = marks.front().size();
  if (dim == 0) throw ConfigError("levy.marks", "marks must be nonempty vectors");
  for (const auto& xi : marks) {
    if (xi.size() != dim) {
      throw ConfigError("levy.marks", "marks must share one dimension");
    }
    bool nonzero = false;
    for (double c : xi) {
      if (!std::isfinite(c)) {
        throw ConfigError("levy.marks", "mark entries must be finite");
      }
      if (c != 0.0) nonzero = true;
    }
    if (!nonzero) throw ConfigError("levy.marks", "marks must be nonzero");
  }
  for (double r : rates) {
    if (!(std::isfinite(r) && r > 0.0)) {
      throw ConfigError("levy.rates", "rates must be finite and > 0");
    }
  }
}

JumpPath sample_path(const LevyModel& model, double horizon, Stream& rng) {
  if (!(horizon > 0.0)) {
    throw std::invalid_argument("sample_path: horizon must be > 0");
  }
  const double total = model.total_rate();
  JumpPath path;
  path.horizon = horizon;
  double t = rng.exponential(total);
  while (t <= horizon) {
    path.events.push_back({t, rng.categorical(model.rates)});
    t += rng.exponential(total);
  }
  return path;
}

JumpPath thinning_sample(
    const LevyModel& model, double horizon, double bound,
    const RateRatio& ratio, Stream& rng,
    const std::function<void(const JumpEvent&)>& on_accept) {
  if (!(horizon > 0.0)) {
    throw std::invalid_argument("thinning_sample: horizon must be > 0");
  }
  if (!(bound > 0.0) || !std::isfinite(bound)) {
    throw std::invalid_argument("thinning_sample: bound must be finite and > 0");
  }
  const double proposal_rate = bound * model.total_rate();
  JumpPath path;
  path.horizon = horizon;
  double t = rng.exponential(proposal_rate);
  while (t <= horizon) {
    const std::size_t mark = rng.categorical(model.rates);
    const double r = ratio(t, mark);
    if (!(r > 0.0) || r > bound || !std::isfinite(r)) {
      throw IntensityBoundError(t, mark, "", r, bound);
    }
    if (rng.uniform() <= r / bound) {
      const JumpEvent ev{t, mark};
      path.events.push_back(ev);
      if (on_accept) on_accept(ev);
    }
    t += rng.exponential(proposal_rate);
  }
  return path;
}

namespace {

/// Composite Simpson integral of fn over [a, b] with `panels` panels.
double simpson(const std::function<double(double)>& fn, double a, double b,
               std::size_t panels) {
  if (b <= a) return 0.0;
  const std::size_t n = 2 * panels;
  const double h = (b - a) / static_cast<double>(n);
  double sum = fn(a) + fn(b);
  for (std::size_t i = 1; i < n; ++i) {
    const double x = a + h * static_cast<double>(i);
    sum += fn(x) * ((i % 2 == 1) ? 4.0 : 2.0);
  }
  return sum * h / 3.0;
}

}  // namespace

GirsanovWeight girsanov_weight(const JumpPath& path, const LevyModel& model,
                               const RateRatio& ratio, std::size_t panels) {
  GirsanovWeight w;
  for (const JumpEvent& ev : path.events) {
    const double r = ratio(ev.time, ev.mark);
    if (!(r > 0.0) || !std::isfinite(r)) {
      std::ostringstream os;
      os << "likelihood ratio must be > 0; got " << r << " at event t="
         << ev.time << ", mark index " << ev.mark;
      throw NumericalError(os.str());
    }
    w.jump_log_sum += std::log(r);
  }

  const auto integrand = [&](double s) {
    double acc = 0.0;
    for (std::size_t i = 0; i < model.n_marks(); ++i) {
      acc += (ratio(s, i) - 1.0) * model.rates[i];
    }
    return acc;
  };

  // Segment the horizon at event times: ratios driven by the simulated
  // state are discontinuous exactly there, and Simpson on smooth
  // segments keeps the quadrature exact for piecewise-constant ratios.
  double left = 0.0;
  double compensator = 0.0;
  for (const JumpEvent& ev : path.events) {
    compensator += simpson(integrand, left, ev.time, panels);
    left = ev.time;
  }
  compensator += simpson(integrand, left, path.horizon, panels);
  w.compensator = compensator;
  return w;
}

}  // namespace svelift
