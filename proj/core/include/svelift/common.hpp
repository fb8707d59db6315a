#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace svelift {

/// Invalid or inconsistent user-supplied configuration. Carries the
/// dotted path of the offending field (e.g. "levy.rates") so a CLI can
/// report exactly what to fix. Maps to process exit code 2.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field_path, const std::string& message)
      : std::runtime_error(field_path + ": " + message),
        field_path_(std::move(field_path)) {}

  const std::string& field_path() const noexcept { return field_path_; }

 private:
  std::string field_path_;
};

/// A numerical fault detected at run time (divergence, invariant
/// violation, non-finite values). Maps to process exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The observed jump-intensity ratio left the admissible band (0, bound]
/// during a simulation. Names the violating time, mark, and action.
class IntensityBoundError : public NumericalError {
 public:
  IntensityBoundError(double t, std::size_t mark, std::string action,
                      double ratio, double bound);

  double time() const noexcept { return t_; }
  std::size_t mark() const noexcept { return mark_; }
  const std::string& action() const noexcept { return action_; }
  double ratio() const noexcept { return ratio_; }
  double bound() const noexcept { return bound_; }

 private:
  double t_;
  std::size_t mark_;
  std::string action_;
  double ratio_;
  double bound_;
};

/// An iterative solver failed to reach its tolerance. Carries the full
/// gap history for post-mortem diagnostics.
class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& message, std::vector<double> gap_history);

  const std::vector<double>& gap_history() const noexcept {
    return gap_history_;
  }

 private:
  std::vector<double> gap_history_;
};

/// Shortest decimal representation that round-trips a double. Used for
/// every number written to CSV or manifest files so that identical runs
/// produce byte-identical outputs.
std::string format_double(double x);

/// Adaptive Simpson quadrature of f over [a, b] to absolute tolerance
/// tol, with Richardson extrapolation. Recursion depth is capped; at the
/// cap the current extrapolated estimate is returned.
double adaptive_simpson(const std::function<double(double)>& f, double a,
                        double b, double tol);

/// Runs body(i) for i in [0, n). Work is split into contiguous index
/// chunks over a fixed thread pool; each index must write only to its
/// own output slot, which makes the result independent of the degree of
/// parallelism. Exceptions from the body are collected and the first one
/// is rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

/// Thread count parallel_for will use (respects SVELIFT_THREADS).
std::size_t worker_count();

}  // namespace svelift
