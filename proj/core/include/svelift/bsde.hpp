#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "svelift/control.hpp"

namespace svelift {

/// Regression configuration for the backward solver.
struct BsdeConfig {
  std::size_t n_paths = 100000;
  /// Total polynomial degree of the feature monomials in u = P Y.
  std::size_t degree = 3;
  /// Optional extra features: raw lift coordinates Y_j for these atom
  /// indices (all components each).
  std::vector<std::size_t> lift_feature_atoms;
  /// Relative ridge used when a regression matrix is rank deficient:
  /// regularizer = ridge_scale * trace(Gram)/n_features.
  double ridge_scale = 1e-10;
};

/// Polynomial-in-projection feature map, optionally augmented with raw
/// lift coordinates.
struct FeatureMap {
  std::size_t dim = 1;
  std::size_t degree = 3;
  std::vector<std::size_t> lift_atoms;
  std::vector<std::vector<unsigned>> exponents;  // one multi-index per monomial

  static FeatureMap make(std::size_t dim, std::size_t degree,
                         std::vector<std::size_t> lift_atoms);
  std::size_t size() const noexcept {
    return exponents.size() + lift_atoms.size() * dim;
  }
  /// Writes the feature vector for projection u and (when lift atoms are
  /// requested) the lift rows.
  void eval(std::span<const double> u, const LiftState* state,
            std::span<double> out) const;
};

/// A regression that needed the ridge fallback.
struct RidgeEvent {
  std::size_t step = 0;
  std::string target;  // "value" or "z:<mark>"
  double regularizer = 0.0;
};

struct BsdeDiagnostics {
  /// Per-step coefficient of determination of the value regression.
  std::vector<double> value_r2;
  /// Per-step empirical mean and standard error of the martingale
  /// residual Theta_{k+1} - Theta_k + dt*H - sum_i Z_i dpi_i.
  std::vector<double> martingale_residual_mean;
  std::vector<double> martingale_residual_se;
  /// RMSE of the terminal-condition fit on the ensemble.
  double terminal_fit_rmse = 0.0;
  /// Ensemble mean of sum_i Z_i(t_k)^2 lambda_i at k = 0 (square
  /// integrability of Z against the compensator).
  double z_l2_nu = 0.0;
  /// Finite-sample estimate of E[(integral of |l| under the chosen
  /// feedback)^alpha], alpha = cost_moment_exponent.
  double cost_moment = 0.0;
  std::vector<RidgeEvent> ridge_events;
  /// Set when the measure has several atoms but features see only the
  /// projection u (the surrogate then cannot resolve the full state).
  bool projection_only_features = false;
};

/// Output of the backward least-squares solver: the time-0 value, the
/// per-step regression surrogates for the value and for Z (one per
/// mark), and diagnostics.
struct BsdeSolution {
  TimeGrid grid;
  std::size_t dim = 0;
  FeatureMap features;

  double theta0 = 0.0;
  double theta0_se = 0.0;
  /// Ensemble mean of Theta at every grid point.
  std::vector<double> theta_mean;

  /// value_coeffs[k]: regression of Theta_{k+1} on features at t_k
  /// (size features.size()), for k = 0..steps-1.
  std::vector<std::vector<double>> value_coeffs;
  /// z_coeffs[k][i]: regression of the compensated-increment target for
  /// mark i on features at t_k.
  std::vector<std::vector<std::vector<double>>> z_coeffs;
  /// Diagnostic fit of g on terminal features.
  std::vector<double> terminal_coeffs;

  /// action_value_mean[k][a]: ensemble mean of the Hamiltonian candidate
  /// l + sum_i Z_i (r - 1) lambda_i for action a at t_k; the per-step
  /// argmin of this table is the ensemble-aggregate action ranking used
  /// for switch-time extraction.
  std::vector<std::vector<double>> action_value_mean;

  BsdeDiagnostics diagnostics;
};

/// Solves the control problem by forward simulation under the base
/// measure followed by backward least-squares regression:
///   Theta_M = g(u_M);
///   Zhat_i(t_k) = regression of (Theta_{k+1} - Ehat[Theta_{k+1}]) *
///                 (N_{k,i} - lambda_i dt)/(lambda_i dt) on features;
///   Theta_k = Ehat[Theta_{k+1}] + dt * H(t_k, u_k, Zhat(t_k)).
/// The baseline subtraction in the Z target removes the conditional-mean
/// component exactly, so Z vanishes identically whenever Theta_{k+1} is
/// ensemble-constant. Throws ConfigError when n_paths is too small for
/// the feature count; rank-deficient regressions fall back to a logged
/// ridge.
BsdeSolution bsde_solve(const ControlProblem& problem, const BsdeConfig& config,
                        const RngFamily& rng);

/// Feedback policy: at (t, Y-) evaluate the step-k surrogates
/// (k = step containing t) and pick the Hamiltonian argmin.
Policy feedback_policy(std::shared_ptr<const BsdeSolution> solution,
                       const ControlProblem& problem);

/// One row of the fundamental-relation report: a policy's Monte Carlo
/// cost J, its standard error, the gap J - theta0, and the verdict of
/// the one-sided test J >= theta0 - 3 SE (two-sided within 3 SE for the
/// feedback policy).
struct RelationRow {
  std::string policy;
  double j = 0.0;
  double se = 0.0;
  double gap = 0.0;
  bool pass = false;
};

/// Checks theta0 <= J(policy) for the given policies plus the extracted
/// feedback policy (listed first).
std::vector<RelationRow> fundamental_relation_check(
    const ControlProblem& problem, const BsdeSolution& solution,
    const std::vector<Policy>& policies, std::size_t eval_paths,
    const RngFamily& rng);

/// Crossing time of the ensemble-mean Hamiltonian candidates of two
/// actions: finds the sign change of their difference across the grid
/// and refines it by a local-linear fit over +-window steps. Returns
/// nullopt when the difference never changes sign.
std::optional<double> extract_switch_time(const BsdeSolution& solution,
                                          std::size_t action_a,
                                          std::size_t action_b,
                                          std::size_t window = 10);

}  // namespace svelift
