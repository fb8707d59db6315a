#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace svelift {

/// One atom of an atomic Bernstein measure: a decay rate x >= 0 (1/time)
/// carrying a positive mass w. The represented kernel is
/// k(t) = sum_j w_j * exp(-x_j * t).
struct Atom {
  double rate = 0.0;
  double weight = 0.0;
};

/// Weight function omega(x) = min(1, x^{-1/2}), with omega(0) = 1.
double weight_function(double x);

/// Parameters of one gamma-density component of a mixture measure. The
/// component contributes coeff * (scale/(scale+t))^shape to the kernel;
/// its density on rates is coeff * scale^shape x^{shape-1} e^{-scale x}
/// / Gamma(shape).
struct GammaComponent {
  double coeff = 1.0;
  double shape = 1.0;
  double scale = 1.0;
};

/// Recipe for discretizing a continuous completely monotone kernel into
/// an atomic measure on a truncated geometric rate grid.
struct DensitySpec {
  enum class Family { fractional, exponential_mix, gamma_mix };

  Family family = Family::fractional;

  /// Fractional exponent alpha in (1/2, 1); the target kernel is
  /// t^{alpha-1}/Gamma(alpha), whose rate density is
  /// x^{-alpha}/(Gamma(alpha)Gamma(1-alpha)).
  double alpha = 0.75;

  /// Explicit atoms for the exponential_mix family (pass-through).
  std::vector<Atom> atoms;

  /// Components for the gamma_mix family.
  std::vector<GammaComponent> components;

  std::size_t nodes = 60;
  double x_min = 1e-2;
  double x_max = 1e4;

  /// Tail-moment exponent margin; defaults to (alpha-1/2)/2 for the
  /// fractional family and 0.25 otherwise.
  std::optional<double> eps;
};

/// Finite atomic Bernstein measure. Immutable after construction; all
/// admissibility constants are computed once and stored.
class BernsteinMeasure {
 public:
  const std::vector<Atom>& atoms() const noexcept { return atoms_; }
  std::size_t size() const noexcept { return atoms_.size(); }
  double eps() const noexcept { return eps_; }

  /// k(0) = sum of weights.
  double total_weight() const noexcept { return total_weight_; }

  /// sum_j w_j * omega(x_j): the squared H-norm of a unit immersion.
  double immersion_constant() const noexcept { return immersion_constant_; }

  /// C_P = sqrt(sum_j w_j / ((1+x_j) omega(x_j))): the projection bound
  /// |P Y| <= C_P * v_norm(Y).
  double projection_constant() const noexcept { return projection_constant_; }

  /// sum_j w_j (omega(x_j) + 1/((1+x_j) omega(x_j))): the admissibility
  /// constant whose finiteness the theory requires.
  double admissibility_constant() const noexcept {
    return admissibility_constant_;
  }

  /// sum over atoms with x_j >= 1 of w_j * x_j^{eps - 1/2}.
  double tail_moment() const noexcept { return tail_moment_; }

  /// Discretization recipe this measure came from, if any.
  const std::optional<DensitySpec>& provenance() const noexcept {
    return provenance_;
  }

 private:
  friend BernsteinMeasure make_atomic(std::vector<Atom>, double);
  friend BernsteinMeasure discretize_density(const DensitySpec&);

  /// Sorts and validates the atoms and computes the stored constants.
  static BernsteinMeasure finalize(std::vector<Atom> atoms, double eps,
                                   std::optional<DensitySpec> provenance);

  std::vector<Atom> atoms_;
  double eps_ = 0.25;
  double total_weight_ = 0.0;
  double immersion_constant_ = 0.0;
  double projection_constant_ = 0.0;
  double admissibility_constant_ = 0.0;
  double tail_moment_ = 0.0;
  std::optional<DensitySpec> provenance_;
};

/// Builds a measure from explicit atoms. Atoms are sorted by rate;
/// duplicate rates and nonpositive weights are rejected. eps must lie in
/// (0, 1/2).
BernsteinMeasure make_atomic(std::vector<Atom> atoms, double eps = 0.25);

/// Discretizes a continuous density onto a geometric rate grid
/// x_j = x_min * rho^j, rho = (x_max/x_min)^{1/(nodes-1)}, with per-cell
/// exact mass integration. The first cell is extended down to rate 0 so
/// no mass below x_min is lost, and its node is placed at the cell's
/// mass centroid; all other nodes sit at the geometric grid points.
BernsteinMeasure discretize_density(const DensitySpec& spec);

/// k(t) = sum_j w_j exp(-x_j t); requires t >= 0.
double kernel_eval(const BernsteinMeasure& m, double t);

/// Degeneracy of the kernel at t = 0, read off the decay of its Laplace
/// transform. Atomic measures always have index 0; a fractional
/// provenance additionally reports the continuous target's index
/// 1 - alpha, flagged when it approaches the admissibility boundary 1/2.
struct SingularityReport {
  double atomic_index = 0.0;
  std::optional<double> continuous_index;
  bool near_admissibility_boundary = false;
  std::string note;
};

SingularityReport singularity_index(const BernsteinMeasure& m);

}  // namespace svelift
