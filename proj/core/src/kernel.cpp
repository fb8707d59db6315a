#include "svelift/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <boost/math/special_functions/gamma.hpp>

#include "svelift/common.hpp"

namespace svelift {

double weight_function(double x) {
  if (x < 0.0) throw std::invalid_argument("weight_function: rate must be >= 0");
  if (x <= 1.0) return 1.0;
  return 1.0 / std::sqrt(x);
}

namespace {

void require(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw ConfigError(field, message);
}

}  // namespace

BernsteinMeasure BernsteinMeasure::finalize(
    std::vector<Atom> atoms, double eps,
    std::optional<DensitySpec> provenance) {
  require(eps > 0.0 && eps < 0.5, "kernel.eps", "must lie in (0, 1/2)");
  require(!atoms.empty(), "kernel.atoms", "measure needs at least one atom");

  std::sort(atoms.begin(), atoms.end(),
            [](const Atom& a, const Atom& b) { return a.rate < b.rate; });
  for (std::size_t j = 0; j < atoms.size(); ++j) {
    const Atom& a = atoms[j];
    require(std::isfinite(a.rate) && a.rate >= 0.0, "kernel.atoms",
            "rates must be finite and >= 0");
    require(std::isfinite(a.weight) && a.weight > 0.0, "kernel.atoms",
            "weights must be finite and > 0");
    if (j > 0 && atoms[j - 1].rate == a.rate) {
      std::ostringstream os;
      os << "duplicate rate x=" << a.rate
         << "; merge duplicate atoms by summing their weights";
      throw ConfigError("kernel.atoms", os.str());
    }
  }

  BernsteinMeasure m;
  m.atoms_ = std::move(atoms);
  m.eps_ = eps;
  m.provenance_ = std::move(provenance);

  double total = 0.0, immersion = 0.0, projection_sq = 0.0,
         admissibility = 0.0, tail = 0.0;
  for (const Atom& a : m.atoms_) {
    const double om = weight_function(a.rate);
    total += a.weight;
    immersion += a.weight * om;
    projection_sq += a.weight / ((1.0 + a.rate) * om);
    admissibility += a.weight * (om + 1.0 / ((1.0 + a.rate) * om));
    if (a.rate >= 1.0) tail += a.weight * std::pow(a.rate, eps - 0.5);
  }
  m.total_weight_ = total;
  m.immersion_constant_ = immersion;
  m.projection_constant_ = std::sqrt(projection_sq);
  m.admissibility_constant_ = admissibility;
  m.tail_moment_ = tail;

  require(std::isfinite(admissibility), "kernel.atoms",
          "admissibility constant must be finite");
  return m;
}

namespace {

/// Mass of the fractional rate density x^{-alpha}/(Gamma(a)Gamma(1-a))
/// over [lo, hi].
double fractional_mass(double alpha, double lo, double hi) {
  const double c = 1.0 / (std::tgamma(alpha) * std::tgamma(1.0 - alpha));
  return c * (std::pow(hi, 1.0 - alpha) - std::pow(lo, 1.0 - alpha)) /
         (1.0 - alpha);
}

/// Mass centroid of the fractional density over [lo, hi].
double fractional_centroid(double alpha, double lo, double hi) {
  const double num = std::pow(hi, 2.0 - alpha) - std::pow(lo, 2.0 - alpha);
  const double den = std::pow(hi, 1.0 - alpha) - std::pow(lo, 1.0 - alpha);
  return (1.0 - alpha) / (2.0 - alpha) * num / den;
}

/// Mass of the gamma-mixture rate density over [lo, hi], exactly via the
/// regularized incomplete gamma function.
double gamma_mix_mass(const std::vector<GammaComponent>& comps, double lo,
                      double hi) {
  double mass = 0.0;
  for (const GammaComponent& c : comps) {
    mass += c.coeff * (boost::math::gamma_p(c.shape, c.scale * hi) -
                       boost::math::gamma_p(c.shape, c.scale * lo));
  }
  return mass;
}

double gamma_mix_centroid(const std::vector<GammaComponent>& comps, double lo,
                          double hi) {
  double num = 0.0;
  for (const GammaComponent& c : comps) {
    num += c.coeff * (c.shape / c.scale) *
           (boost::math::gamma_p(c.shape + 1.0, c.scale * hi) -
            boost::math::gamma_p(c.shape + 1.0, c.scale * lo));
  }
  const double den = gamma_mix_mass(comps, lo, hi);
  return num / den;
}

}  // namespace

BernsteinMeasure make_atomic(std::vector<Atom> atoms, double eps) {
  return BernsteinMeasure::finalize(std::move(atoms), eps, std::nullopt);
}

BernsteinMeasure discretize_density(const DensitySpec& spec) {
  if (spec.family == DensitySpec::Family::exponential_mix) {
    return BernsteinMeasure::finalize(spec.atoms, spec.eps.value_or(0.25),
                                      spec);
  }

  require(spec.nodes >= 2, "kernel.nodes", "need at least 2 quadrature nodes");
  require(spec.x_min > 0.0 && std::isfinite(spec.x_min), "kernel.x_min",
          "must be finite and > 0");
  require(spec.x_max > spec.x_min && std::isfinite(spec.x_max), "kernel.x_max",
          "must be finite and > x_min");

  double eps;
  if (spec.family == DensitySpec::Family::fractional) {
    require(spec.alpha > 0.5 && spec.alpha < 1.0, "kernel.alpha",
            "fractional exponent must lie strictly in (1/2, 1)");
    eps = spec.eps.value_or((spec.alpha - 0.5) / 2.0);
  } else {
    require(!spec.components.empty(), "kernel.components",
            "gamma mixture needs at least one component");
    for (const GammaComponent& c : spec.components) {
      require(c.coeff > 0.0 && c.shape > 0.0 && c.scale > 0.0,
              "kernel.components",
              "coefficients, shapes, and scales must be > 0");
    }
    eps = spec.eps.value_or(0.25);
  }

  const std::size_t n = spec.nodes;
  const double rho =
      std::pow(spec.x_max / spec.x_min, 1.0 / static_cast<double>(n - 1));
  const double half = std::sqrt(rho);

  std::vector<Atom> atoms;
  atoms.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double node = spec.x_min * std::pow(rho, static_cast<double>(j));
    // Geometric cell around the node; the first cell is extended down to
    // rate 0 so the density's mass below x_min is not dropped, and that
    // cell's node is moved to its mass centroid (the grid point x_min
    // would sit far from where the extended cell's mass is).
    const double lo = (j == 0) ? 0.0 : node / half;
    const double hi = node * half;

    double mass, rate;
    if (spec.family == DensitySpec::Family::fractional) {
      mass = fractional_mass(spec.alpha, lo, hi);
      rate = (j == 0) ? fractional_centroid(spec.alpha, lo, hi) : node;
    } else {
      mass = gamma_mix_mass(spec.components, lo, hi);
      rate = (j == 0) ? gamma_mix_centroid(spec.components, lo, hi) : node;
    }
    if (mass > 0.0 && std::isfinite(mass)) atoms.push_back({rate, mass});
  }

  return BernsteinMeasure::finalize(std::move(atoms), eps, spec);
}

double kernel_eval(const BernsteinMeasure& m, double t) {
  if (!(t >= 0.0)) throw std::invalid_argument("kernel_eval: t must be >= 0");
  double k = 0.0;
  for (const Atom& a : m.atoms()) k += a.weight * std::exp(-a.rate * t);
  return k;
}

SingularityReport singularity_index(const BernsteinMeasure& m) {
  SingularityReport report;
  report.atomic_index = 0.0;
  std::ostringstream note;
  note << "atomic measure: Laplace transform decays like 1/s, index 0";

  if (m.provenance()) {
    const DensitySpec& spec = *m.provenance();
    if (spec.family == DensitySpec::Family::fractional) {
      report.continuous_index = 1.0 - spec.alpha;
      note << "; continuous fractional target has index "
           << (1.0 - spec.alpha);
    } else {
      report.continuous_index = 0.0;
      note << "; continuous target is bounded at 0, index 0";
    }
    if (*report.continuous_index >= 0.45) {
      report.near_admissibility_boundary = true;
      note << " (near the admissibility boundary 1/2)";
    }
  }
  report.note = note.str();
  return report;
}

}  // namespace svelift
