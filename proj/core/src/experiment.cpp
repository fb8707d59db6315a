#include "svelift/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <set>
#include <sstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "svelift/bsde.hpp"
#include "svelift/common.hpp"
#include "svelift/control.hpp"
#include "svelift/kernel.hpp"
#include "svelift/levy.hpp"
#include "svelift/lift.hpp"
#include "svelift/rng.hpp"
#include "svelift/volterra.hpp"

namespace svelift {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// JSON access with dotted field paths (ConfigError -> CLI exit code 2).
// ---------------------------------------------------------------------------

[[noreturn]] void fail(const std::string& path, const std::string& message) {
  throw ConfigError(path, message);
}

std::string join_path(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

std::string elem_path(const std::string& prefix, std::size_t i) {
  return prefix + "[" + std::to_string(i) + "]";
}

const Json& require(const Json& obj, const std::string& key,
                    const std::string& prefix) {
  if (!obj.is_object()) fail(prefix, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) fail(join_path(prefix, key), "missing required field");
  return *it;
}

/// Rejects keys outside the allowed set so typos surface as schema errors.
void check_keys(const Json& obj, std::initializer_list<const char*> allowed,
                const std::string& prefix) {
  if (!obj.is_object()) fail(prefix, "expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const bool known = std::any_of(
        allowed.begin(), allowed.end(),
        [&](const char* k) { return it.key() == k; });
    if (!known) fail(join_path(prefix, it.key()), "unknown field");
  }
}

double as_number(const Json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

std::size_t as_count(const Json& j, const std::string& path) {
  if (j.is_number_integer()) {
    const auto v = j.get<long long>();
    if (v < 0) fail(path, "expected a nonnegative integer");
    return static_cast<std::size_t>(v);
  }
  if (j.is_number_float()) {
    const double v = j.get<double>();
    if (!(v >= 0.0) || v != std::floor(v))
      fail(path, "expected a nonnegative integer");
    return static_cast<std::size_t>(v);
  }
  fail(path, "expected a nonnegative integer");
}

std::string as_string(const Json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

std::vector<double> as_vector(const Json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of numbers");
  std::vector<double> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(as_number(j[i], elem_path(path, i)));
  return out;
}

double opt_number(const Json& obj, const char* key, const std::string& prefix,
                  double fallback) {
  if (!obj.is_object() || !obj.contains(key)) return fallback;
  return as_number(obj[key], join_path(prefix, key));
}

std::size_t opt_count(const Json& obj, const char* key,
                      const std::string& prefix, std::size_t fallback) {
  if (!obj.is_object() || !obj.contains(key)) return fallback;
  return as_count(obj[key], join_path(prefix, key));
}

std::string opt_string(const Json& obj, const char* key,
                       const std::string& prefix, std::string fallback) {
  if (!obj.is_object() || !obj.contains(key)) return fallback;
  return as_string(obj[key], join_path(prefix, key));
}

// ---------------------------------------------------------------------------
// Parsed configuration sections. Each keeps exactly the data needed to
// build the runtime objects and to echo a fully resolved manifest.
// ---------------------------------------------------------------------------

struct KernelCfg {
  bool atomic = false;
  std::vector<Atom> atoms;  // atomic input
  double eps_atomic = 0.25;
  DensitySpec spec;  // when !atomic
};

struct DriftCfg {
  std::string family = "zero";
  std::vector<double> value;   // constant
  std::vector<double> matrix;  // linear/affine, row-major dim x dim
  std::vector<double> offset;  // affine
};

struct NoiseCfg {
  std::string family = "zero";
  std::vector<double> value;   // constant
  std::vector<double> matrix;  // mark_matrix, row-major dim x mark_dim
  double scale = 0.0;          // mark_scale / mark_scale_state
};

struct CoeffCfg {
  std::size_t dim = 1;
  std::vector<double> y0;
  DriftCfg f;
  NoiseCfg sigma;
};

struct IntensityCfg {
  std::string family = "per_action";
  std::vector<double> values;                 // per_action
  std::vector<std::vector<double>> per_mark;  // per_action_mark
  std::vector<double> low, high;              // logistic_state
  double gain = 1.0, center = 0.0;
};

struct RunningCostCfg {
  std::string family = "per_action";
  std::vector<double> costs;
  std::vector<double> state_coeffs;  // affine_state / quadratic_state
  std::vector<double> quad_coeffs;   // quadratic_state
};

struct TerminalCostCfg {
  std::string family = "constant";
  double constant = 0.0;
  std::vector<double> coeffs;  // linear / quadratic
  std::vector<double> quad;    // quadratic
};

struct PolicyCfg {
  std::string kind;  // constant | schedule | feedback
  std::string action;
  double switch_time = 0.0;
  std::string before, after;
  std::string label;
};

struct ControlCfg {
  bool present = false;
  std::vector<std::string> actions;
  IntensityCfg r;
  RunningCostCfg l;
  TerminalCostCfg g;
  double bound = 1.0;
  double alpha = 2.0;
  std::optional<PolicyCfg> policy;
  std::vector<PolicyCfg> evaluate;
};

struct NumericsCfg {
  double horizon = 1.0;
  std::size_t grid_steps = 100;
  std::size_t n_paths = 10000;
  std::size_t eval_paths = 10000;
  std::size_t n_seeds = 20;
  std::size_t regression_degree = 3;
  std::vector<std::size_t> lift_feature_atoms;
  double ridge_scale = 1e-10;
  double threshold = 5e-3;
  std::uint64_t seed = 1;
};

struct Cfg {
  std::string mode;
  KernelCfg kernel;
  bool has_levy = false;
  LevyModel levy;
  bool has_coeffs = false;
  CoeffCfg coeffs;
  ControlCfg control;
  NumericsCfg numerics;
};

// ---------------------------------------------------------------------------
// Section parsers.
// ---------------------------------------------------------------------------

std::vector<Atom> parse_atoms(const Json& j, const std::string& path) {
  if (!j.is_array() || j.empty())
    fail(path, "expected a nonempty array of atoms");
  std::vector<Atom> atoms;
  atoms.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    const Json& e = j[i];
    const std::string p = elem_path(path, i);
    Atom a;
    if (e.is_array() && e.size() == 2) {
      a.rate = as_number(e[0], p + "[0]");
      a.weight = as_number(e[1], p + "[1]");
    } else if (e.is_object()) {
      check_keys(e, {"x", "w"}, p);
      a.rate = as_number(require(e, "x", p), join_path(p, "x"));
      a.weight = as_number(require(e, "w", p), join_path(p, "w"));
    } else {
      fail(p, "expected [rate, weight] or {\"x\":..., \"w\":...}");
    }
    atoms.push_back(a);
  }
  return atoms;
}

KernelCfg parse_kernel(const Json& j) {
  const std::string P = "kernel";
  if (!j.is_object()) fail(P, "expected an object");
  const bool has_atoms = j.contains("atoms");
  const bool has_family = j.contains("family");
  KernelCfg cfg;
  if (has_atoms && !has_family) {
    check_keys(j, {"atoms", "eps"}, P);
    cfg.atomic = true;
    cfg.atoms = parse_atoms(j["atoms"], "kernel.atoms");
    cfg.eps_atomic = opt_number(j, "eps", P, 0.25);
    return cfg;
  }
  if (!has_family)
    fail(P, "specify either explicit atoms or a density family");

  const std::string fam = as_string(j["family"], "kernel.family");
  if (fam == "fractional") {
    check_keys(j, {"family", "alpha", "nodes", "x_min", "x_max", "eps"}, P);
    cfg.spec.family = DensitySpec::Family::fractional;
    cfg.spec.alpha = opt_number(j, "alpha", P, 0.75);
  } else if (fam == "gamma_mix") {
    check_keys(j, {"family", "components", "nodes", "x_min", "x_max", "eps"},
               P);
    cfg.spec.family = DensitySpec::Family::gamma_mix;
    const Json& comps = require(j, "components", P);
    const std::string cp = "kernel.components";
    if (!comps.is_array() || comps.empty())
      fail(cp, "expected a nonempty array of gamma components");
    for (std::size_t i = 0; i < comps.size(); ++i) {
      const Json& e = comps[i];
      const std::string p = elem_path(cp, i);
      GammaComponent g;
      if (e.is_array() && e.size() == 3) {
        g.coeff = as_number(e[0], p + "[0]");
        g.shape = as_number(e[1], p + "[1]");
        g.scale = as_number(e[2], p + "[2]");
      } else if (e.is_object()) {
        check_keys(e, {"coeff", "shape", "scale"}, p);
        g.coeff = as_number(require(e, "coeff", p), join_path(p, "coeff"));
        g.shape = as_number(require(e, "shape", p), join_path(p, "shape"));
        g.scale = as_number(require(e, "scale", p), join_path(p, "scale"));
      } else {
        fail(p, "expected [coeff, shape, scale] or an object");
      }
      cfg.spec.components.push_back(g);
    }
  } else if (fam == "exponential_mix") {
    check_keys(j, {"family", "atoms", "eps"}, P);
    cfg.spec.family = DensitySpec::Family::exponential_mix;
    cfg.spec.atoms = parse_atoms(require(j, "atoms", P), "kernel.atoms");
  } else {
    fail("kernel.family", "unknown family '" + fam +
                              "' (expected fractional, gamma_mix, or "
                              "exponential_mix)");
  }
  cfg.spec.nodes = opt_count(j, "nodes", P, cfg.spec.nodes);
  cfg.spec.x_min = opt_number(j, "x_min", P, cfg.spec.x_min);
  cfg.spec.x_max = opt_number(j, "x_max", P, cfg.spec.x_max);
  if (j.contains("eps")) cfg.spec.eps = as_number(j["eps"], "kernel.eps");
  return cfg;
}

LevyModel parse_levy(const Json& j) {
  const std::string P = "levy";
  check_keys(j, {"marks", "rates"}, P);
  LevyModel model;
  const Json& marks = require(j, "marks", P);
  if (!marks.is_array()) fail("levy.marks", "expected an array of marks");
  for (std::size_t i = 0; i < marks.size(); ++i) {
    const Json& e = marks[i];
    const std::string p = elem_path("levy.marks", i);
    if (e.is_number())
      model.marks.push_back({e.get<double>()});
    else
      model.marks.push_back(as_vector(e, p));
  }
  model.rates = as_vector(require(j, "rates", P), "levy.rates");
  model.validate();
  return model;
}

CoeffCfg parse_coefficients(const Json& j) {
  const std::string P = "coefficients";
  check_keys(j, {"dim", "y0", "f", "sigma"}, P);
  CoeffCfg cfg;
  cfg.dim = opt_count(j, "dim", P, 1);
  if (cfg.dim == 0) fail("coefficients.dim", "dimension must be positive");
  cfg.y0 = as_vector(require(j, "y0", P), "coefficients.y0");

  if (j.contains("f")) {
    const Json& f = j["f"];
    const std::string FP = "coefficients.f";
    cfg.f.family = as_string(require(f, "family", FP), FP + ".family");
    if (cfg.f.family == "zero") {
      check_keys(f, {"family"}, FP);
    } else if (cfg.f.family == "constant") {
      check_keys(f, {"family", "value"}, FP);
      cfg.f.value = as_vector(require(f, "value", FP), FP + ".value");
      if (cfg.f.value.size() != cfg.dim)
        fail(FP + ".value", "expected " + std::to_string(cfg.dim) + " values");
    } else if (cfg.f.family == "linear" || cfg.f.family == "affine") {
      check_keys(f, {"family", "matrix", "offset"}, FP);
      const Json& m = require(f, "matrix", FP);
      if (!m.is_array() || m.size() != cfg.dim)
        fail(FP + ".matrix", "expected " + std::to_string(cfg.dim) + " rows");
      for (std::size_t r = 0; r < cfg.dim; ++r) {
        auto row = as_vector(m[r], elem_path(FP + ".matrix", r));
        if (row.size() != cfg.dim)
          fail(elem_path(FP + ".matrix", r),
               "expected " + std::to_string(cfg.dim) + " columns");
        cfg.f.matrix.insert(cfg.f.matrix.end(), row.begin(), row.end());
      }
      if (cfg.f.family == "affine") {
        cfg.f.offset = as_vector(require(f, "offset", FP), FP + ".offset");
        if (cfg.f.offset.size() != cfg.dim)
          fail(FP + ".offset",
               "expected " + std::to_string(cfg.dim) + " values");
      } else if (f.contains("offset")) {
        fail(FP + ".offset", "only the affine family takes an offset");
      }
    } else {
      fail(FP + ".family",
           "unknown family '" + cfg.f.family +
               "' (expected zero, constant, linear, or affine)");
    }
  }

  if (j.contains("sigma")) {
    const Json& s = j["sigma"];
    const std::string SP = "coefficients.sigma";
    cfg.sigma.family = as_string(require(s, "family", SP), SP + ".family");
    if (cfg.sigma.family == "zero") {
      check_keys(s, {"family"}, SP);
    } else if (cfg.sigma.family == "constant") {
      check_keys(s, {"family", "value"}, SP);
      cfg.sigma.value = as_vector(require(s, "value", SP), SP + ".value");
      if (cfg.sigma.value.size() != cfg.dim)
        fail(SP + ".value", "expected " + std::to_string(cfg.dim) + " values");
    } else if (cfg.sigma.family == "mark_scale" ||
               cfg.sigma.family == "mark_scale_state") {
      check_keys(s, {"family", "scale"}, SP);
      cfg.sigma.scale = as_number(require(s, "scale", SP), SP + ".scale");
    } else if (cfg.sigma.family == "mark_matrix") {
      check_keys(s, {"family", "matrix"}, SP);
      const Json& m = require(s, "matrix", SP);
      if (!m.is_array() || m.size() != cfg.dim)
        fail(SP + ".matrix", "expected " + std::to_string(cfg.dim) + " rows");
      std::size_t cols = 0;
      for (std::size_t r = 0; r < cfg.dim; ++r) {
        auto row = as_vector(m[r], elem_path(SP + ".matrix", r));
        if (r == 0)
          cols = row.size();
        else if (row.size() != cols)
          fail(elem_path(SP + ".matrix", r), "ragged matrix rows");
        cfg.sigma.matrix.insert(cfg.sigma.matrix.end(), row.begin(),
                                row.end());
      }
      if (cols == 0) fail(SP + ".matrix", "rows must be nonempty");
    } else {
      fail(SP + ".family",
           "unknown family '" + cfg.sigma.family +
               "' (expected zero, constant, mark_scale, mark_scale_state, or "
               "mark_matrix)");
    }
  }
  return cfg;
}

PolicyCfg parse_policy(const Json& j, const std::string& path) {
  PolicyCfg pc;
  pc.kind = as_string(require(j, "kind", path), path + ".kind");
  if (pc.kind == "constant") {
    check_keys(j, {"kind", "action", "label"}, path);
    pc.action = as_string(require(j, "action", path), path + ".action");
  } else if (pc.kind == "schedule") {
    check_keys(j, {"kind", "switch_time", "before", "after", "label"}, path);
    pc.switch_time =
        as_number(require(j, "switch_time", path), path + ".switch_time");
    pc.before = as_string(require(j, "before", path), path + ".before");
    pc.after = as_string(require(j, "after", path), path + ".after");
  } else if (pc.kind == "feedback") {
    check_keys(j, {"kind", "label"}, path);
  } else {
    fail(path + ".kind", "unknown policy kind '" + pc.kind +
                             "' (expected constant, schedule, or feedback)");
  }
  pc.label = opt_string(j, "label", path, "");
  return pc;
}

ControlCfg parse_control(const Json& j, std::size_t dim) {
  const std::string P = "control";
  check_keys(j, {"actions", "r", "l", "g", "C_r", "alpha", "policy",
                 "evaluate"},
             P);
  ControlCfg cfg;
  cfg.present = true;

  const Json& actions = require(j, "actions", P);
  if (!actions.is_array() || actions.empty())
    fail("control.actions", "expected a nonempty array of action labels");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    auto label = as_string(actions[i], elem_path("control.actions", i));
    if (label.empty() ||
        label.find_first_of(",\"\n\r") != std::string::npos)
      fail(elem_path("control.actions", i),
           "action labels must be nonempty and free of commas, quotes, and "
           "line breaks (they name CSV rows)");
    if (!seen.insert(label).second)
      fail(elem_path("control.actions", i),
           "duplicate action label '" + label + "'");
    cfg.actions.push_back(std::move(label));
  }
  const std::size_t A = cfg.actions.size();

  const Json& r = require(j, "r", P);
  const std::string RP = "control.r";
  cfg.r.family = as_string(require(r, "family", RP), RP + ".family");
  if (cfg.r.family == "per_action") {
    check_keys(r, {"family", "values"}, RP);
    cfg.r.values = as_vector(require(r, "values", RP), RP + ".values");
    if (cfg.r.values.size() != A)
      fail(RP + ".values", "expected one value per action (" +
                               std::to_string(A) + ")");
  } else if (cfg.r.family == "per_action_mark") {
    check_keys(r, {"family", "values"}, RP);
    const Json& v = require(r, "values", RP);
    if (!v.is_array() || v.size() != A)
      fail(RP + ".values", "expected one row per action (" +
                               std::to_string(A) + ")");
    for (std::size_t a = 0; a < A; ++a)
      cfg.r.per_mark.push_back(
          as_vector(v[a], elem_path(RP + ".values", a)));
  } else if (cfg.r.family == "logistic_state") {
    check_keys(r, {"family", "low", "high", "gain", "center"}, RP);
    cfg.r.low = as_vector(require(r, "low", RP), RP + ".low");
    cfg.r.high = as_vector(require(r, "high", RP), RP + ".high");
    if (cfg.r.low.size() != A || cfg.r.high.size() != A)
      fail(RP, "low/high need one value per action (" + std::to_string(A) +
                   ")");
    cfg.r.gain = opt_number(r, "gain", RP, 1.0);
    cfg.r.center = opt_number(r, "center", RP, 0.0);
  } else {
    fail(RP + ".family", "unknown family '" + cfg.r.family +
                             "' (expected per_action, per_action_mark, or "
                             "logistic_state)");
  }

  const Json& l = require(j, "l", P);
  const std::string LP = "control.l";
  cfg.l.family = as_string(require(l, "family", LP), LP + ".family");
  if (cfg.l.family == "per_action") {
    check_keys(l, {"family", "costs"}, LP);
  } else if (cfg.l.family == "affine_state") {
    check_keys(l, {"family", "costs", "state_coeffs"}, LP);
  } else if (cfg.l.family == "quadratic_state") {
    check_keys(l, {"family", "costs", "state_coeffs", "quad_coeffs"}, LP);
  } else {
    fail(LP + ".family", "unknown family '" + cfg.l.family +
                             "' (expected per_action, affine_state, or "
                             "quadratic_state)");
  }
  cfg.l.costs = as_vector(require(l, "costs", LP), LP + ".costs");
  if (cfg.l.costs.size() != A)
    fail(LP + ".costs",
         "expected one cost per action (" + std::to_string(A) + ")");
  if (cfg.l.family != "per_action") {
    cfg.l.state_coeffs =
        as_vector(require(l, "state_coeffs", LP), LP + ".state_coeffs");
    if (cfg.l.state_coeffs.size() != dim)
      fail(LP + ".state_coeffs",
           "expected " + std::to_string(dim) + " values");
  }
  if (cfg.l.family == "quadratic_state") {
    cfg.l.quad_coeffs =
        as_vector(require(l, "quad_coeffs", LP), LP + ".quad_coeffs");
    if (cfg.l.quad_coeffs.size() != dim)
      fail(LP + ".quad_coeffs", "expected " + std::to_string(dim) + " values");
  }

  const Json& g = require(j, "g", P);
  const std::string GP = "control.g";
  cfg.g.family = as_string(require(g, "family", GP), GP + ".family");
  if (cfg.g.family == "constant") {
    check_keys(g, {"family", "value"}, GP);
    cfg.g.constant = as_number(require(g, "value", GP), GP + ".value");
  } else if (cfg.g.family == "linear" || cfg.g.family == "quadratic") {
    if (cfg.g.family == "linear")
      check_keys(g, {"family", "coeffs", "constant"}, GP);
    else
      check_keys(g, {"family", "coeffs", "quad", "constant"}, GP);
    cfg.g.coeffs = as_vector(require(g, "coeffs", GP), GP + ".coeffs");
    if (cfg.g.coeffs.size() != dim)
      fail(GP + ".coeffs", "expected " + std::to_string(dim) + " values");
    cfg.g.constant = opt_number(g, "constant", GP, 0.0);
    if (cfg.g.family == "quadratic") {
      cfg.g.quad = as_vector(require(g, "quad", GP), GP + ".quad");
      if (cfg.g.quad.size() != dim)
        fail(GP + ".quad", "expected " + std::to_string(dim) + " values");
    }
  } else {
    fail(GP + ".family", "unknown family '" + cfg.g.family +
                             "' (expected constant, linear, or quadratic)");
  }

  cfg.bound = as_number(require(j, "C_r", P), "control.C_r");
  cfg.alpha = opt_number(j, "alpha", P, 2.0);
  if (j.contains("policy"))
    cfg.policy = parse_policy(j["policy"], "control.policy");
  if (j.contains("evaluate")) {
    const Json& ev = j["evaluate"];
    if (!ev.is_array()) fail("control.evaluate", "expected an array");
    for (std::size_t i = 0; i < ev.size(); ++i)
      cfg.evaluate.push_back(
          parse_policy(ev[i], elem_path("control.evaluate", i)));
  }
  return cfg;
}

NumericsCfg parse_numerics(const Json& j) {
  const std::string P = "numerics";
  NumericsCfg cfg;
  if (j.is_null()) return cfg;
  check_keys(j,
             {"horizon", "grid_steps", "n_paths", "eval_paths", "n_seeds",
              "regression_degree", "lift_feature_atoms", "ridge_scale",
              "threshold", "seed"},
             P);
  cfg.horizon = opt_number(j, "horizon", P, cfg.horizon);
  if (!(cfg.horizon > 0.0))
    fail("numerics.horizon", "horizon must be positive");
  cfg.grid_steps = opt_count(j, "grid_steps", P, cfg.grid_steps);
  if (cfg.grid_steps == 0)
    fail("numerics.grid_steps", "need at least one step");
  cfg.n_paths = opt_count(j, "n_paths", P, cfg.n_paths);
  cfg.eval_paths = opt_count(j, "eval_paths", P, cfg.eval_paths);
  cfg.n_seeds = opt_count(j, "n_seeds", P, cfg.n_seeds);
  if (cfg.n_paths == 0 || cfg.eval_paths == 0 || cfg.n_seeds == 0)
    fail("numerics.n_paths", "path and seed counts must be positive");
  cfg.regression_degree =
      opt_count(j, "regression_degree", P, cfg.regression_degree);
  if (j.contains("lift_feature_atoms")) {
    const Json& lf = j["lift_feature_atoms"];
    const std::string p = "numerics.lift_feature_atoms";
    if (!lf.is_array()) fail(p, "expected an array of atom indices");
    for (std::size_t i = 0; i < lf.size(); ++i)
      cfg.lift_feature_atoms.push_back(as_count(lf[i], elem_path(p, i)));
  }
  cfg.ridge_scale = opt_number(j, "ridge_scale", P, cfg.ridge_scale);
  cfg.threshold = opt_number(j, "threshold", P, cfg.threshold);
  if (j.contains("seed")) {
    const Json& s = j["seed"];
    if (s.is_number_unsigned()) {
      cfg.seed = s.get<std::uint64_t>();
    } else if (s.is_number_integer() && s.get<long long>() >= 0) {
      cfg.seed = static_cast<std::uint64_t>(s.get<long long>());
    } else {
      fail("numerics.seed", "expected a nonnegative integer");
    }
  }
  return cfg;
}

Cfg parse_config(const Json& root, const RunOverrides& overrides) {
  check_keys(root,
             {"mode", "kernel", "levy", "coefficients", "control", "numerics"},
             "");
  Cfg cfg;
  if (overrides.mode)
    cfg.mode = *overrides.mode;
  else
    cfg.mode = as_string(require(root, "mode", ""), "mode");
  const std::set<std::string> modes = {"kernel-check", "equivalence", "solve",
                                       "evaluate", "closed-loop"};
  if (!modes.count(cfg.mode))
    fail("mode", "unknown mode '" + cfg.mode +
                     "' (expected kernel-check, equivalence, solve, evaluate, "
                     "or closed-loop)");

  cfg.kernel = parse_kernel(require(root, "kernel", ""));
  cfg.numerics = parse_numerics(root.contains("numerics") ? root["numerics"]
                                                          : Json(nullptr));
  if (overrides.seed) cfg.numerics.seed = *overrides.seed;
  if (overrides.n_paths) {
    // --paths overrides the count the mode actually loops over.
    if (cfg.mode == "equivalence")
      cfg.numerics.n_seeds = *overrides.n_paths;
    else
      cfg.numerics.n_paths = *overrides.n_paths;
  }

  const bool needs_dynamics = cfg.mode != "kernel-check";
  const bool needs_control = cfg.mode == "solve" || cfg.mode == "evaluate" ||
                             cfg.mode == "closed-loop";
  if (needs_dynamics) {
    cfg.has_levy = true;
    cfg.levy = parse_levy(require(root, "levy", ""));
    cfg.has_coeffs = true;
    cfg.coeffs = parse_coefficients(require(root, "coefficients", ""));
  }
  if (needs_control)
    cfg.control = parse_control(require(root, "control", ""), cfg.coeffs.dim);
  return cfg;
}

// ---------------------------------------------------------------------------
// Runtime builders.
// ---------------------------------------------------------------------------

std::shared_ptr<const BernsteinMeasure> build_measure(const KernelCfg& cfg) {
  if (cfg.atomic)
    return std::make_shared<BernsteinMeasure>(
        make_atomic(cfg.atoms, cfg.eps_atomic));
  return std::make_shared<BernsteinMeasure>(discretize_density(cfg.spec));
}

double frobenius(const std::vector<double>& m) {
  double s = 0.0;
  for (double v : m) s += v * v;
  return std::sqrt(s);
}

CoefficientSet build_coefficients(const CoeffCfg& cfg, const LevyModel& model) {
  CoefficientSet cs;
  const std::size_t d = cfg.dim;
  const std::size_t mdim = model.mark_dim();
  cs.dim = d;
  cs.mark_dim = mdim;

  if (cfg.f.family == "zero") {
    cs.drift = [](double, std::span<const double>, std::span<double> out) {
      std::fill(out.begin(), out.end(), 0.0);
    };
    cs.lip_f = 0.0;
  } else if (cfg.f.family == "constant") {
    cs.drift = [v = cfg.f.value](double, std::span<const double>,
                                 std::span<double> out) {
      std::copy(v.begin(), v.end(), out.begin());
    };
    cs.lip_f = 0.0;
  } else {  // linear / affine
    const bool affine = cfg.f.family == "affine";
    cs.drift = [A = cfg.f.matrix, b = cfg.f.offset, d, affine](
                   double, std::span<const double> u, std::span<double> out) {
      for (std::size_t r = 0; r < d; ++r) {
        double s = affine ? b[r] : 0.0;
        for (std::size_t c = 0; c < d; ++c) s += A[r * d + c] * u[c];
        out[r] = s;
      }
    };
    // The Frobenius norm dominates the spectral norm, so it is a valid
    // declared Lipschitz constant.
    cs.lip_f = frobenius(cfg.f.matrix);
  }

  if (cfg.sigma.family == "zero") {
    cs.noise = [](double, std::span<const double>, std::span<const double>,
                  std::span<double> out) {
      std::fill(out.begin(), out.end(), 0.0);
    };
    cs.lip_sigma = 0.0;
  } else if (cfg.sigma.family == "constant") {
    cs.noise = [v = cfg.sigma.value](double, std::span<const double>,
                                     std::span<const double>,
                                     std::span<double> out) {
      std::copy(v.begin(), v.end(), out.begin());
    };
    cs.lip_sigma = 0.0;
  } else if (cfg.sigma.family == "mark_scale" ||
             cfg.sigma.family == "mark_scale_state") {
    if (mdim != 1 && mdim != d)
      fail("coefficients.sigma",
           cfg.sigma.family + " needs mark dimension 1 or " +
               std::to_string(d) + ", got " + std::to_string(mdim));
    const bool state = cfg.sigma.family == "mark_scale_state";
    cs.noise = [s = cfg.sigma.scale, mdim, state](
                   double, std::span<const double> xi,
                   std::span<const double> u, std::span<double> out) {
      for (std::size_t c = 0; c < out.size(); ++c) {
        const double x = xi[mdim == 1 ? 0 : c];
        out[c] = state ? s * x * u[c] : s * x;
      }
    };
    if (state) {
      double xmax = 0.0;
      for (const auto& mark : model.marks)
        for (double v : mark) xmax = std::max(xmax, std::abs(v));
      cs.lip_sigma = std::abs(cfg.sigma.scale) * xmax;
    } else {
      cs.lip_sigma = 0.0;
    }
  } else {  // mark_matrix
    if (cfg.sigma.matrix.size() != d * mdim)
      fail("coefficients.sigma.matrix",
           "expected " + std::to_string(d) + " x " + std::to_string(mdim) +
               " entries, got " + std::to_string(cfg.sigma.matrix.size()));
    cs.noise = [B = cfg.sigma.matrix, d, mdim](double,
                                               std::span<const double> xi,
                                               std::span<const double>,
                                               std::span<double> out) {
      for (std::size_t r = 0; r < d; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < mdim; ++c) s += B[r * mdim + c] * xi[c];
        out[r] = s;
      }
    };
    cs.lip_sigma = 0.0;
  }
  return cs;
}

std::size_t action_index(const std::vector<std::string>& labels,
                         const std::string& name, const std::string& path) {
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == name) return i;
  fail(path, "unknown action label '" + name + "'");
}

ControlProblem build_problem(const Cfg& cfg,
                             std::shared_ptr<const BernsteinMeasure> measure) {
  ControlProblem problem;
  problem.measure = measure;
  problem.levy = cfg.levy;
  problem.coeffs = build_coefficients(cfg.coeffs, cfg.levy);
  problem.y0 = cfg.coeffs.y0;
  problem.grid = TimeGrid{cfg.numerics.horizon, cfg.numerics.grid_steps};
  problem.action_labels = cfg.control.actions;
  problem.intensity_bound = cfg.control.bound;
  problem.cost_moment_exponent = cfg.control.alpha;

  const IntensityCfg& r = cfg.control.r;
  if (r.family == "per_action") {
    problem.intensity = [values = r.values](double, std::span<const double>,
                                            std::span<const double>,
                                            std::size_t a) {
      return values[a];
    };
  } else if (r.family == "per_action_mark") {
    // Marks are identified by exact value match: callers always pass one
    // of the model's mark vectors through unchanged.
    problem.intensity = [table = r.per_mark, marks = cfg.levy.marks](
                            double, std::span<const double>,
                            std::span<const double> xi, std::size_t a) {
      for (std::size_t i = 0; i < marks.size(); ++i)
        if (std::equal(marks[i].begin(), marks[i].end(), xi.begin(),
                       xi.end()))
          return table[a][i];
      throw std::invalid_argument("intensity ratio queried at unknown mark");
    };
  } else {  // logistic_state
    problem.intensity = [low = r.low, high = r.high, gain = r.gain,
                         center = r.center](double, std::span<const double> u,
                                            std::span<const double>,
                                            std::size_t a) {
      const double s = 1.0 / (1.0 + std::exp(-gain * (u[0] - center)));
      return low[a] + (high[a] - low[a]) * s;
    };
  }

  const RunningCostCfg& l = cfg.control.l;
  if (l.family == "per_action") {
    problem.running_cost = [costs = l.costs](double, std::span<const double>,
                                             std::size_t a) {
      return costs[a];
    };
  } else {
    const bool quad = l.family == "quadratic_state";
    problem.running_cost = [costs = l.costs, lin = l.state_coeffs,
                            q = l.quad_coeffs, quad](
                               double, std::span<const double> u,
                               std::size_t a) {
      double s = costs[a];
      for (std::size_t c = 0; c < lin.size(); ++c) s += lin[c] * u[c];
      if (quad)
        for (std::size_t c = 0; c < q.size(); ++c) s += q[c] * u[c] * u[c];
      return s;
    };
  }

  const TerminalCostCfg& g = cfg.control.g;
  if (g.family == "constant") {
    problem.terminal_cost = [v = g.constant](std::span<const double>) {
      return v;
    };
  } else {
    const bool quad = g.family == "quadratic";
    problem.terminal_cost = [c0 = g.constant, lin = g.coeffs, q = g.quad,
                             quad](std::span<const double> u) {
      double s = c0;
      for (std::size_t c = 0; c < lin.size(); ++c) s += lin[c] * u[c];
      if (quad)
        for (std::size_t c = 0; c < q.size(); ++c) s += q[c] * u[c] * u[c];
      return s;
    };
  }
  return problem;
}

std::string policy_label(const PolicyCfg& pc) {
  if (!pc.label.empty()) return pc.label;
  if (pc.kind == "constant") return pc.action;
  if (pc.kind == "schedule")
    return pc.before + "->" + pc.after + "@" + format_double(pc.switch_time);
  return "feedback";
}

Policy build_static_policy(const PolicyCfg& pc, const ControlProblem& problem,
                           const std::string& path) {
  if (pc.kind == "constant") {
    return Policy::constant(
        action_index(problem.action_labels, pc.action, path + ".action"),
        policy_label(pc));
  }
  const std::size_t before =
      action_index(problem.action_labels, pc.before, path + ".before");
  const std::size_t after =
      action_index(problem.action_labels, pc.after, path + ".after");
  const double ts = pc.switch_time;
  return Policy::schedule(
      [before, after, ts](double t) { return t < ts ? before : after; },
      policy_label(pc));
}

// ---------------------------------------------------------------------------
// Deterministic serialization.
// ---------------------------------------------------------------------------

Json atoms_json(const std::vector<Atom>& atoms) {
  Json arr = Json::array();
  for (const Atom& a : atoms) {
    Json e;
    e["x"] = a.rate;
    e["w"] = a.weight;
    arr.push_back(std::move(e));
  }
  return arr;
}

Json measure_json(const BernsteinMeasure& m) {
  Json j;
  j["atoms"] = atoms_json(m.atoms());
  j["eps"] = m.eps();
  if (m.provenance()) {
    const DensitySpec& spec = *m.provenance();
    Json p;
    switch (spec.family) {
      case DensitySpec::Family::fractional:
        p["family"] = "fractional";
        p["alpha"] = spec.alpha;
        break;
      case DensitySpec::Family::gamma_mix: {
        p["family"] = "gamma_mix";
        Json comps = Json::array();
        for (const auto& c : spec.components) {
          Json e;
          e["coeff"] = c.coeff;
          e["shape"] = c.shape;
          e["scale"] = c.scale;
          comps.push_back(std::move(e));
        }
        p["components"] = std::move(comps);
        break;
      }
      case DensitySpec::Family::exponential_mix:
        p["family"] = "exponential_mix";
        break;
    }
    if (spec.family != DensitySpec::Family::exponential_mix) {
      p["x_min"] = spec.x_min;
      p["x_max"] = spec.x_max;
      p["nodes"] = spec.nodes;
    }
    j["provenance"] = std::move(p);
  } else {
    j["provenance"] = nullptr;
  }
  return j;
}

Json kernel_cfg_json(const KernelCfg& cfg, const BernsteinMeasure& m) {
  Json j;
  if (cfg.atomic) {
    j["atoms"] = atoms_json(cfg.atoms);
    j["eps"] = cfg.eps_atomic;
    return j;
  }
  const DensitySpec& s = cfg.spec;
  switch (s.family) {
    case DensitySpec::Family::fractional:
      j["family"] = "fractional";
      j["alpha"] = s.alpha;
      break;
    case DensitySpec::Family::gamma_mix: {
      j["family"] = "gamma_mix";
      Json comps = Json::array();
      for (const auto& c : s.components) {
        Json e;
        e["coeff"] = c.coeff;
        e["shape"] = c.shape;
        e["scale"] = c.scale;
        comps.push_back(std::move(e));
      }
      j["components"] = std::move(comps);
      break;
    }
    case DensitySpec::Family::exponential_mix:
      j["family"] = "exponential_mix";
      j["atoms"] = atoms_json(s.atoms);
      break;
  }
  if (s.family != DensitySpec::Family::exponential_mix) {
    j["nodes"] = s.nodes;
    j["x_min"] = s.x_min;
    j["x_max"] = s.x_max;
  }
  j["eps"] = m.eps();  // resolved value, default included
  return j;
}

Json policy_cfg_json(const PolicyCfg& pc) {
  Json j;
  j["kind"] = pc.kind;
  if (pc.kind == "constant") {
    j["action"] = pc.action;
  } else if (pc.kind == "schedule") {
    j["switch_time"] = pc.switch_time;
    j["before"] = pc.before;
    j["after"] = pc.after;
  }
  j["label"] = policy_label(pc);
  return j;
}

Json resolved_config(const Cfg& cfg, const BernsteinMeasure& measure) {
  Json j;
  j["mode"] = cfg.mode;
  j["kernel"] = kernel_cfg_json(cfg.kernel, measure);

  if (cfg.has_levy) {
    Json levy;
    Json marks = Json::array();
    for (const auto& m : cfg.levy.marks) marks.push_back(m);
    levy["marks"] = std::move(marks);
    levy["rates"] = cfg.levy.rates;
    j["levy"] = std::move(levy);
  }

  if (cfg.has_coeffs) {
    Json co;
    co["dim"] = cfg.coeffs.dim;
    co["y0"] = cfg.coeffs.y0;
    Json f;
    f["family"] = cfg.coeffs.f.family;
    if (cfg.coeffs.f.family == "constant") f["value"] = cfg.coeffs.f.value;
    if (cfg.coeffs.f.family == "linear" || cfg.coeffs.f.family == "affine") {
      Json rows = Json::array();
      for (std::size_t r = 0; r < cfg.coeffs.dim; ++r)
        rows.push_back(std::vector<double>(
            cfg.coeffs.f.matrix.begin() + r * cfg.coeffs.dim,
            cfg.coeffs.f.matrix.begin() + (r + 1) * cfg.coeffs.dim));
      f["matrix"] = std::move(rows);
      if (cfg.coeffs.f.family == "affine") f["offset"] = cfg.coeffs.f.offset;
    }
    co["f"] = std::move(f);
    Json s;
    s["family"] = cfg.coeffs.sigma.family;
    if (cfg.coeffs.sigma.family == "constant")
      s["value"] = cfg.coeffs.sigma.value;
    if (cfg.coeffs.sigma.family == "mark_scale" ||
        cfg.coeffs.sigma.family == "mark_scale_state")
      s["scale"] = cfg.coeffs.sigma.scale;
    if (cfg.coeffs.sigma.family == "mark_matrix") {
      const std::size_t mdim = cfg.coeffs.sigma.matrix.size() / cfg.coeffs.dim;
      Json rows = Json::array();
      for (std::size_t r = 0; r < cfg.coeffs.dim; ++r)
        rows.push_back(std::vector<double>(
            cfg.coeffs.sigma.matrix.begin() + r * mdim,
            cfg.coeffs.sigma.matrix.begin() + (r + 1) * mdim));
      s["matrix"] = std::move(rows);
    }
    co["sigma"] = std::move(s);
    j["coefficients"] = std::move(co);
  }

  if (cfg.control.present) {
    const ControlCfg& c = cfg.control;
    Json ctrl;
    ctrl["actions"] = c.actions;
    Json r;
    r["family"] = c.r.family;
    if (c.r.family == "per_action") r["values"] = c.r.values;
    if (c.r.family == "per_action_mark") {
      Json rows = Json::array();
      for (const auto& row : c.r.per_mark) rows.push_back(row);
      r["values"] = std::move(rows);
    }
    if (c.r.family == "logistic_state") {
      r["low"] = c.r.low;
      r["high"] = c.r.high;
      r["gain"] = c.r.gain;
      r["center"] = c.r.center;
    }
    ctrl["r"] = std::move(r);
    Json l;
    l["family"] = c.l.family;
    l["costs"] = c.l.costs;
    if (c.l.family != "per_action") l["state_coeffs"] = c.l.state_coeffs;
    if (c.l.family == "quadratic_state") l["quad_coeffs"] = c.l.quad_coeffs;
    ctrl["l"] = std::move(l);
    Json g;
    g["family"] = c.g.family;
    if (c.g.family == "constant") {
      g["value"] = c.g.constant;
    } else {
      g["coeffs"] = c.g.coeffs;
      if (c.g.family == "quadratic") g["quad"] = c.g.quad;
      g["constant"] = c.g.constant;
    }
    ctrl["g"] = std::move(g);
    ctrl["C_r"] = c.bound;
    ctrl["alpha"] = c.alpha;
    if (c.policy) ctrl["policy"] = policy_cfg_json(*c.policy);
    Json ev = Json::array();
    for (const auto& pc : c.evaluate) ev.push_back(policy_cfg_json(pc));
    ctrl["evaluate"] = std::move(ev);
    j["control"] = std::move(ctrl);
  }

  const NumericsCfg& n = cfg.numerics;
  Json num;
  num["horizon"] = n.horizon;
  num["grid_steps"] = n.grid_steps;
  num["n_paths"] = n.n_paths;
  num["eval_paths"] = n.eval_paths;
  num["n_seeds"] = n.n_seeds;
  num["regression_degree"] = n.regression_degree;
  num["lift_feature_atoms"] = n.lift_feature_atoms;
  num["ridge_scale"] = n.ridge_scale;
  num["threshold"] = n.threshold;
  num["seed"] = n.seed;
  j["numerics"] = std::move(num);
  return j;
}

// ---------------------------------------------------------------------------
// Output collection: files are buffered, hashed, and written together so
// the manifest can list every output's content hash.
// ---------------------------------------------------------------------------

struct OutputSet {
  fs::path dir;
  std::vector<std::pair<std::string, std::string>> files;

  void add(std::string name, std::string content) {
    files.emplace_back(std::move(name), std::move(content));
  }

  Json hashes() const {
    Json j;
    for (const auto& [name, content] : files) {
      Json e;
      e["bytes"] = content.size();
      e["fnv1a64"] = fnv1a64_hex(content);
      j[name] = std::move(e);
    }
    return j;
  }

  std::vector<std::string> flush(Json manifest) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec && !fs::is_directory(dir))
      fail("out", "cannot create output directory " + dir.string() + ": " +
                      ec.message());
    manifest["outputs"] = hashes();
    files.emplace_back("manifest.json", manifest.dump(2) + "\n");
    std::vector<std::string> names;
    for (const auto& [name, content] : files) {
      std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
      if (!out) fail("out", "cannot open output file " + (dir / name).string());
      out.write(content.data(),
                static_cast<std::streamsize>(content.size()));
      out.flush();
      if (!out.good())
        fail("out", "failed writing output file " + (dir / name).string());
      names.push_back(name);
    }
    return names;
  }
};

Json base_manifest(const Cfg& cfg, const BernsteinMeasure& measure) {
  Json m;
  Json tool;
  tool["name"] = "svelift";
  tool["version"] = "0.1.0";
  m["tool"] = std::move(tool);
  m["mode"] = cfg.mode;
  m["config"] = resolved_config(cfg, measure);
  m["kernel"] = measure_json(measure);
  return m;
}

std::string csv_row(const std::vector<std::string>& cells) {
  std::string row;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) row += ',';
    row += cells[i];
  }
  row += '\n';
  return row;
}

// ---------------------------------------------------------------------------
// Mode runners.
// ---------------------------------------------------------------------------

/// Deterministic sub-seeds: the solver family, the policy-evaluation
/// family, and the validation probe stream must never share streams,
/// otherwise evaluation estimates would be correlated with the forward
/// ensemble through common random numbers.
std::uint64_t eval_seed(std::uint64_t seed) {
  return mix64(seed ^ 0x9E3779B97F4A7C15ULL);
}
std::uint64_t probe_seed(std::uint64_t seed) {
  return mix64(seed ^ 0xC2B2AE3D27D4EB4FULL);
}

std::vector<double> log_spaced(double lo, double hi, std::size_t n) {
  std::vector<double> out(n);
  const double llo = std::log(lo), lhi = std::log(hi);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = std::exp(llo + (lhi - llo) * static_cast<double>(i) /
                                static_cast<double>(n - 1));
  return out;
}

RunOutcome run_kernel_check(const Cfg& cfg, OutputSet& out) {
  auto measure = build_measure(cfg.kernel);
  const BernsteinMeasure& m = *measure;
  const SingularityReport sing = singularity_index(m);

  Json report;
  report["measure"] = measure_json(m);
  Json constants;
  constants["total_weight"] = m.total_weight();
  constants["admissibility_constant"] = m.admissibility_constant();
  constants["immersion_constant"] = m.immersion_constant();
  constants["projection_constant"] = m.projection_constant();
  constants["tail_moment"] = m.tail_moment();
  report["constants"] = constants;

  Json sj;
  sj["atomic_index"] = sing.atomic_index;
  if (sing.continuous_index)
    sj["continuous_index"] = *sing.continuous_index;
  else
    sj["continuous_index"] = nullptr;
  sj["near_admissibility_boundary"] = sing.near_admissibility_boundary;
  sj["note"] = sing.note;
  report["singularity"] = std::move(sj);

  // Complete-monotonicity probe: first differences nonpositive, second
  // differences nonnegative (within roundoff) across five decades.
  double min_second = std::numeric_limits<double>::infinity();
  double max_first = -std::numeric_limits<double>::infinity();
  for (double t : log_spaced(1e-3, 10.0, 60)) {
    const double h = 1e-6 * t;
    const double km = kernel_eval(m, t - h);
    const double k0 = kernel_eval(m, t);
    const double kp = kernel_eval(m, t + h);
    min_second = std::min(min_second, km - 2.0 * k0 + kp);
    max_first = std::max(max_first, kp - km);
  }
  Json cm;
  cm["min_second_difference"] = min_second;
  cm["max_first_difference"] = max_first;
  cm["pass"] = min_second >= -1e-8 && max_first <= 1e-12;
  report["checks"]["complete_monotonicity"] = std::move(cm);

  // Laplace-transform consistency: the numeric transform of the kernel
  // must match the closed form sum_j w_j/(s+x_j).
  Json laplace = Json::array();
  double max_laplace_err = 0.0;
  for (double s : {1.0, 2.0, 10.0}) {
    double analytic = 0.0;
    for (const Atom& a : m.atoms()) analytic += a.weight / (s + a.rate);
    const double cut = 45.0 / s;
    const double numeric = adaptive_simpson(
        [&](double t) { return std::exp(-s * t) * kernel_eval(m, t); }, 0.0,
        cut, 1e-12 * std::max(1.0, analytic));
    const double rel = std::abs(numeric - analytic) / std::abs(analytic);
    max_laplace_err = std::max(max_laplace_err, rel);
    Json e;
    e["s"] = s;
    e["analytic"] = analytic;
    e["numeric"] = numeric;
    e["rel_err"] = rel;
    laplace.push_back(std::move(e));
  }
  report["checks"]["laplace"] = std::move(laplace);
  report["checks"]["laplace_pass"] = max_laplace_err < 1e-6;

  // Accuracy against the continuous target when the provenance has one.
  std::optional<double> max_rel;
  if (m.provenance() &&
      m.provenance()->family != DensitySpec::Family::exponential_mix) {
    const DensitySpec& spec = *m.provenance();
    auto target = [&spec](double t) {
      if (spec.family == DensitySpec::Family::fractional)
        return std::pow(t, spec.alpha - 1.0) / std::tgamma(spec.alpha);
      double s = 0.0;
      for (const auto& c : spec.components)
        s += c.coeff * std::pow(c.scale / (c.scale + t), c.shape);
      return s;
    };
    Json table = Json::array();
    for (double t : log_spaced(0.05, 5.0, 25)) {
      const double kv = kernel_eval(m, t);
      const double tv = target(t);
      Json e;
      e["t"] = t;
      e["kernel"] = kv;
      e["target"] = tv;
      e["rel_err"] = std::abs(kv - tv) / std::abs(tv);
      table.push_back(std::move(e));
    }
    double worst = 0.0;
    for (double t : log_spaced(0.05, 5.0, 400))
      worst = std::max(worst, std::abs(kernel_eval(m, t) - target(t)) /
                                  std::abs(target(t)));
    max_rel = worst;
    Json acc;
    acc["t_range"] = std::vector<double>{0.05, 5.0};
    acc["max_rel_err"] = worst;
    acc["table"] = std::move(table);
    report["accuracy"] = std::move(acc);
  }

  out.add("kernel_report.json", report.dump(2) + "\n");

  Json manifest = base_manifest(cfg, m);
  Json results;
  results["atoms"] = m.size();
  results["admissibility_constant"] = m.admissibility_constant();
  results["monotonicity_pass"] = min_second >= -1e-8;
  results["laplace_max_rel_err"] = max_laplace_err;
  if (max_rel) results["max_rel_err"] = *max_rel;
  manifest["results"] = std::move(results);

  std::ostringstream rep;
  rep << "kernel-check: " << m.size()
      << " atoms, admissibility constant " << format_double(
             m.admissibility_constant())
      << ", immersion constant " << format_double(m.immersion_constant())
      << ", projection constant " << format_double(m.projection_constant())
      << "\n";
  rep << "singularity: atomic index 0";
  if (sing.continuous_index)
    rep << ", continuous index " << format_double(*sing.continuous_index)
        << (sing.near_admissibility_boundary ? " (near boundary)" : "");
  rep << "\n";
  rep << "monotonicity min second difference " << format_double(min_second)
      << "; laplace max rel err " << format_double(max_laplace_err) << "\n";
  if (max_rel)
    rep << "accuracy vs continuous target on [0.05, 5]: max rel err "
        << format_double(*max_rel) << "\n";

  RunOutcome outcome;
  outcome.mode = cfg.mode;
  outcome.report = rep.str();
  outcome.outputs = out.flush(manifest);
  return outcome;
}

RunOutcome run_equivalence(const Cfg& cfg, OutputSet& out) {
  auto measure = build_measure(cfg.kernel);
  const CoefficientSet coeffs = build_coefficients(cfg.coeffs, cfg.levy);
  {
    Stream probe(probe_seed(cfg.numerics.seed));
    coeffs.validate(cfg.levy, probe);
  }
  const TimeGrid grid{cfg.numerics.horizon, cfg.numerics.grid_steps};
  const std::vector<double> y0_field =
      expand_initial_field(*measure, cfg.coeffs.y0, cfg.coeffs.dim);

  const KernelFn kernel = [&measure](double t) {
    return kernel_eval(*measure, t);
  };
  const ForcingFn forcing = [&](double t, std::span<double> o) {
    const auto v = forcing_eval(*measure, y0_field, cfg.coeffs.dim, t);
    std::copy(v.begin(), v.end(), o.begin());
  };

  RngFamily family(cfg.numerics.seed);
  std::string csv = csv_row({"seed", "sup_gap", "rmse"});
  double max_gap = 0.0;
  double rmse_sum = 0.0;
  for (std::size_t i = 0; i < cfg.numerics.n_seeds; ++i) {
    Stream s = family.stream(i);
    const JumpPath path = sample_path(cfg.levy, grid.horizon, s);
    const LiftTrajectory lift =
        simulate_lift(measure, coeffs, cfg.levy, path, grid, cfg.coeffs.y0);
    const VolterraTrajectory direct =
        simulate_volterra(kernel, coeffs, cfg.levy, path, grid, forcing);
    const PathComparison cmp = compare_paths(lift, direct);
    max_gap = std::max(max_gap, cmp.sup_gap);
    rmse_sum += cmp.rmse;
    csv += csv_row({std::to_string(i), format_double(cmp.sup_gap),
                    format_double(cmp.rmse)});
  }
  const double mean_rmse = rmse_sum / static_cast<double>(cfg.numerics.n_seeds);
  const bool pass = max_gap <= cfg.numerics.threshold;
  out.add("equivalence.csv", csv);

  Json manifest = base_manifest(cfg, *measure);
  Json results;
  results["n_seeds"] = cfg.numerics.n_seeds;
  results["max_sup_gap"] = max_gap;
  results["mean_rmse"] = mean_rmse;
  results["threshold"] = cfg.numerics.threshold;
  results["pass"] = pass;
  manifest["results"] = std::move(results);

  std::ostringstream rep;
  rep << "equivalence: " << cfg.numerics.n_seeds << " seeds, max sup gap "
      << format_double(max_gap) << ", mean rmse " << format_double(mean_rmse)
      << ", threshold " << format_double(cfg.numerics.threshold) << " -> "
      << (pass ? "PASS" : "FAIL") << "\n";

  RunOutcome outcome;
  outcome.mode = cfg.mode;
  outcome.report = rep.str();
  outcome.outputs = out.flush(manifest);
  if (!pass)
    throw NumericalError("equivalence sup gap " + format_double(max_gap) +
                         " exceeds threshold " +
                         format_double(cfg.numerics.threshold));
  return outcome;
}

Json diagnostics_json(const BsdeSolution& sol) {
  const BsdeDiagnostics& d = sol.diagnostics;
  Json j;
  j["terminal_fit_rmse"] = d.terminal_fit_rmse;
  j["z_l2_nu"] = d.z_l2_nu;
  j["cost_moment"] = d.cost_moment;
  j["projection_only_features"] = d.projection_only_features;
  j["ridge_event_count"] = d.ridge_events.size();
  double r2_min = 1.0;
  for (double r2 : d.value_r2) r2_min = std::min(r2_min, r2);
  j["value_r2_min"] = r2_min;
  double resid = 0.0;
  for (double v : d.martingale_residual_mean)
    resid = std::max(resid, std::abs(v));
  j["martingale_residual_max_abs_mean"] = resid;
  return j;
}

std::string policy_table_csv(const std::vector<RelationRow>& rows) {
  std::string csv = csv_row({"policy", "J", "SE", "gap"});
  for (const auto& r : rows)
    csv += csv_row({r.policy, format_double(r.j), format_double(r.se),
                    format_double(r.gap)});
  return csv;
}

Json relation_json(const std::vector<RelationRow>& rows) {
  Json arr = Json::array();
  for (const auto& r : rows) {
    Json e;
    e["policy"] = r.policy;
    e["j"] = r.j;
    e["se"] = r.se;
    e["gap"] = r.gap;
    e["pass"] = r.pass;
    arr.push_back(std::move(e));
  }
  return arr;
}

RunOutcome run_solve(const Cfg& cfg, OutputSet& out) {
  auto measure = build_measure(cfg.kernel);
  ControlProblem problem = build_problem(cfg, measure);
  {
    Stream probe(probe_seed(cfg.numerics.seed));
    problem.coeffs.validate(cfg.levy, probe);
    problem.validate(probe);
  }

  BsdeConfig bcfg;
  bcfg.n_paths = cfg.numerics.n_paths;
  bcfg.degree = cfg.numerics.regression_degree;
  bcfg.lift_feature_atoms = cfg.numerics.lift_feature_atoms;
  bcfg.ridge_scale = cfg.numerics.ridge_scale;
  RngFamily solver_family(cfg.numerics.seed);
  auto solution = std::make_shared<BsdeSolution>(
      bsde_solve(problem, bcfg, solver_family));

  std::string value_csv = csv_row({"t", "theta"});
  for (std::size_t k = 0; k < solution->theta_mean.size(); ++k)
    value_csv += csv_row({format_double(problem.grid.time(k)),
                          format_double(solution->theta_mean[k])});
  out.add("value.csv", value_csv);

  // Benchmark policies: one constant policy per action plus any static
  // policies listed under control.evaluate. The extracted feedback
  // policy is prepended by the relation check itself.
  std::vector<Policy> policies;
  for (std::size_t a = 0; a < problem.n_actions(); ++a)
    policies.push_back(Policy::constant(a, problem.action_labels[a]));
  for (std::size_t i = 0; i < cfg.control.evaluate.size(); ++i) {
    const PolicyCfg& pc = cfg.control.evaluate[i];
    const std::string path = elem_path("control.evaluate", i);
    if (pc.kind == "feedback")
      fail(path + ".kind",
           "solve mode already evaluates the extracted feedback policy");
    policies.push_back(build_static_policy(pc, problem, path));
  }
  RngFamily eval_family(eval_seed(cfg.numerics.seed));
  const std::vector<RelationRow> rows = fundamental_relation_check(
      problem, *solution, policies, cfg.numerics.eval_paths, eval_family);
  out.add("policy_table.csv", policy_table_csv(rows));

  std::optional<double> switch_time;
  if (problem.n_actions() == 2)
    switch_time = extract_switch_time(*solution, 0, 1);

  Json manifest = base_manifest(cfg, *measure);
  Json results;
  results["theta0"] = solution->theta0;
  results["theta0_se"] = solution->theta0_se;
  results["policy_table"] = relation_json(rows);
  if (switch_time)
    results["switch_time"] = *switch_time;
  results["diagnostics"] = diagnostics_json(*solution);
  manifest["results"] = std::move(results);

  std::ostringstream rep;
  rep << "solve: theta0 = " << format_double(solution->theta0) << " (se "
      << format_double(solution->theta0_se) << "), " << problem.grid.steps
      << " steps, " << cfg.numerics.n_paths << " paths\n";
  for (const auto& r : rows)
    rep << "  " << r.policy << ": J=" << format_double(r.j)
        << " SE=" << format_double(r.se) << " gap=" << format_double(r.gap)
        << (r.pass ? " ok" : " VIOLATION") << "\n";
  if (switch_time)
    rep << "switch time (" << problem.action_labels[0] << " vs "
        << problem.action_labels[1]
        << "): " << format_double(*switch_time) << "\n";

  RunOutcome outcome;
  outcome.mode = cfg.mode;
  outcome.theta0 = solution->theta0;
  outcome.report = rep.str();
  outcome.outputs = out.flush(manifest);
  return outcome;
}

RunOutcome run_evaluate(const Cfg& cfg, OutputSet& out) {
  auto measure = build_measure(cfg.kernel);
  ControlProblem problem = build_problem(cfg, measure);
  {
    Stream probe(probe_seed(cfg.numerics.seed));
    problem.coeffs.validate(cfg.levy, probe);
    problem.validate(probe);
  }

  // Default policy set: one constant policy per action.
  std::vector<PolicyCfg> specs = cfg.control.evaluate;
  if (specs.empty()) {
    for (const auto& label : problem.action_labels) {
      PolicyCfg pc;
      pc.kind = "constant";
      pc.action = label;
      specs.push_back(pc);
    }
  }

  // A feedback entry needs the solved surrogates; solve lazily once.
  std::shared_ptr<BsdeSolution> solution;
  auto ensure_solution = [&]() {
    if (solution) return;
    BsdeConfig bcfg;
    bcfg.n_paths = cfg.numerics.n_paths;
    bcfg.degree = cfg.numerics.regression_degree;
    bcfg.lift_feature_atoms = cfg.numerics.lift_feature_atoms;
    bcfg.ridge_scale = cfg.numerics.ridge_scale;
    RngFamily solver_family(cfg.numerics.seed);
    solution =
        std::make_shared<BsdeSolution>(bsde_solve(problem, bcfg, solver_family));
  };

  std::vector<Policy> policies;
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const std::string path = elem_path("control.evaluate", i);
    if (specs[i].kind == "feedback") {
      ensure_solution();
      Policy p = feedback_policy(solution, problem);
      labels.push_back(specs[i].label.empty() ? p.label() : specs[i].label);
      policies.push_back(std::move(p));
    } else {
      Policy p = build_static_policy(specs[i], problem, path);
      labels.push_back(p.label());
      policies.push_back(std::move(p));
    }
  }

  RngFamily eval_family(eval_seed(cfg.numerics.seed));
  std::vector<CostEstimate> estimates;
  estimates.reserve(policies.size());
  for (const Policy& p : policies)
    estimates.push_back(
        cost_evaluate(problem, p, cfg.numerics.eval_paths, eval_family));

  // Gap column: distance to the solved optimum when available, else to
  // the best evaluated policy.
  double reference;
  if (solution) {
    reference = solution->theta0;
  } else {
    reference = estimates.front().j;
    for (const auto& e : estimates) reference = std::min(reference, e.j);
  }

  std::string csv = csv_row({"policy", "J", "SE", "gap"});
  Json table = Json::array();
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const double gap = estimates[i].j - reference;
    csv += csv_row({labels[i], format_double(estimates[i].j),
                    format_double(estimates[i].se), format_double(gap)});
    Json e;
    e["policy"] = labels[i];
    e["j"] = estimates[i].j;
    e["se"] = estimates[i].se;
    e["gap"] = gap;
    table.push_back(std::move(e));
  }
  out.add("policy_table.csv", csv);

  Json manifest = base_manifest(cfg, *measure);
  Json results;
  results["eval_paths"] = cfg.numerics.eval_paths;
  results["reference"] = reference;
  results["reference_kind"] = solution ? "theta0" : "best_evaluated";
  if (solution) results["theta0"] = solution->theta0;
  results["policy_table"] = std::move(table);
  manifest["results"] = std::move(results);

  std::ostringstream rep;
  rep << "evaluate: " << policies.size() << " policies at "
      << cfg.numerics.eval_paths << " paths (gap vs "
      << (solution ? "theta0" : "best evaluated") << ")\n";
  for (std::size_t i = 0; i < estimates.size(); ++i)
    rep << "  " << labels[i] << ": J=" << format_double(estimates[i].j)
        << " SE=" << format_double(estimates[i].se)
        << " gap=" << format_double(estimates[i].j - reference) << "\n";

  RunOutcome outcome;
  outcome.mode = cfg.mode;
  if (solution) outcome.theta0 = solution->theta0;
  outcome.report = rep.str();
  outcome.outputs = out.flush(manifest);
  return outcome;
}

RunOutcome run_closed_loop(const Cfg& cfg, OutputSet& out) {
  auto measure = build_measure(cfg.kernel);
  ControlProblem problem = build_problem(cfg, measure);
  {
    Stream probe(probe_seed(cfg.numerics.seed));
    problem.coeffs.validate(cfg.levy, probe);
    problem.validate(probe);
  }
  if (!cfg.control.policy)
    fail("control.policy", "closed-loop mode needs a policy");

  std::shared_ptr<BsdeSolution> solution;
  Policy policy = [&]() {
    const PolicyCfg& pc = *cfg.control.policy;
    if (pc.kind != "feedback")
      return build_static_policy(pc, problem, "control.policy");
    BsdeConfig bcfg;
    bcfg.n_paths = cfg.numerics.n_paths;
    bcfg.degree = cfg.numerics.regression_degree;
    bcfg.lift_feature_atoms = cfg.numerics.lift_feature_atoms;
    bcfg.ridge_scale = cfg.numerics.ridge_scale;
    RngFamily solver_family(cfg.numerics.seed);
    solution =
        std::make_shared<BsdeSolution>(bsde_solve(problem, bcfg, solver_family));
    return feedback_policy(solution, problem);
  }();

  RngFamily eval_family(eval_seed(cfg.numerics.seed));
  Stream s = eval_family.stream(0);
  const ControlledRun run = controlled_simulate(problem, policy, s);

  std::vector<std::string> header{"t"};
  for (std::size_t c = 1; c <= cfg.coeffs.dim; ++c)
    header.push_back("u_" + std::to_string(c));
  header.push_back("action");
  std::string csv = csv_row(header);
  const std::size_t M = problem.grid.steps;
  for (std::size_t k = 0; k <= M; ++k) {
    std::vector<std::string> cells{format_double(problem.grid.time(k))};
    for (double v : run.trajectory.projected[k])
      cells.push_back(format_double(v));
    const std::size_t a = run.actions[std::min(k, M - 1)];
    cells.push_back(problem.action_labels[a]);
    csv += csv_row(cells);
  }
  out.add("trajectory.csv", csv);

  Json manifest = base_manifest(cfg, *measure);
  Json results;
  results["total_cost"] = run.total_cost();
  results["running_cost"] = run.running_cost;
  results["terminal_cost"] = run.terminal_cost;
  results["n_events"] = run.path.events.size();
  results["final_u"] = run.trajectory.projected.back();
  if (solution) {
    results["theta0"] = solution->theta0;
    results["theta0_se"] = solution->theta0_se;
  }
  manifest["results"] = std::move(results);

  std::ostringstream rep;
  rep << "closed-loop (" << policy.label() << "): total cost "
      << format_double(run.total_cost()) << " (running "
      << format_double(run.running_cost) << ", terminal "
      << format_double(run.terminal_cost) << "), "
      << run.path.events.size() << " events\n";
  if (solution)
    rep << "theta0 = " << format_double(solution->theta0) << "\n";

  RunOutcome outcome;
  outcome.mode = cfg.mode;
  if (solution) outcome.theta0 = solution->theta0;
  outcome.report = rep.str();
  outcome.outputs = out.flush(manifest);
  return outcome;
}

}  // namespace

std::string fnv1a64_hex(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= static_cast<std::uint64_t>(c);
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << "0x" << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

RunOutcome run_experiment(const std::string& config_text,
                          const std::string& out_dir,
                          const RunOverrides& overrides) {
  Json root;
  try {
    root = Json::parse(config_text);
  } catch (const nlohmann::json::parse_error& e) {
    fail("(document)", std::string("invalid JSON: ") + e.what());
  }
  const Cfg cfg = parse_config(root, overrides);

  OutputSet out;
  out.dir = out_dir;
  if (cfg.mode == "kernel-check") return run_kernel_check(cfg, out);
  if (cfg.mode == "equivalence") return run_equivalence(cfg, out);
  if (cfg.mode == "solve") return run_solve(cfg, out);
  if (cfg.mode == "evaluate") return run_evaluate(cfg, out);
  return run_closed_loop(cfg, out);
}

RunOutcome run_experiment_file(const std::string& config_path,
                               const std::string& out_dir,
                               const RunOverrides& overrides) {
  std::ifstream in(config_path, std::ios::binary);
  if (!in) fail("config", "cannot open config file " + config_path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return run_experiment(buf.str(), out_dir, overrides);
}

}  // namespace svelift
