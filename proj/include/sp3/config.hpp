#pragma once
// JSON run configuration.
//
// {
//   "physics":    {"k0":.., "tau":.., "alpha":.., "c_m":.., "T_m":.., "sigma":[s1,s2,s3], "c_bs":..,
//                  "theta":.., "m11":[c0,c1,..], "m22":[..], "m33":[..],
//                  "closure": {"alpha1":.., "gamma1":.., ...}},
//   "integrator": {"sigma":.., "t_final":.., "snapshot_times":[..], "reuse_phi":true,
//                  "stability_warn_threshold":..},
//   "solver":     {"linear_solver":"direct"|"cg", "cg_tol":.., "newton_tol":.., "newton_max_iter":..,
//                  "outer_max_iter":..}
// }
// Every key is optional. "sigma" means the scattering coefficients under
// "physics" and the time step under "integrator".

#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "sp3/integrator.hpp"
#include "sp3/mms.hpp"

namespace sp3 {

struct RunConfig {
  nlohmann::json physics = nlohmann::json::object();
  IntegratorConfig integrator;
  bool conductivity_override = false;
};

namespace detail {

template <class T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw InvalidParameter("unknown key '" + it.key() + "' in " + where);
  }
}

}  // namespace detail

inline void apply_physics(const nlohmann::json& j, PhysicalParams& p) {
  detail::read_if(j, "k0", p.k0);
  detail::read_if(j, "tau", p.tau);
  detail::read_if(j, "alpha", p.alpha);
  detail::read_if(j, "c_m", p.c_m);
  detail::read_if(j, "T_m", p.T_m);
  detail::read_if(j, "c_bs", p.c_bs);
  if (j.contains("sigma")) {
    const auto s = j.at("sigma").get<std::vector<double>>();
    if (s.size() != 3) throw InvalidParameter("physics.sigma needs three entries");
    p.sigma_scatter = {s[0], s[1], s[2]};
  }
  if (j.contains("closure")) {
    const auto& c = j.at("closure");
    detail::check_keys(c, {"alpha1", "alpha2", "beta1", "beta2", "gamma1", "gamma2", "mu1", "mu2", "eta1", "eta2"},
                       "physics.closure");
    auto& k = p.closure;
    detail::read_if(c, "alpha1", k.alpha1);
    detail::read_if(c, "alpha2", k.alpha2);
    detail::read_if(c, "beta1", k.beta1);
    detail::read_if(c, "beta2", k.beta2);
    detail::read_if(c, "gamma1", k.gamma1);
    detail::read_if(c, "gamma2", k.gamma2);
    detail::read_if(c, "mu1", k.mu1);
    detail::read_if(c, "mu2", k.mu2);
    detail::read_if(c, "eta1", k.eta1);
    detail::read_if(c, "eta2", k.eta2);
  }
  p.validate();
}

/// Returns true when the conductivity was changed.
inline bool apply_conductivity(const nlohmann::json& j, ConductivityModel& m) {
  bool changed = false;
  detail::read_if(j, "theta", m.theta);
  changed = j.contains("theta");
  const char* keys[3] = {"m11", "m22", "m33"};
  for (int i = 0; i < 3; ++i)
    if (j.contains(keys[i])) {
      m.m[i].coeffs = j.at(keys[i]).get<std::vector<double>>();
      if (m.m[i].coeffs.empty()) throw InvalidParameter(std::string(keys[i]) + " must not be empty");
      changed = true;
    }
  return changed;
}

inline RunConfig parse_config(const nlohmann::json& j) {
  RunConfig rc;
  detail::check_keys(j, {"physics", "integrator", "solver"}, "config");
  if (j.contains("physics")) {
    rc.physics = j.at("physics");
    detail::check_keys(rc.physics,
                       {"k0", "tau", "alpha", "c_m", "T_m", "c_bs", "sigma", "closure", "theta", "m11", "m22", "m33"},
                       "physics");
    PhysicalParams probe;
    apply_physics(rc.physics, probe);  // validates early
  }
  auto& ic = rc.integrator;
  if (j.contains("integrator")) {
    const auto& g = j.at("integrator");
    detail::check_keys(g, {"sigma", "t_final", "snapshot_times", "reuse_phi", "stability_warn_threshold"},
                       "integrator");
    detail::read_if(g, "sigma", ic.sigma);
    detail::read_if(g, "t_final", ic.t_final);
    detail::read_if(g, "snapshot_times", ic.snapshot_times);
    detail::read_if(g, "reuse_phi", ic.reuse_phi);
    detail::read_if(g, "stability_warn_threshold", ic.stability_warn_threshold);
    if (!(ic.sigma > 0.0)) throw InvalidParameter("integrator.sigma must be positive");
  }
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    detail::check_keys(s, {"linear_solver", "cg_tol", "newton_tol", "newton_max_iter", "outer_max_iter"}, "solver");
    auto& cc = ic.corrector;
    if (s.contains("linear_solver")) cc.linear.method = parse_linear_method(s.at("linear_solver").get<std::string>());
    detail::read_if(s, "cg_tol", cc.linear.cg_tol);
    detail::read_if(s, "newton_tol", cc.newton.rel_tol);
    detail::read_if(s, "newton_max_iter", cc.newton.max_iter);
    detail::read_if(s, "outer_max_iter", cc.outer_max_iter);
    if (cc.newton.max_iter < 1 || cc.outer_max_iter < 1) throw InvalidParameter("iteration limits must be >= 1");
  }
  return rc;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidParameter("cannot open config " + path);
  try {
    return parse_config(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidParameter("config " + path + ": " + e.what());
  }
}

/// Applies physics overrides to a plain problem.
inline Problem configured(Problem p, const RunConfig& rc) {
  apply_physics(rc.physics, p.params);
  apply_conductivity(rc.physics, p.conductivity);
  return p;
}

/// Manufactured cases accept parameter overrides only; changing M would
/// invalidate the closed-form sources.
inline ManufacturedCase configured(const ManufacturedCase& mc, const RunConfig& rc) {
  ConductivityModel probe;
  if (apply_conductivity(rc.physics, probe))
    throw InvalidParameter("conductivity overrides are not allowed for manufactured cases");
  PhysicalParams p = mc.params();
  apply_physics(rc.physics, p);
  return mc.with_params(p);
}

}  // namespace sp3
