// Command line driver for runs and verification studies.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sp3/config.hpp"
#include "sp3/harness.hpp"

namespace fs = std::filesystem;
using namespace sp3;

namespace {

constexpr int kExitFail = 2;

struct Common {
  std::string preset = "example1";
  int p = 2;
  int p_phi = -1;
  std::vector<int> h_levels{2};
  std::vector<double> sigma_levels;
  std::string config;
  std::string out = "out";
  int vtk_level = 0;
  int error_stride = 1;
};

double h_of(int level) { return std::ldexp(1.0, -level); }

std::vector<double> hs_of(const std::vector<int>& levels) {
  std::vector<double> hs;
  for (int l : levels) hs.push_back(h_of(l));
  return hs;
}

class Summary {
 public:
  template <class T>
  void set(const std::string& key, const T& value) {
    std::ostringstream ss;
    ss.precision(10);
    ss << value;
    entries_.emplace_back(key, ss.str());
  }
  void write(const fs::path& dir) const {
    std::ofstream f(dir / "summary");
    for (const auto& [k, v] : entries_) {
      f << k << "=" << v << "\n";
      std::cout << k << "=" << v << "\n";
    }
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

struct Setup {
  RunConfig rc;
  std::optional<ManufacturedCase> manufactured;
  Problem problem;
  StudyOptions opt;
};

Setup setup(const Common& c) {
  Setup s;
  if (!c.config.empty()) s.rc = load_config(c.config);
  if (auto mc = manufactured_preset(c.preset)) {
    s.manufactured = configured(*mc, s.rc);
    s.problem = s.manufactured->problem();
  } else {
    s.problem = configured(make_preset(c.preset), s.rc);
  }
  s.opt.integrator = s.rc.integrator;
  s.opt.error_stride = c.error_stride;
  return s;
}

fs::path out_dir(const Common& c) {
  fs::path d(c.out);
  fs::create_directories(d);
  return d;
}

double first_sigma(const Common& c, const Setup& s) {
  return c.sigma_levels.empty() ? s.opt.integrator.sigma : c.sigma_levels.front();
}

void write_report(const fs::path& dir, const ConvergenceReport& rep) {
  std::ofstream f(dir / "report.csv");
  rep.write_csv(f);
}

void report_failures(const Study& st, Summary& sum) {
  int k = 0;
  for (const auto& r : st.runs)
    if (!r.ok) sum.set("failure_" + std::to_string(k++), r.failure);
}

int cmd_run(const Common& c) {
  Setup s = setup(c);
  const fs::path dir = out_dir(c);
  const Discretization d{c.p, c.p_phi, h_of(c.h_levels.front())};
  const double sigma = first_sigma(c, s);
  const Discrete disc = discretize(s.problem, d);
  IntegratorConfig cfg = s.opt.integrator;
  cfg.sigma = sigma;
  if (cfg.t_final <= 0.0) cfg.t_final = s.problem.t_final;
  if (cfg.snapshot_times.empty()) cfg.snapshot_times = {0.0, cfg.t_final};

  Summary sum;
  sum.set("preset", c.preset);
  sum.set("p", d.p);
  sum.set("p_phi", d.phi_degree());
  sum.set("h", d.h);
  sum.set("sigma", sigma);
  sum.set("dofs_T", disc.assembler->u().space->num_dofs());
  sum.set("dofs_phi", 2 * disc.assembler->v().space->num_dofs());

  std::optional<ErrorTracker> tracker;
  if (s.manufactured)
    tracker.emplace(disc.assembler, std::make_shared<const ManufacturedCase>(*s.manufactured), c.error_stride);
  bool ok = true;
  try {
    Integrator integ(disc.assembler, s.problem, cfg);
    const int last = integ.num_steps();
    auto res = integ.run([&](const StepperState& st) {
      if (tracker) tracker->observe(st, st.n == last);
    });
    std::ofstream steps(dir / "steps.csv");
    res.log.write_csv(steps);
    for (std::size_t k = 0; k < res.snapshots.size(); ++k) {
      const auto& snap = res.snapshots[k];
      std::ofstream v(dir / ("snapshot_" + std::to_string(k) + ".vtk"));
      write_vtk(v, {{"T", &snap.T}, {"phi1", &snap.phi[0]}, {"phi2", &snap.phi[1]}}, c.vtk_level,
                "t=" + std::to_string(snap.t));
    }
    sum.set("steps", integ.num_steps());
    sum.set("t_final", res.state.t);
    sum.set("solve_seconds", res.solve_seconds);
    sum.set("max_stability_monitor", res.log.max_monitor());
    sum.set("T_min", res.state.T.coeffs.minCoeff());
    sum.set("T_max", res.state.T.coeffs.maxCoeff());
    if (tracker) {
      sum.set("err_T", tracker->norms().err_T);
      sum.set("err_phi", tracker->norms().err_phi);
    }
    ok = res.log.all_finite();
  } catch (const Error& e) {
    ok = false;
    sum.set("failure", e.what());
  }
  sum.set("status", ok ? "pass" : "fail");
  sum.write(dir);
  return ok ? 0 : kExitFail;
}

int cmd_converge_space(const Common& c) {
  Setup s = setup(c);
  const fs::path dir = out_dir(c);
  const double sigma = first_sigma(c, s);
  const auto hs = hs_of(c.h_levels);
  const Study st = s.manufactured ? space_study(*s.manufactured, c.p, c.p_phi, hs, sigma, s.opt)
                                  : space_study(s.problem, c.p, c.p_phi, hs, sigma, s.opt);
  write_report(dir, st.report);
  const auto orders = fitted_orders(st);
  // Expected order p in the L2 norm for T (the observed value sits between p and p + 1).
  const bool ok = std::isfinite(orders[0]) && orders[0] >= c.p - 0.3 && orders[0] <= c.p + 1.6;
  Summary sum;
  sum.set("preset", c.preset);
  sum.set("sigma", sigma);
  sum.set("order_T", orders[0]);
  sum.set("order_phi", orders[1]);
  report_failures(st, sum);
  sum.set("status", ok ? "pass" : "fail");
  sum.write(dir);
  return ok ? 0 : kExitFail;
}

int cmd_converge_time(const Common& c) {
  Setup s = setup(c);
  const fs::path dir = out_dir(c);
  std::vector<double> sigmas = c.sigma_levels;
  if (sigmas.size() < 2) throw InvalidParameter("converge-time needs at least two --sigma-levels");
  const Discretization d{c.p, c.p_phi, h_of(c.h_levels.front())};
  const Study st = s.manufactured ? time_study(*s.manufactured, d, sigmas, s.opt) : time_study(s.problem, d, sigmas, s.opt);
  write_report(dir, st.report);
  const auto orders = fitted_orders(st);
  const bool ok = std::isfinite(orders[0]) && orders[0] >= 1.7 && orders[0] <= 2.3 && orders[1] >= 1.7 &&
                  orders[1] <= 2.3;
  Summary sum;
  sum.set("preset", c.preset);
  sum.set("h", d.h);
  sum.set("order_T", orders[0]);
  sum.set("order_phi", orders[1]);
  report_failures(st, sum);
  sum.set("status", ok ? "pass" : "fail");
  sum.write(dir);
  return ok ? 0 : kExitFail;
}

int cmd_compare_unified(const Common& c) {
  Setup s = setup(c);
  if (!s.manufactured) throw InvalidParameter("compare-unified needs a manufactured preset");
  const fs::path dir = out_dir(c);
  const double sigma = first_sigma(c, s);
  const double h = h_of(c.h_levels.front());
  const auto runs = compare_unified_mixed(*s.manufactured, c.p, h, sigma, s.opt);
  ConvergenceReport rep("p_phi");
  for (const auto& r : runs) rep.add_row({static_cast<double>(r.disc.phi_degree()), r.norms, kNaN, kNaN, r.cpu_seconds});
  write_report(dir, rep);
  const auto& uni = runs[0];
  const auto& mix = runs[1];
  const bool ok = uni.ok && mix.ok && mix.cpu_seconds < uni.cpu_seconds && mix.norms.err_T <= 1.5 * uni.norms.err_T;
  Summary sum;
  sum.set("unified_cpu", uni.cpu_seconds);
  sum.set("mixed_cpu", mix.cpu_seconds);
  sum.set("unified_err_T", uni.norms.err_T);
  sum.set("mixed_err_T", mix.norms.err_T);
  sum.set("unified_dofs", uni.dofs_T + uni.dofs_phi);
  sum.set("mixed_dofs", mix.dofs_T + mix.dofs_phi);
  if (!uni.ok) sum.set("unified_failure", uni.failure);
  if (!mix.ok) sum.set("mixed_failure", mix.failure);
  sum.set("status", ok ? "pass" : "fail");
  sum.write(dir);
  return ok ? 0 : kExitFail;
}

int cmd_equilibrium(const Common& c, int steps) {
  Setup s = setup(c);
  const fs::path dir = out_dir(c);
  const double sigma = first_sigma(c, s);
  const double T_m = s.problem.params.T_m;
  const Discretization d{c.p, c.p_phi, h_of(c.h_levels.front())};
  const auto rep = equilibrium_check(d, sigma, steps, T_m, s.opt);
  const bool ok = rep.run.ok && rep.max_T_nodal <= 1e-3 && rep.max_phi_dev <= 5e-4;
  Summary sum;
  sum.set("T_m", T_m);
  sum.set("steps", steps);
  sum.set("max_T_relative_drift", rep.max_T_nodal);
  sum.set("max_T_l2_drift", rep.max_T_drift);
  sum.set("max_phi_relative_deviation", rep.max_phi_dev);
  if (!rep.run.ok) sum.set("failure", rep.run.failure);
  sum.set("status", ok ? "pass" : "fail");
  sum.write(dir);
  std::ofstream steps_csv(dir / "steps.csv");
  rep.run.log.write_csv(steps_csv);
  return ok ? 0 : kExitFail;
}

int cmd_mesh_info(const Common& c) {
  Setup s = setup(c);
  for (int level : c.h_levels) {
    const Discretization d{c.p, c.p_phi, h_of(level)};
    const Discrete disc = discretize(s.problem, d);
    const auto& m = *disc.mesh;
    std::cout << "h=" << d.h << " vertices=" << m.num_vertices() << " tets=" << m.num_tets()
              << " boundary_faces=" << m.boundary_faces().size() << " volume=" << m.volume()
              << " boundary_area=" << m.boundary_area() << " dofs_T=" << disc.assembler->u().space->num_dofs()
              << " dofs_phi=" << 2 * disc.assembler->v().space->num_dofs() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SP3 radiation-conduction solver"};
  app.require_subcommand(1);
  Common c;
  int eq_steps = 100;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--preset", c.preset, "example1 | example2 | example3 | polynomial | equilibrium")
        ->capture_default_str();
    sub->add_option("--p", c.p, "temperature degree")->capture_default_str();
    sub->add_option("--p-phi", c.p_phi, "moment degree (default p - 1)");
    sub->add_option("--h-levels", c.h_levels, "mesh levels k, h = 2^-k")->delimiter(',');
    sub->add_option("--sigma-levels", c.sigma_levels, "time steps")->delimiter(',');
    sub->add_option("--config", c.config, "JSON configuration file");
    sub->add_option("--out", c.out, "output directory")->capture_default_str();
    sub->add_option("--vtk-level", c.vtk_level, "VTK sub-sampling level");
    sub->add_option("--error-stride", c.error_stride, "evaluate errors every k steps");
  };

  auto* run = app.add_subcommand("run", "single run with logs and VTK snapshots");
  auto* cs = app.add_subcommand("converge-space", "errors and orders over --h-levels");
  auto* ct = app.add_subcommand("converge-time", "errors and orders over --sigma-levels");
  auto* cu = app.add_subcommand("compare-unified", "P_p/P_p against P_p/P_{p-1}");
  auto* eq = app.add_subcommand("equilibrium-check", "drift from T = T_m");
  auto* mi = app.add_subcommand("mesh-info", "mesh and dof counts");
  for (auto* sub : {run, cs, ct, cu, eq, mi}) add_common(sub);
  eq->add_option("--steps", eq_steps)->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (c.p_phi < 0 && c.p == 1) c.p_phi = 1;
    if (*run) return cmd_run(c);
    if (*cs) return cmd_converge_space(c);
    if (*ct) return cmd_converge_time(c);
    if (*cu) return cmd_compare_unified(c);
    if (*eq) {
      if (c.preset == "example1") c.preset = "equilibrium";
      return cmd_equilibrium(c, eq_steps);
    }
    if (*mi) return cmd_mesh_info(c);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
