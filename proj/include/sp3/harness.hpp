#pragma once
// Error norms, convergence orders and run orchestration for verification studies.

#include <array>
#include <chrono>
#include <ctime>
#include <functional>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <memory>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "sp3/integrator.hpp"
#include "sp3/mms.hpp"

namespace sp3 {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Process CPU time in seconds.
inline double cpu_time() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

/// log(err_coarse / err_fine) / log(ratio).
inline double convergence_order(double err_coarse, double err_fine, double ratio) {
  if (!(err_coarse > 0.0) || !(err_fine > 0.0)) throw NonPositiveError("errors must be positive");
  if (!(ratio > 1.0)) throw InvalidParameter("refinement ratio must exceed 1");
  return std::log(err_coarse / err_fine) / std::log(ratio);
}

/// Least-squares slope of log(y) against log(x).
inline double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidParameter("need at least two points");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw NonPositiveError("log-log fit needs positive data");
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / lx.size();
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / ly.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  return sxy / sxx;
}

/// Max over sampled steps of L2 norms; the phi norm is (|phi1|^2 + |phi2|^2)^{1/2}.
struct ErrorNorms {
  double err_T = 0.0;
  double err_phi = 0.0;
  double norm_T = 0.0;
  double norm_T_h = 0.0;
  double norm_phi = 0.0;
  double norm_phi_h = 0.0;
};

/// Accumulates |||.|||_{0,inf} norms of a run against a manufactured solution.
class ErrorTracker {
 public:
  ErrorTracker(std::shared_ptr<const Assembler> a, std::shared_ptr<const ManufacturedCase> mc, int stride = 1)
      : a_(std::move(a)), exact_(mc, a_->quadrature_points()), stride_(std::max(1, stride)) {}

  /// Samples every `stride`-th step plus any step with `force`.
  void observe(const StepperState& s, bool force = false) {
    if (!force && s.n % stride_ != 0) return;
    const Vector Tq = a_->at_quadrature(a_->u(), s.T.coeffs);
    const Vector p1 = a_->at_quadrature(a_->v(), s.phi[0].coeffs);
    const Vector p2 = a_->at_quadrature(a_->v(), s.phi[1].coeffs);
    const auto& w = a_->quadrature_weights();
    double eT = 0, eP = 0, nT = 0, nTh = 0, nP = 0, nPh = 0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const auto q = static_cast<Eigen::Index>(k);
      const auto e = exact_.exact(k, s.t);
      const double dT = Tq[q] - e.T.value;
      const double d1 = p1[q] - e.phi[0].value, d2 = p2[q] - e.phi[1].value;
      eT += w[k] * dT * dT;
      eP += w[k] * (d1 * d1 + d2 * d2);
      nT += w[k] * e.T.value * e.T.value;
      nTh += w[k] * Tq[q] * Tq[q];
      nP += w[k] * (e.phi[0].value * e.phi[0].value + e.phi[1].value * e.phi[1].value);
      nPh += w[k] * (p1[q] * p1[q] + p2[q] * p2[q]);
    }
    last_step_ = s.n;
    norms_.err_T = std::max(norms_.err_T, std::sqrt(eT));
    norms_.err_phi = std::max(norms_.err_phi, std::sqrt(eP));
    norms_.norm_T = std::max(norms_.norm_T, std::sqrt(nT));
    norms_.norm_T_h = std::max(norms_.norm_T_h, std::sqrt(nTh));
    norms_.norm_phi = std::max(norms_.norm_phi, std::sqrt(nP));
    norms_.norm_phi_h = std::max(norms_.norm_phi_h, std::sqrt(nPh));
  }

  const ErrorNorms& norms() const { return norms_; }
  int last_step() const { return last_step_; }

 private:
  std::shared_ptr<const Assembler> a_;
  ManufacturedCase::Bound exact_;
  int stride_;
  int last_step_ = -1;
  ErrorNorms norms_;
};

struct Discretization {
  int p = 2;
  int p_phi = -1;  // -1: mixed pair, degree p - 1
  double h = 0.25;

  int phi_degree() const { return p_phi > 0 ? p_phi : p - 1; }
  bool unified() const { return phi_degree() == p; }
};

/// Cells per axis so that the cell edge along each axis is about h.
inline CellCounts cells_for(const Box& box, double h) {
  if (!(h > 0.0)) throw InvalidParameter("h must be positive");
  auto count = [&](int d) { return std::max(1, static_cast<int>(std::lround((box.hi[d] - box.lo[d]) / h))); };
  return {count(0), count(1), count(2)};
}

struct Discrete {
  std::shared_ptr<const TetMesh> mesh;
  std::shared_ptr<const Assembler> assembler;
};

inline Discrete discretize(const Problem& problem, const Discretization& d) {
  if (d.phi_degree() < 1)
    throw UnsupportedDegree("moment space degree must be >= 1; use the unified pair for p = 1");
  auto mesh = std::make_shared<const TetMesh>(build_box_mesh(problem.box, cells_for(problem.box, d.h)));
  auto U = make_space(mesh, d.p);
  auto V = d.phi_degree() == d.p ? U : make_space(mesh, d.phi_degree());
  const int q = default_quadrature_degree(d.p, problem.conductivity.max_degree());
  return {mesh, std::make_shared<const Assembler>(U, V, q)};
}

struct RunSummary {
  std::string preset;
  Discretization disc;
  double sigma = 0.0;
  int steps = 0;
  int dofs_T = 0;
  int dofs_phi = 0;
  ErrorNorms norms;
  double cpu_seconds = 0.0;
  bool ok = true;
  std::string failure;
  StabilityLog log;
  StepperState final_state;
};

struct StudyOptions {
  IntegratorConfig integrator;  // sigma is overwritten per run
  int error_stride = 1;
};

/// One run of a manufactured case with errors against the exact fields.
/// Solver failures are reported in the summary rather than thrown.
inline RunSummary run_manufactured(const ManufacturedCase& mc, const Discretization& d, double sigma,
                                   const StudyOptions& opt = {}) {
  RunSummary r;
  r.preset = mc.name();
  r.disc = d;
  r.sigma = sigma;
  const Problem problem = mc.problem();
  const Discrete disc = discretize(problem, d);
  r.dofs_T = disc.assembler->u().space->num_dofs();
  r.dofs_phi = 2 * disc.assembler->v().space->num_dofs();
  ErrorTracker tracker(disc.assembler, std::make_shared<const ManufacturedCase>(mc), opt.error_stride);
  IntegratorConfig cfg = opt.integrator;
  cfg.sigma = sigma;
  const double start = cpu_time();
  try {
    Integrator integ(disc.assembler, problem, cfg);
    r.steps = integ.num_steps();
    const int last = integ.num_steps();
    auto result = integ.run([&](const StepperState& s) { tracker.observe(s, s.n == last); });
    r.log = std::move(result.log);
    r.final_state = std::move(result.state);
  } catch (const Error& e) {
    r.ok = false;
    r.failure = e.what();
  }
  r.cpu_seconds = cpu_time() - start;
  r.norms = tracker.norms();
  if (!r.ok) r.norms.err_T = r.norms.err_phi = kNaN;
  return r;
}

/// One run without an exact solution; only the discrete norms are filled.
inline RunSummary run_problem(const Problem& problem, const Discretization& d, double sigma,
                              const StudyOptions& opt = {}, const Integrator::Observer& observer = nullptr) {
  RunSummary r;
  r.preset = problem.name;
  r.disc = d;
  r.sigma = sigma;
  const Discrete disc = discretize(problem, d);
  r.dofs_T = disc.assembler->u().space->num_dofs();
  r.dofs_phi = 2 * disc.assembler->v().space->num_dofs();
  IntegratorConfig cfg = opt.integrator;
  cfg.sigma = sigma;
  const double start = cpu_time();
  try {
    Integrator integ(disc.assembler, problem, cfg);
    r.steps = integ.num_steps();
    const auto& a = *disc.assembler;
    auto result = integ.run([&](const StepperState& s) {
      r.norms.norm_T_h = std::max(r.norms.norm_T_h, a.l2_norm(a.u(), s.T.coeffs));
      r.norms.norm_phi_h = std::max(
          r.norms.norm_phi_h, std::hypot(a.l2_norm(a.v(), s.phi[0].coeffs), a.l2_norm(a.v(), s.phi[1].coeffs)));
      if (observer) observer(s);
    });
    r.log = std::move(result.log);
    r.final_state = std::move(result.state);
  } catch (const Error& e) {
    r.ok = false;
    r.failure = e.what();
  }
  r.cpu_seconds = cpu_time() - start;
  return r;
}

/// L2 distance at the final time between a coarse run and a reference run on
/// a nested finer mesh, integrated with the reference quadrature.
inline ErrorNorms final_time_difference(const RunSummary& coarse, const RunSummary& ref, const Assembler& ref_asm) {
  ErrorNorms n;
  const auto& pts = ref_asm.quadrature_points();
  const auto& w = ref_asm.quadrature_weights();
  const Vector Tr = ref_asm.at_quadrature(ref_asm.u(), ref.final_state.T.coeffs);
  const Vector p1 = ref_asm.at_quadrature(ref_asm.v(), ref.final_state.phi[0].coeffs);
  const Vector p2 = ref_asm.at_quadrature(ref_asm.v(), ref.final_state.phi[1].coeffs);
  double eT = 0, eP = 0, nT = 0, nP = 0;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const auto q = static_cast<Eigen::Index>(k);
    const double dT = evaluate(coarse.final_state.T, pts[k]) - Tr[q];
    const double d1 = evaluate(coarse.final_state.phi[0], pts[k]) - p1[q];
    const double d2 = evaluate(coarse.final_state.phi[1], pts[k]) - p2[q];
    eT += w[k] * dT * dT;
    eP += w[k] * (d1 * d1 + d2 * d2);
    nT += w[k] * Tr[q] * Tr[q];
    nP += w[k] * (p1[q] * p1[q] + p2[q] * p2[q]);
  }
  n.err_T = std::sqrt(eT);
  n.err_phi = std::sqrt(eP);
  n.norm_T = std::sqrt(nT);
  n.norm_phi = std::sqrt(nP);
  n.norm_T_h = coarse.norms.norm_T_h;
  n.norm_phi_h = coarse.norms.norm_phi_h;
  return n;
}

/// Self-convergence for problems without an exact solution: the reference is
/// the same problem at (h/2, sigma/10), compared at the final time.
inline RunSummary run_self_convergence(const Problem& problem, const Discretization& d, double sigma,
                                       const StudyOptions& opt = {}) {
  RunSummary coarse = run_problem(problem, d, sigma, opt);
  if (!coarse.ok) return coarse;
  Discretization fine = d;
  fine.h = d.h / 2.0;
  const RunSummary ref = run_problem(problem, fine, sigma / 10.0, opt);
  if (!ref.ok) {
    coarse.ok = false;
    coarse.failure = "reference run failed: " + ref.failure;
    return coarse;
  }
  const Discrete ref_disc = discretize(problem, fine);
  coarse.norms = final_time_difference(coarse, ref, *ref_disc.assembler);
  return coarse;
}

// ---- reports ---------------------------------------------------------------------

struct ReportRow {
  double param = 0.0;  // h or sigma
  ErrorNorms norms;
  double co_T = kNaN;
  double co_phi = kNaN;
  double cpu_seconds = 0.0;
};

/// Table layout: parameter, |||T|||, |||T_h|||, |||phi|||, |||phi_h|||,
/// |||e_T|||, CO, |||e_phi|||, CO, CPU. CO is "...." on the first row.
class ConvergenceReport {
 public:
  explicit ConvergenceReport(std::string parameter = "h") : parameter_(std::move(parameter)) {}

  const std::string& parameter() const { return parameter_; }
  const std::vector<ReportRow>& rows() const { return rows_; }

  void add(double param, const ErrorNorms& norms, double cpu_seconds) {
    ReportRow r{param, norms, kNaN, kNaN, cpu_seconds};
    if (!rows_.empty()) {
      const auto& prev = rows_.back();
      const double ratio = prev.param / param;
      r.co_T = safe_order(prev.norms.err_T, norms.err_T, ratio);
      r.co_phi = safe_order(prev.norms.err_phi, norms.err_phi, ratio);
    }
    rows_.push_back(r);
  }

  void add_row(const ReportRow& row) { rows_.push_back(row); }

  void write_csv(std::ostream& os) const {
    os << parameter_ << ",norm_T,norm_T_h,norm_phi,norm_phi_h,err_T,CO_T,err_phi,CO_phi,cpu_s\n";
    os << std::setprecision(17);
    for (const auto& r : rows_) {
      os << r.param << "," << r.norms.norm_T << "," << r.norms.norm_T_h << "," << r.norms.norm_phi << ","
         << r.norms.norm_phi_h << "," << r.norms.err_T << ",";
      put(os, r.co_T);
      os << "," << r.norms.err_phi << ",";
      put(os, r.co_phi);
      os << "," << r.cpu_seconds << "\n";
    }
  }

  static ConvergenceReport read_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw InvalidParameter("empty report");
    ConvergenceReport rep(line.substr(0, line.find(',')));
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      std::vector<double> v;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) v.push_back(cell == "...." ? kNaN : std::stod(cell));
      if (v.size() != 10) throw InvalidParameter("report row needs 10 columns: " + line);
      ReportRow r;
      r.param = v[0];
      r.norms = {v[5], v[7], v[1], v[2], v[3], v[4]};
      r.co_T = v[6];
      r.co_phi = v[8];
      r.cpu_seconds = v[9];
      rep.rows_.push_back(r);
    }
    return rep;
  }

 private:
  static double safe_order(double coarse, double fine, double ratio) {
    if (!(coarse > 0.0) || !(fine > 0.0) || !(ratio > 1.0)) return kNaN;
    return convergence_order(coarse, fine, ratio);
  }
  static void put(std::ostream& os, double v) {
    if (std::isnan(v))
      os << "....";
    else
      os << v;
  }

  std::string parameter_;
  std::vector<ReportRow> rows_;
};

/// The same manufactured run with the moment space at degree p (unified) and p - 1 (mixed).
inline std::vector<RunSummary> compare_unified_mixed(const ManufacturedCase& mc, int p, double h, double sigma,
                                                     const StudyOptions& opt = {}) {
  if (p < 2) throw UnsupportedDegree("mixed mode needs p >= 2");
  return {run_manufactured(mc, {p, p, h}, sigma, opt), run_manufactured(mc, {p, p - 1, h}, sigma, opt)};
}

struct EquilibriumReport {
  double max_T_drift = 0.0;    // max_n ||T_h - T_m||_0 / (T_m |Omega|^{1/2})
  double max_T_nodal = 0.0;    // max_n max_i |T_i - T_m| / T_m
  double max_phi_dev = 0.0;    // max_n max_{i,j} |phi_j,i - 4 pi f(T_m)| / (4 pi f(T_m))
  double max_half_dev = 0.0;   // max_i |T^{-1/2}_i - T_m| / T_m
  RunSummary run;
};

/// T0 = T_m everywhere; measures how far the discrete solution drifts.
inline EquilibriumReport equilibrium_check(const Discretization& d, double sigma, int steps, double T_m = 300.0,
                                           const StudyOptions& opt = {}) {
  Problem pr = equilibrium_problem(T_m);
  pr.t_final = sigma * steps;
  EquilibriumReport rep;
  const double phi_ref = 4.0 * std::numbers::pi * black_body(T_m, pr.params.c_bs);
  const double vol = pr.box.volume();
  const Discrete disc = discretize(pr, d);
  const auto& a = *disc.assembler;
  bool first = true;
  auto observer = [&](const StepperState& s) {
    if (first) {
      rep.max_half_dev = ((s.T_half_prev.coeffs.array() - T_m).abs().maxCoeff()) / T_m;
      first = false;
    }
    const Vector diff = s.T.coeffs.array() - T_m;
    rep.max_T_drift = std::max(rep.max_T_drift, a.l2_norm(a.u(), diff) / (T_m * std::sqrt(vol)));
    rep.max_T_nodal = std::max(rep.max_T_nodal, diff.cwiseAbs().maxCoeff() / T_m);
    for (const auto& f : s.phi)
      rep.max_phi_dev = std::max(rep.max_phi_dev, (f.coeffs.array() - phi_ref).abs().maxCoeff() / phi_ref);
  };
  rep.run = run_problem(pr, d, sigma, opt, observer);
  return rep;
}

struct Study {
  ConvergenceReport report;
  std::vector<RunSummary> runs;
  bool all_ok() const {
    for (const auto& r : runs)
      if (!r.ok) return false;
    return !runs.empty();
  }
};

namespace detail {

inline Study collect(std::string parameter, const std::vector<double>& values,
                     const std::function<RunSummary(double)>& one) {
  Study st{ConvergenceReport(std::move(parameter)), {}};
  for (double v : values) {
    st.runs.push_back(one(v));
    st.report.add(v, st.runs.back().norms, st.runs.back().cpu_seconds);
  }
  return st;
}

}  // namespace detail

/// Errors over a sequence of mesh sizes at a fixed time step.
inline Study space_study(const ManufacturedCase& mc, int p, int p_phi, const std::vector<double>& hs, double sigma,
                         const StudyOptions& opt = {}) {
  return detail::collect("h", hs, [&](double h) { return run_manufactured(mc, {p, p_phi, h}, sigma, opt); });
}

/// Errors over a sequence of time steps at a fixed mesh.
inline Study time_study(const ManufacturedCase& mc, const Discretization& d, const std::vector<double>& sigmas,
                        const StudyOptions& opt = {}) {
  return detail::collect("sigma", sigmas, [&](double s) { return run_manufactured(mc, d, s, opt); });
}

/// Self-convergence versions for problems without an exact solution.
inline Study space_study(const Problem& pr, int p, int p_phi, const std::vector<double>& hs, double sigma,
                         const StudyOptions& opt = {}) {
  return detail::collect("h", hs, [&](double h) { return run_self_convergence(pr, {p, p_phi, h}, sigma, opt); });
}

inline Study time_study(const Problem& pr, const Discretization& d, const std::vector<double>& sigmas,
                        const StudyOptions& opt = {}) {
  return detail::collect("sigma", sigmas, [&](double s) { return run_self_convergence(pr, d, s, opt); });
}

/// Least-squares order of err_T and err_phi against the study parameter;
/// NaN when any run failed.
inline std::array<double, 2> fitted_orders(const Study& st) {
  if (!st.all_ok() || st.runs.size() < 2) return {kNaN, kNaN};
  std::vector<double> x, eT, eP;
  for (const auto& r : st.report.rows()) {
    x.push_back(r.param);
    eT.push_back(r.norms.err_T);
    eP.push_back(r.norms.err_phi);
  }
  try {
    return {least_squares_slope(x, eT), least_squares_slope(x, eP)};
  } catch (const Error&) {
    return {kNaN, kNaN};
  }
}

}  // namespace sp3
