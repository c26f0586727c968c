#pragma once
// Two-stage explicit/implicit time stepping for the coupled temperature and
// radiative moment system.
//
// Stage 1 (explicit, leapfrog over half steps):
//   (T^{n+1/2}, w) = (T^{n-1/2}, w) + sigma R(T^n, phi^n, t_n; w)
// Stage 2 (implicit, second order one-sided difference):
//   3(T^{n+1}, w) + sigma a(T^{n+1}, w) = (4T^{n+1/2} - T^n, w) + sigma [...]_{t_{n+1}}
// with phi^{n+1} solved from the radiative system driven by T^{n+1}.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "sp3/assembly.hpp"
#include "sp3/radiative.hpp"
#include "sp3/solver.hpp"

namespace sp3 {

/// Manufactured right-hand sides: volume (S_T, S_phi1, S_phi2) and boundary
/// (g_T, g_phi1, g_phi2) data. Empty functions mean no extra terms.
struct SourceTerms {
  using IndexedVolume = std::function<std::array<double, 3>(std::size_t, double)>;

  std::function<std::array<double, 3>(const Vec3&, double)> volume;
  std::function<std::array<double, 3>(const Vec3&, const Vec3&, double)> boundary;
  /// Optional: binds `volume` to a fixed point list so that per-point work
  /// independent of t is done once.
  std::function<IndexedVolume(const std::vector<Vec3>&)> bind_volume;

  bool empty() const { return !volume && !boundary; }
};

struct Problem {
  std::string name = "custom";
  PhysicalParams params;
  ConductivityModel conductivity;
  Box box;
  double t_final = 1.0;
  ScalarFunction T0;
  /// div(M(T0) grad T0) in closed form; enables the analytic T^{-1/2} start.
  ScalarFunction T0_flux_divergence;
  SourceTerms sources;
};

enum class InitPath { automatic, analytic, weak };

struct NewtonConfig {
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  int max_iter = 50;
};

struct CorrectorConfig {
  NewtonConfig newton;
  int outer_max_iter = 50;
  double outer_tol = 1e-10;
  LinearSolverConfig linear;
};

struct IntegratorConfig {
  double sigma = 1e-3;
  double t_final = 0.0;  // <= 0: use the problem's final time
  std::vector<double> snapshot_times;
  bool reuse_phi = true;
  double stability_warn_threshold = std::numeric_limits<double>::infinity();
  InitPath init = InitPath::automatic;
  CorrectorConfig corrector;
  // Abort once max |T_h| exceeds this multiple of max(|T_h^0|, |T_m|, 1);
  // the explicit stage amplifies unresolved modes when sigma is too large.
  double divergence_limit = 1e6;
};

struct StepperState {
  double t = 0.0;
  int n = 0;
  double sigma = 0.0;
  FemField T_half_prev;
  FemField T;
  FemField T_half_next;
  std::array<FemField, 2> phi;
};

struct StepRecord {
  int step = 0;
  double t = 0.0;
  double monitor = 0.0;
  int newton_iterations = 0;
  int outer_iterations = 0;
  double linear_residual = 0.0;
  double wall_seconds = 0.0;
};

struct StabilityLog {
  std::vector<StepRecord> entries;

  bool all_finite() const {
    for (const auto& e : entries)
      if (!std::isfinite(e.monitor) || !std::isfinite(e.linear_residual)) return false;
    return true;
  }
  double max_monitor() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.monitor);
    return m;
  }
  void write_csv(std::ostream& os) const {
    os << "step,t,stability_monitor,newton_iters,outer_iters,linear_residual,wall_seconds\n";
    os.precision(10);
    for (const auto& e : entries)
      os << e.step << "," << e.t << "," << e.monitor << "," << e.newton_iterations << "," << e.outer_iterations << ","
         << e.linear_residual << "," << e.wall_seconds << "\n";
  }
};

struct CorrectorStats {
  int outer_iterations = 0;
  int newton_iterations = 0;
  double linear_residual = 0.0;
  std::vector<double> newton_residuals;  // first outer iterate
};

struct Snapshot {
  double t = 0.0;
  FemField T;
  std::array<FemField, 2> phi;
};

struct RunResult {
  StepperState state;
  StabilityLog log;
  std::vector<Snapshot> snapshots;
  double solve_seconds = 0.0;
};

class Integrator {
 public:
  using Observer = std::function<void(const StepperState&)>;

  Integrator(std::shared_ptr<const Assembler> assembler, Problem problem, IntegratorConfig config)
      : a_(std::move(assembler)), problem_(std::move(problem)), cfg_(std::move(config)),
        newton_solver_(cfg_.corrector.linear) {
    const auto& p = problem_.params;
    p.validate();
    if (!(cfg_.sigma > 0.0)) throw InvalidParameter("time step sigma must be positive");
    if (cfg_.t_final <= 0.0) cfg_.t_final = problem_.t_final;
    const double steps = cfg_.t_final / cfg_.sigma;
    num_steps_ = static_cast<int>(std::llround(steps));
    if (std::abs(steps - num_steps_) > 1e-9 * std::max(1.0, steps))
      throw InvalidParameter("t_final / sigma must be an integer");
    if (cfg_.corrector.newton.rel_tol <= 0.0 || cfg_.corrector.newton.abs_tol <= 0.0 ||
        cfg_.corrector.outer_tol <= 0.0)
      throw InvalidParameter("solver tolerances must be positive");

    mass_ = a_->mass(a_->u());
    mass_factor_.compute(mass_);
    boundary_mass_ = a_->boundary_mass(a_->u(), 1.0);
    boundary_one_ = a_->boundary_integral(a_->u());
    cross_mass_ = a_->mass_cross();
    radiative_ = std::make_unique<RadiativeSystem>(a_, p, problem_.conductivity.theta);
    if (problem_.conductivity.is_constant()) constant_K_ = a_->conduction(problem_.conductivity, Vector());
    if (problem_.sources.volume && problem_.sources.bind_volume)
      bound_volume_ = problem_.sources.bind_volume(a_->quadrature_points());
  }

  const Assembler& assembler() const { return *a_; }
  const Problem& problem() const { return problem_; }
  const IntegratorConfig& config() const { return cfg_; }
  const RadiativeSystem& radiative() const { return *radiative_; }
  const SparseMatrix& mass() const { return mass_; }
  int num_steps() const { return num_steps_; }
  double sigma() const { return cfg_.sigma; }
  int factorizations() const { return newton_solver_.factorizations(); }

  // ---- building blocks ------------------------------------------------------

  /// Conduction matrix with M frozen at T.
  SparseMatrix conduction(const Vector& T) const {
    return constant_K_ ? *constant_K_ : a_->conduction(problem_.conductivity, T);
  }

  /// Manufactured loads at time t: (S_T, w) + tau^-1 <g_T, w> on U and
  /// (S_phi_j, psi) + tau mu_j^2 <g_phi_j, psi> on V.
  struct SourceLoads {
    double t = std::numeric_limits<double>::quiet_NaN();
    Vector T;
    std::array<Vector, 2> phi;
  };

  const SourceLoads& source_loads(double t) const {
    for (const auto& c : source_cache_)
      if (c.t == t) return c;
    SourceLoads s;
    s.t = t;
    const auto& U = a_->u();
    const auto& V = a_->v();
    s.T = Vector::Zero(U.space->num_dofs());
    s.phi = {Vector::Zero(V.space->num_dofs()), Vector::Zero(V.space->num_dofs())};
    const auto& src = problem_.sources;
    const auto& c = problem_.params.closure;
    const double tau = problem_.params.tau;
    if (src.volume) {
      const auto& pts = a_->quadrature_points();
      std::array<Vector, 3> vals;
      for (auto& v : vals) v.resize(static_cast<Eigen::Index>(pts.size()));
      for (std::size_t k = 0; k < pts.size(); ++k) {
        const auto r = bound_volume_ ? bound_volume_(k, t) : src.volume(pts[k], t);
        for (int i = 0; i < 3; ++i) vals[i][static_cast<Eigen::Index>(k)] = r[i];
      }
      s.T += a_->load_from_values(U, vals[0]);
      for (int j = 0; j < 2; ++j) s.phi[j] += a_->load_from_values(V, vals[j + 1]);
    }
    if (src.boundary) {
      const auto& pts = a_->face_quadrature_points();
      const auto& faces = a_->mesh().boundary_faces();
      const std::size_t nq = a_->face_rule().size();
      std::array<Vector, 3> vals;
      for (auto& v : vals) v.resize(static_cast<Eigen::Index>(pts.size()));
      for (std::size_t k = 0; k < pts.size(); ++k) {
        const auto r = src.boundary(pts[k], faces[k / nq].normal, t);
        for (int i = 0; i < 3; ++i) vals[i][static_cast<Eigen::Index>(k)] = r[i];
      }
      s.T += a_->boundary_load_from_values(U, vals[0]) / tau;
      for (int j = 0; j < 2; ++j)
        s.phi[j] += (tau * c.mu(j) * c.mu(j)) * a_->boundary_load_from_values(V, vals[j + 1]);
    }
    source_cache_[next_cache_] = std::move(s);
    const auto& out = source_cache_[next_cache_];
    next_cache_ = 1 - next_cache_;
    return out;
  }

  /// Radiative moments driven by temperature coefficients T at time t.
  std::array<Vector, 2> solve_phi(const Vector& T, double t) const {
    if (problem_.sources.empty()) return radiative_->solve_for(T);
    return radiative_->solve_for(T, &source_loads(t).phi);
  }

  /// cf (gamma2 phi1 - gamma1 phi2, w) with cf = k0 tau^-2 / (gamma2 - gamma1).
  Vector coupling_load(const std::array<Vector, 2>& phi) const {
    const auto& c = problem_.params.closure;
    return problem_.params.coupling_factor() * (cross_mass_ * (c.gamma2 * phi[0] - c.gamma1 * phi[1]));
  }

  /// Explicit right side R(T, phi, t; w) of the temperature equation.
  Vector explicit_rhs(const Vector& T, const std::array<Vector, 2>& phi, double t) const {
    const auto& p = problem_.params;
    const double fm = black_body(p.T_m, p.c_bs);
    Vector r = -(conduction(T) * T);
    r += (p.c_m / p.tau) * (p.T_m * boundary_one_ - boundary_mass_ * T);
    if (p.alpha != 0.0)
      r += (p.alpha * std::numbers::pi / p.tau) * (fm * boundary_one_ - a_->boundary_blackbody_load(T, p.c_bs));
    r -= (4.0 * std::numbers::pi * p.k0 / (p.tau * p.tau)) * a_->blackbody_load(a_->u(), T, p.c_bs);
    r += coupling_load(phi);
    if (!problem_.sources.empty()) r += source_loads(t).T;
    return r;
  }

  /// Corrector residual with M frozen at T_frozen and phi fixed:
  ///   F(T) = 3M T + sigma a(T) - M(4H - T^n) - sigma R_implicit(T)
  Vector corrector_residual(const Vector& T, const Vector& T_frozen, const std::array<Vector, 2>& phi,
                            const Vector& T_half, const Vector& T_n, double t_next) const {
    return linear_part(T_frozen) * T + nonlinear_part(T) - corrector_rhs(phi, T_half, T_n, t_next);
  }

  SparseMatrix corrector_jacobian(const Vector& T, const Vector& T_frozen) const {
    return linear_part(T_frozen) + nonlinear_jacobian(T);
  }

  // ---- scheme ---------------------------------------------------------------

  StepperState init_state() const {
    if (!problem_.T0) throw InvalidParameter("problem has no initial temperature");
    StepperState s;
    s.sigma = cfg_.sigma;
    const auto& U = a_->u();
    const auto& V = a_->v();
    s.T = FemField(U.space, mass_factor_.solve(a_->source_load(U, problem_.T0)), Unit::kelvin);
    const auto phi0 = solve_phi(s.T.coeffs, 0.0);
    for (int j = 0; j < 2; ++j) s.phi[j] = FemField(V.space, phi0[j], Unit::intensity);

    bool analytic = false;
    switch (cfg_.init) {
      case InitPath::analytic:
        if (!problem_.T0_flux_divergence)
          throw MissingSecondDerivatives("analytic start needs div(M grad T0) and the weak fallback is disabled");
        analytic = true;
        break;
      case InitPath::automatic:
        analytic = !problem_.sources.empty() && static_cast<bool>(problem_.T0_flux_divergence);
        break;
      case InitPath::weak:
        break;
    }

    Vector half;
    if (analytic) {
      // Q_h [T0 - (sigma/2) dT/dt(0)] with dT/dt from the strong equation.
      const auto& p = problem_.params;
      const auto& c = p.closure;
      const auto& pts = a_->quadrature_points();
      const Vector phi1 = a_->at_quadrature(V, phi0[0]);
      const Vector phi2 = a_->at_quadrature(V, phi0[1]);
      Vector vals(static_cast<Eigen::Index>(pts.size()));
      for (std::size_t k = 0; k < pts.size(); ++k) {
        const auto q = static_cast<Eigen::Index>(k);
        const double T0 = problem_.T0(pts[k]);
        double dt = problem_.T0_flux_divergence(pts[k]) -
                    4.0 * std::numbers::pi * p.k0 / (p.tau * p.tau) * black_body(T0, p.c_bs) +
                    p.coupling_factor() * (c.gamma2 * phi1[q] - c.gamma1 * phi2[q]);
        if (problem_.sources.volume) dt += problem_.sources.volume(pts[k], 0.0)[0];
        vals[q] = T0 - 0.5 * cfg_.sigma * dt;
      }
      half = mass_factor_.solve(a_->load_from_values(U, vals));
    } else {
      half = s.T.coeffs - 0.5 * cfg_.sigma * mass_factor_.solve(explicit_rhs(s.T.coeffs, phi0, 0.0));
    }
    s.T_half_prev = FemField(U.space, half, Unit::kelvin);
    growth_scale_ = std::max({s.T.coeffs.lpNorm<Eigen::Infinity>(), std::abs(problem_.params.T_m), 1.0});
    return s;
  }

  void predictor_step(StepperState& s) const {
    std::array<Vector, 2> phi;
    if (cfg_.reuse_phi) {
      phi = {s.phi[0].coeffs, s.phi[1].coeffs};
    } else {
      phi = solve_phi(s.T.coeffs, s.t);
      for (int j = 0; j < 2; ++j) s.phi[j].coeffs = phi[j];
    }
    const Vector r = explicit_rhs(s.T.coeffs, phi, s.t);
    s.T_half_next = FemField(s.T.space, s.T_half_prev.coeffs + cfg_.sigma * mass_factor_.solve(r), Unit::kelvin);
  }

  CorrectorStats corrector_step(StepperState& s) {
    const double t_next = (s.n + 1) * cfg_.sigma;
    CorrectorStats stats;
    Vector T_new = solve_corrector(s.T_half_next.coeffs, s.T.coeffs, t_next, stats);
    const auto phi = solve_phi(T_new, t_next);
    s.T_half_prev = s.T_half_next;
    s.T.coeffs = std::move(T_new);
    for (int j = 0; j < 2; ++j) s.phi[j].coeffs = phi[j];
    ++s.n;
    s.t = t_next;
    if (!s.T.all_finite()) throw NonlinearDivergence("non-finite temperature at step " + std::to_string(s.n));
    const double peak = s.T.coeffs.lpNorm<Eigen::Infinity>();
    if (growth_scale_ > 0.0 && peak > cfg_.divergence_limit * growth_scale_)
      throw NonlinearDivergence("temperature grew to " + std::to_string(peak) + " at step " + std::to_string(s.n) +
                                "; the explicit stage is unstable for this sigma");
    return stats;
  }

  /// sqrt(sigma) * ||f(T_h)||_{L2(boundary)}.
  double monitor_stability(const StepperState& s) const {
    Vector fq = a_->at_face_quadrature(a_->u(), s.T.coeffs);
    for (auto& x : fq) x = black_body(x, problem_.params.c_bs);
    return std::sqrt(cfg_.sigma) * a_->boundary_l2_of_values(fq);
  }

  RunResult run(const Observer& observer = nullptr) {
    RunResult result;
    const auto start = std::chrono::steady_clock::now();
    result.state = init_state();
    auto& s = result.state;
    std::vector<int> snapshot_steps;
    for (double ts : cfg_.snapshot_times) snapshot_steps.push_back(static_cast<int>(std::llround(ts / cfg_.sigma)));
    auto maybe_snapshot = [&] {
      for (int k : snapshot_steps)
        if (k == s.n) result.snapshots.push_back({s.t, s.T, s.phi});
    };
    record(result.log, s, CorrectorStats{}, 0.0);
    maybe_snapshot();
    if (observer) observer(s);
    for (int k = 0; k < num_steps_; ++k) {
      const auto t0 = std::chrono::steady_clock::now();
      predictor_step(s);
      const auto stats = corrector_step(s);
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      record(result.log, s, stats, wall);
      maybe_snapshot();
      if (observer) observer(s);
    }
    result.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
  }

 private:
  const SparseMatrix& linear_part(const Vector& T_frozen) const {
    // 3M + sigma K(T_frozen) + sigma c_m tau^-1 B; cached for constant M.
    if (constant_K_ && linear_cache_) return *linear_cache_;
    const auto& p = problem_.params;
    linear_cache_ = SparseMatrix(3.0 * mass_ + cfg_.sigma * conduction(T_frozen) +
                                 (cfg_.sigma * p.c_m / p.tau) * boundary_mass_);
    return *linear_cache_;
  }

  SparseMatrix nonlinear_jacobian(const Vector& T) const {
    const auto& p = problem_.params;
    SparseMatrix J = (cfg_.sigma * 4.0 * std::numbers::pi * p.k0 / (p.tau * p.tau)) * a_->blackbody_jacobian(T, p.c_bs);
    if (p.alpha != 0.0)
      J += (cfg_.sigma * p.alpha * std::numbers::pi / p.tau) * a_->boundary_blackbody_jacobian(T, p.c_bs);
    return J;
  }

  Vector nonlinear_part(const Vector& T) const {
    const auto& p = problem_.params;
    Vector r = (cfg_.sigma * 4.0 * std::numbers::pi * p.k0 / (p.tau * p.tau)) * a_->blackbody_load(a_->u(), T, p.c_bs);
    if (p.alpha != 0.0)
      r += (cfg_.sigma * p.alpha * std::numbers::pi / p.tau) * a_->boundary_blackbody_load(T, p.c_bs);
    return r;
  }

  Vector corrector_rhs(const std::array<Vector, 2>& phi, const Vector& T_half, const Vector& T_n,
                       double t_next) const {
    const auto& p = problem_.params;
    Vector b = mass_ * (4.0 * T_half - T_n);
    b += (cfg_.sigma / p.tau * (p.c_m * p.T_m + p.alpha * std::numbers::pi * black_body(p.T_m, p.c_bs))) *
         boundary_one_;
    b += cfg_.sigma * coupling_load(phi);
    if (!problem_.sources.empty()) b += cfg_.sigma * source_loads(t_next).T;
    return b;
  }

  double mass_norm(const Vector& v) const { return std::sqrt(std::max(0.0, v.dot(mass_ * v))); }

  Vector solve_corrector(const Vector& T_half, const Vector& T_n, double t_next, CorrectorStats& stats) {
    const auto& cc = cfg_.corrector;
    Vector T = T_n;
    double prev_change = std::numeric_limits<double>::infinity();
    int growth = 0;
    for (int k = 1; k <= cc.outer_max_iter; ++k) {
      const auto phi = solve_phi(T, t_next);
      const Vector b = corrector_rhs(phi, T_half, T_n, t_next);
      const double tol = std::max(cc.newton.rel_tol * b.norm(), cc.newton.abs_tol);
      const SparseMatrix L = linear_part(T);
      Vector Tk = T;
      int it = 0;
      for (;; ++it) {
        const Vector F = L * Tk + nonlinear_part(Tk) - b;
        const double res = F.norm();
        if (k == 1) stats.newton_residuals.push_back(res);
        if (!std::isfinite(res)) throw NonlinearDivergence("non-finite corrector residual");
        if (res <= tol) break;
        if (it >= cc.newton.max_iter)
          throw MaxIterationsExceeded("Newton did not converge in " + std::to_string(cc.newton.max_iter) +
                                      " iterations (residual " + std::to_string(res) + ")");
        LinearSolveStats ls;
        const Vector delta = newton_solver_.solve(SparseMatrix(L + nonlinear_jacobian(Tk)), -F, &ls);
        stats.linear_residual = std::max(stats.linear_residual, ls.relative_residual);
        Tk += delta;
        if (delta.norm() <= 1e-15 * Tk.norm()) {
          ++it;
          break;
        }
      }
      stats.newton_iterations += it;
      stats.outer_iterations = k;
      const double change = mass_norm(Tk - T);
      const double size = mass_norm(Tk);
      T = std::move(Tk);
      if (change <= cc.outer_tol * size || change == 0.0) return T;
      growth = change > prev_change ? growth + 1 : 0;
      if (growth >= 3) throw NonlinearDivergence("outer coupling iteration diverging");
      prev_change = change;
    }
    throw MaxIterationsExceeded("outer coupling iteration did not converge in " +
                                std::to_string(cc.outer_max_iter) + " iterations");
  }

  void record(StabilityLog& log, const StepperState& s, const CorrectorStats& stats, double wall) const {
    StepRecord r;
    r.step = s.n;
    r.t = s.t;
    r.monitor = monitor_stability(s);
    r.newton_iterations = stats.newton_iterations;
    r.outer_iterations = stats.outer_iterations;
    r.linear_residual = stats.linear_residual;
    r.wall_seconds = wall;
    if (r.monitor > cfg_.stability_warn_threshold)
      std::cerr << "warning: stability monitor " << r.monitor << " above threshold at step " << s.n << "\n";
    log.entries.push_back(r);
  }

  std::shared_ptr<const Assembler> a_;
  Problem problem_;
  IntegratorConfig cfg_;
  int num_steps_ = 0;
  SparseMatrix mass_;
  SpdFactor mass_factor_;
  SparseMatrix boundary_mass_;
  Vector boundary_one_;
  SparseMatrix cross_mass_;
  std::unique_ptr<RadiativeSystem> radiative_;
  std::optional<SparseMatrix> constant_K_;
  mutable std::optional<SparseMatrix> linear_cache_;
  mutable std::array<SourceLoads, 2> source_cache_;
  mutable int next_cache_ = 0;
  SourceTerms::IndexedVolume bound_volume_;
  mutable double growth_scale_ = 0.0;
  SpdSequenceSolver newton_solver_;
};

}  // namespace sp3
