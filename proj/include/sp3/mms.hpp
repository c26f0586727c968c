#pragma once
// Manufactured solutions and named problem presets.

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "sp3/integrator.hpp"
#include "sp3/model.hpp"

namespace sp3 {

/// Value, time derivative, gradient and Hessian of a scalar field at a point.
struct Jet {
  double value = 0.0;
  double dt = 0.0;
  Vec3 grad = Vec3::Zero();
  Mat3 hess = Mat3::Zero();
};

struct ExactSolution {
  Jet T;
  std::array<Jet, 2> phi;
};

/// g(u) with u = T + shift, for g = tanh.
inline Jet tanh_of(const Jet& T, double shift) {
  const double th = std::tanh(T.value + shift);
  const double s2 = 1.0 - th * th;
  Jet j;
  j.value = th;
  j.dt = s2 * T.dt;
  j.grad = s2 * T.grad;
  j.hess = s2 * T.hess - 2.0 * s2 * th * T.grad * T.grad.transpose();
  return j;
}

/// Symmetric 3x3 Hessian from its six entries (xx, yy, zz, xy, xz, yz).
inline Mat3 symmetric_from(const double* h) {
  Mat3 H;
  H << h[0], h[3], h[4], h[3], h[1], h[5], h[4], h[5], h[2];
  return H;
}

/// Exact fields written as combine(d(x), t): the spatial data d is computed
/// once per point and cached when the case is bound to a fixed point set.
class ManufacturedCase {
 public:
  using SpatialFn = std::function<void(const Vec3&, double*)>;
  using CombineFn = std::function<ExactSolution(const double*, double)>;

  ManufacturedCase(std::string name, PhysicalParams params, ConductivityModel conductivity, Box box, double t_final,
                   int spatial_size, SpatialFn spatial, CombineFn combine)
      : name_(std::move(name)), params_(params), conductivity_(std::move(conductivity)), box_(box),
        t_final_(t_final), spatial_size_(spatial_size), spatial_(std::move(spatial)), combine_(std::move(combine)) {
    params_.validate();
    L_ = tensor_L(params_, conductivity_.theta);
    if (conductivity_.is_constant()) constant_M_ = tensor_M(0.0, conductivity_);
  }

  const std::string& name() const { return name_; }
  const PhysicalParams& params() const { return params_; }
  const ConductivityModel& conductivity() const { return conductivity_; }
  const Box& box() const { return box_; }
  double t_final() const { return t_final_; }

  /// Same exact fields under different physical parameters (sources follow).
  ManufacturedCase with_params(const PhysicalParams& p) const {
    ManufacturedCase c = *this;
    c.params_ = p;
    c.params_.validate();
    c.L_ = tensor_L(p, conductivity_.theta);
    return c;
  }

  ExactSolution exact(const Vec3& x, double t) const {
    std::vector<double> d(spatial_size_);
    spatial_(x, d.data());
    return combine_(d.data(), t);
  }
  double T(const Vec3& x, double t) const { return exact(x, t).T.value; }
  double phi(int j, const Vec3& x, double t) const { return exact(x, t).phi[j].value; }

  Mat3 M(double T) const { return constant_M_ ? *constant_M_ : tensor_M(T, conductivity_); }

  /// div(M(T) grad T) = tr(M H) + grad T . M'(T) grad T.
  double flux_divergence(const Jet& T) const {
    double v = (M(T.value) * T.hess).trace();
    if (!constant_M_) v += T.grad.dot(tensor_M_derivative(T.value, conductivity_) * T.grad);
    return v;
  }

  /// (S_T, S_phi1, S_phi2) balancing the strong equations.
  std::array<double, 3> volume_sources(const ExactSolution& e) const {
    const auto& p = params_;
    const auto& c = p.closure;
    const double emission = 4.0 * std::numbers::pi * p.k0 * black_body(e.T.value, p.c_bs);
    std::array<double, 3> s;
    s[0] = e.T.dt - flux_divergence(e.T) + emission / (p.tau * p.tau) -
           p.coupling_factor() * (c.gamma2 * e.phi[0].value - c.gamma1 * e.phi[1].value);
    for (int j = 0; j < 2; ++j) {
      const double mu2 = c.mu(j) * c.mu(j);
      s[j + 1] = -p.tau * p.tau * mu2 * (L_ * e.phi[j].hess).trace() + p.k0 * e.phi[j].value - emission;
    }
    return s;
  }
  std::array<double, 3> volume_sources(const Vec3& x, double t) const { return volume_sources(exact(x, t)); }

  /// (g_T, g_phi1, g_phi2) added to the Robin conditions; n is the outward normal.
  std::array<double, 3> boundary_data(const ExactSolution& e, const Vec3& n) const {
    const auto& p = params_;
    const auto& c = p.closure;
    const double fm = black_body(p.T_m, p.c_bs);
    const double fT = black_body(e.T.value, p.c_bs);
    std::array<double, 3> g;
    g[0] = p.tau * n.dot(M(e.T.value) * e.T.grad) - p.c_m * (p.T_m - e.T.value) -
           p.alpha * std::numbers::pi * (fm - fT);
    for (int j = 0; j < 2; ++j)
      g[j + 1] = (c.alpha(j) * e.phi[j].value + c.beta_other(j) * e.phi[1 - j].value - c.eta(j) * fm) / 3.0 +
                 p.tau * n.dot(L_ * e.phi[j].grad);
    return g;
  }
  std::array<double, 3> boundary_data(const Vec3& x, const Vec3& n, double t) const {
    return boundary_data(exact(x, t), n);
  }

  /// Exact fields at a fixed list of points, spatial data cached.
  class Bound {
   public:
    Bound(std::shared_ptr<const ManufacturedCase> c, const std::vector<Vec3>& pts)
        : case_(std::move(c)), k_(case_->spatial_size_), data_(pts.size() * k_) {
      for (std::size_t i = 0; i < pts.size(); ++i) case_->spatial_(pts[i], data_.data() + i * k_);
    }
    std::size_t size() const { return data_.size() / k_; }
    ExactSolution exact(std::size_t i, double t) const { return case_->combine_(data_.data() + i * k_, t); }
    const ManufacturedCase& manufactured() const { return *case_; }

   private:
    std::shared_ptr<const ManufacturedCase> case_;
    std::size_t k_;
    std::vector<double> data_;
  };

  /// Problem description for the integrator, sources included.
  Problem problem() const {
    auto self = std::make_shared<const ManufacturedCase>(*this);
    Problem pr;
    pr.name = name_;
    pr.params = params_;
    pr.conductivity = conductivity_;
    pr.box = box_;
    pr.t_final = t_final_;
    pr.T0 = [self](const Vec3& x) { return self->T(x, 0.0); };
    pr.T0_flux_divergence = [self](const Vec3& x) { return self->flux_divergence(self->exact(x, 0.0).T); };
    pr.sources.volume = [self](const Vec3& x, double t) { return self->volume_sources(x, t); };
    pr.sources.boundary = [self](const Vec3& x, const Vec3& n, double t) { return self->boundary_data(x, n, t); };
    pr.sources.bind_volume = [self](const std::vector<Vec3>& pts) -> SourceTerms::IndexedVolume {
      auto b = std::make_shared<const Bound>(self, pts);
      return [b](std::size_t i, double t) { return b->manufactured().volume_sources(b->exact(i, t)); };
    };
    return pr;
  }

 private:
  std::string name_;
  PhysicalParams params_;
  ConductivityModel conductivity_;
  Box box_;
  double t_final_;
  int spatial_size_;
  SpatialFn spatial_;
  CombineFn combine_;
  Mat3 L_;
  std::optional<Mat3> constant_M_;
};

/// T = sin(2 pi x) sin(2 pi y) sin(2 pi z) e^t, phi = (tanh(T + 1), tanh(T - 1)).
inline ManufacturedCase example1() {
  PhysicalParams p;
  p.k0 = 1.0;
  p.tau = 1.0;
  p.alpha = 0.0;
  p.c_m = 1.0;
  p.T_m = 0.0;
  p.sigma_scatter = {0.0, 0.0, 0.0};
  // d = (s, grad s, Hessian of s as xx yy zz xy xz yz)
  auto spatial = [](const Vec3& x, double* d) {
    constexpr double k = 2.0 * std::numbers::pi;
    const double sx = std::sin(k * x[0]), sy = std::sin(k * x[1]), sz = std::sin(k * x[2]);
    const double cx = std::cos(k * x[0]), cy = std::cos(k * x[1]), cz = std::cos(k * x[2]);
    d[0] = sx * sy * sz;
    d[1] = k * cx * sy * sz;
    d[2] = k * sx * cy * sz;
    d[3] = k * sx * sy * cz;
    d[4] = d[5] = d[6] = -k * k * d[0];
    d[7] = k * k * cx * cy * sz;
    d[8] = k * k * cx * sy * cz;
    d[9] = k * k * sx * cy * cz;
  };
  auto combine = [](const double* d, double t) {
    const double et = std::exp(t);
    ExactSolution e;
    e.T.value = d[0] * et;
    e.T.dt = e.T.value;
    e.T.grad = et * Vec3(d[1], d[2], d[3]);
    e.T.hess = et * symmetric_from(d + 4);
    e.phi[0] = tanh_of(e.T, 1.0);
    e.phi[1] = tanh_of(e.T, -1.0);
    return e;
  };
  return ManufacturedCase("example1", p, ConductivityModel::identity(), Box{}, 0.1, 10, spatial, combine);
}

/// Quadratic T and linear moments, all scaled by e^t. The pair lies in
/// P2 x P1, so with p = 2 only the time discretization contributes error.
inline ManufacturedCase polynomial_case() {
  PhysicalParams p;
  p.c_m = 1.0;
  p.T_m = 0.0;
  auto spatial = [](const Vec3& x, double* d) {
    d[0] = 1.0 + 0.5 * x[0] - 0.3 * x[1] + 0.25 * x[2] + 0.2 * x[0] * x[0] - 0.1 * x[1] * x[2];
    d[1] = 0.5 + 0.4 * x[0];
    d[2] = -0.3 - 0.1 * x[2];
    d[3] = 0.25 - 0.1 * x[1];
    d[4] = 0.5 + 0.2 * x[0] - 0.1 * x[2];
    d[5] = 0.3 + 0.1 * x[1];
  };
  auto combine = [](const double* d, double t) {
    const double et = std::exp(t);
    ExactSolution e;
    e.T.value = d[0] * et;
    e.T.dt = e.T.value;
    e.T.grad = et * Vec3(d[1], d[2], d[3]);
    e.T.hess(0, 0) = 0.4 * et;
    e.T.hess(1, 2) = e.T.hess(2, 1) = -0.1 * et;
    e.phi[0].value = e.phi[0].dt = d[4] * et;
    e.phi[0].grad = et * Vec3(0.2, 0.0, -0.1);
    e.phi[1].value = e.phi[1].dt = d[5] * et;
    e.phi[1].grad = et * Vec3(0.0, 0.1, 0.0);
    return e;
  };
  return ManufacturedCase("polynomial", p, ConductivityModel::identity(), Box{}, 0.1, 6, spatial, combine);
}

/// Cooling of a hot unit cube: T0 = 1500 K, ambient 300 K.
inline Problem example2() {
  Problem pr;
  pr.name = "example2";
  pr.params.k0 = 1.0;
  pr.params.tau = 1.0;
  pr.params.alpha = 0.0;
  pr.params.c_m = 1.0;
  pr.params.T_m = 300.0;
  pr.t_final = 1.0;
  pr.T0 = [](const Vec3&) { return 1500.0; };
  pr.T0_flux_divergence = [](const Vec3&) { return 0.0; };
  return pr;
}

/// Slab with nonlinear anisotropic conductivity rotated by pi/4 in (y, z).
inline Problem example3() {
  Problem pr;
  pr.name = "example3";
  pr.params.k0 = 1.0;
  pr.params.tau = 1.0;
  pr.params.alpha = 1e-2;
  pr.params.c_m = 1.0;
  pr.params.T_m = 300.0;
  pr.params.sigma_scatter = {0.0, 0.1, 0.0};
  pr.conductivity.theta = std::numbers::pi / 4.0;
  const Polynomial outer{{0.1, 2e-2, 5e-4}};
  pr.conductivity.m = {outer, Polynomial{{0.1, 2e-2}}, outer};
  pr.box = Box{Vec3(0, 0, -1), Vec3(10, 10, 1)};
  pr.t_final = 1.0;
  pr.T0 = [](const Vec3&) { return 1000.0; };
  pr.T0_flux_divergence = [](const Vec3&) { return 0.0; };
  return pr;
}

/// Everything at the ambient temperature; the exact solution is stationary.
inline Problem equilibrium_problem(double T_m = 300.0) {
  Problem pr;
  pr.name = "equilibrium";
  pr.params.T_m = T_m;
  pr.t_final = 0.1;
  pr.T0 = [T_m](const Vec3&) { return T_m; };
  pr.T0_flux_divergence = [](const Vec3&) { return 0.0; };
  return pr;
}

/// example1 | example2 | example3 | equilibrium | polynomial
inline Problem make_preset(const std::string& name) {
  if (name == "example1") return example1().problem();
  if (name == "polynomial") return polynomial_case().problem();
  if (name == "example2") return example2();
  if (name == "example3") return example3();
  if (name == "equilibrium") return equilibrium_problem();
  throw InvalidParameter("unknown preset '" + name + "'");
}

inline std::shared_ptr<const ManufacturedCase> manufactured_preset(const std::string& name) {
  if (name == "example1") return std::make_shared<const ManufacturedCase>(example1());
  if (name == "polynomial") return std::make_shared<const ManufacturedCase>(polynomial_case());
  return nullptr;
}

}  // namespace sp3
