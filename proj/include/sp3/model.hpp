#pragma once
// Physical coefficients of the SP3 radiation-conduction model.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "sp3/errors.hpp"

namespace sp3 {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Closure constants of the SP3 boundary and coupling relations.
struct Sp3Closure {
  double alpha1 = 2.3984;
  double alpha2 = 1.1432;
  double beta1 = 4.71e-2;
  double beta2 = 1.612e-1;
  double gamma1 = -1.6221e4;
  double gamma2 = 3.0617;
  double mu1 = 5.888e-3;
  double mu2 = 1.4915;
  double eta1 = 3.21656e1;
  double eta2 = 1.49583e1;

  double alpha(int j) const { return j == 0 ? alpha1 : alpha2; }
  // Boundary coupling coefficient of the *other* moment in equation j.
  double beta_other(int j) const { return j == 0 ? beta2 : beta1; }
  double mu(int j) const { return j == 0 ? mu1 : mu2; }
  double eta(int j) const { return j == 0 ? eta1 : eta2; }
};

struct PhysicalParams {
  double k0 = 1.0;      // absorption coefficient
  double tau = 1.0;     // diffusion scale
  double alpha = 0.0;   // hemispheric surface emissivity
  double c_m = 1.0;     // convective heat transfer coefficient
  double T_m = 300.0;   // ambient temperature [K]
  std::array<double, 3> sigma_scatter{0.0, 0.0, 0.0};
  double c_bs = 5.67e-8;  // Stefan-Boltzmann constant
  Sp3Closure closure{};

  /// Throws InvalidParameter when a structural invariant is violated.
  void validate() const {
    auto fail = [](const std::string& msg) { throw InvalidParameter(msg); };
    if (!(tau > 0.0)) fail("tau must be positive");
    if (!(k0 > 0.0)) fail("k0 must be positive");
    if (!(c_m >= 0.0)) fail("c_m must be non-negative");
    if (!(alpha >= 0.0)) fail("alpha must be non-negative");
    for (double s : sigma_scatter)
      if (!(s >= 0.0)) fail("scattering coefficients must be non-negative");
    if (closure.gamma2 == closure.gamma1) fail("gamma2 must differ from gamma1");
  }

  /// Factor k0 tau^-2 (gamma2 - gamma1)^-1 in front of the moment coupling.
  double coupling_factor() const {
    return k0 / (tau * tau) / (closure.gamma2 - closure.gamma1);
  }
};

/// Polynomial in T with ascending coefficients c0 + c1 T + c2 T^2 + ...
struct Polynomial {
  std::vector<double> coeffs{1.0};

  double operator()(double T) const {
    double v = 0.0;
    for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) v = v * T + *it;
    return v;
  }
  double derivative(double T) const {
    double v = 0.0;
    for (std::size_t k = coeffs.size(); k-- > 1;)
      v = v * T + static_cast<double>(k) * coeffs[k];
    return v;
  }
  int degree() const {
    int d = static_cast<int>(coeffs.size()) - 1;
    while (d > 0 && coeffs[static_cast<std::size_t>(d)] == 0.0) --d;
    return std::max(d, 0);
  }
};

/// Rotation about the x axis acting in the (y, z) plane.
inline Mat3 rotation(double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  Mat3 P;
  P << 1, 0, 0, 0, c, -s, 0, s, c;
  return P;
}

inline Mat3 rotate_diagonal(double theta, const Vec3& diag) {
  const Mat3 P = rotation(theta);
  Mat3 R = P * diag.asDiagonal() * P.transpose();
  // exact symmetry, independent of round-off order
  return 0.5 * (R + R.transpose());
}

/// Temperature dependent anisotropic conductivity P diag(m11, m22, m33) P^T.
struct ConductivityModel {
  double theta = 0.0;
  std::array<Polynomial, 3> m{};

  static ConductivityModel identity() { return {}; }

  bool is_constant() const { return max_degree() == 0; }
  int max_degree() const {
    int d = 0;
    for (const auto& mi : m) d = std::max(d, mi.degree());
    return d;
  }
  Vec3 diagonal(double T) const { return {m[0](T), m[1](T), m[2](T)}; }
  Vec3 diagonal_derivative(double T) const {
    return {m[0].derivative(T), m[1].derivative(T), m[2].derivative(T)};
  }
};

/// Black-body spectral intensity c_bs T^4.
inline double black_body(double T, double c_bs = 5.67e-8) {
  const double T2 = T * T;
  return c_bs * T2 * T2;
}
inline double black_body_derivative(double T, double c_bs = 5.67e-8) {
  return 4.0 * c_bs * T * T * T;
}

inline Mat3 tensor_M(double T, const ConductivityModel& model) {
  const Vec3 d = model.diagonal(T);
  if (d.minCoeff() <= 0.0) {
    std::ostringstream os;
    os << "m_jj(" << T << ") = (" << d.transpose() << ")";
    throw NonPositiveConductivity(os.str());
  }
  return rotate_diagonal(model.theta, d);
}

/// dM/dT; not used by the solver (Picard in M) but exposed for diagnostics.
inline Mat3 tensor_M_derivative(double T, const ConductivityModel& model) {
  return rotate_diagonal(model.theta, model.diagonal_derivative(T));
}

inline Mat3 tensor_L(const PhysicalParams& params, double theta) {
  Vec3 d;
  for (int i = 0; i < 3; ++i) {
    const double opacity = params.k0 + params.sigma_scatter[static_cast<std::size_t>(i)];
    if (!(opacity > 0.0))
      throw DegenerateOpacity("k0 + sigma_" + std::to_string(i + 1) + " <= 0");
    d[i] = 1.0 / (3.0 * opacity);
  }
  return rotate_diagonal(theta, d);
}

struct Admissibility {
  bool pass = false;
  double threshold = 0.0;
};

/// k0 must exceed (tau/6) max{beta1^2 mu2^2 / alpha2, beta2^2 mu1^2 / alpha1}.
inline Admissibility check_admissibility(const PhysicalParams& p) {
  const auto& c = p.closure;
  const double a = c.beta1 * c.beta1 * c.mu2 * c.mu2 / c.alpha2;
  const double b = c.beta2 * c.beta2 * c.mu1 * c.mu1 / c.alpha1;
  const double threshold = p.tau / 6.0 * std::max(a, b);
  return {p.k0 > threshold, threshold};
}

}  // namespace sp3
