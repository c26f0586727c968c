#pragma once
// Positive-weight quadrature on the reference tetrahedron and triangle,
// built as collapsed (Duffy) tensor products of Gauss-Jacobi rules.

#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "sp3/errors.hpp"

namespace sp3 {

template <int Dim>
struct QuadratureRule {
  using Point = Eigen::Matrix<double, Dim, 1>;
  std::vector<Point> points;
  std::vector<double> weights;
  int degree = 0;

  std::size_t size() const { return weights.size(); }
};

using TetRule = QuadratureRule<3>;
using TriangleRule = QuadratureRule<2>;

inline constexpr int kMaxQuadratureDegree = 40;

namespace detail {

struct GaussRule1d {
  std::vector<double> nodes;    // on [0, 1]
  std::vector<double> weights;  // for weight function (1 - s)^a
};

// Golub-Welsch for the Jacobi weight (1 - x)^a on [-1, 1], mapped to [0, 1].
inline GaussRule1d gauss_jacobi(int n, int a) {
  const double A = a, B = 0.0;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k < n; ++k) {
    const double s = 2.0 * k + A + B;
    J(k, k) = (k == 0) ? (B - A) / (A + B + 2.0) : (B * B - A * A) / (s * (s + 2.0));
    if (k + 1 < n) {
      const double m = k + 1.0;
      const double t = 2.0 * m + A + B;
      const double beta = 4.0 * m * (m + A) * (m + B) * (m + A + B) / (t * t * (t + 1.0) * (t - 1.0));
      J(k, k + 1) = J(k + 1, k) = std::sqrt(beta);
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(J);
  const double mu0 = std::pow(2.0, A + B + 1.0) * std::tgamma(A + 1.0) * std::tgamma(B + 1.0) /
                     std::tgamma(A + B + 2.0);
  GaussRule1d rule;
  for (int k = 0; k < n; ++k) {
    const double v0 = eig.eigenvectors()(0, k);
    rule.nodes.push_back(0.5 * (1.0 + eig.eigenvalues()(k)));
    rule.weights.push_back(mu0 * v0 * v0 / std::pow(2.0, A + 1.0));
  }
  return rule;
}

inline void check_degree(int degree) {
  if (degree < 0 || degree > kMaxQuadratureDegree)
    throw UnsupportedExactness("requested degree " + std::to_string(degree) + ", supported 0.." +
                               std::to_string(kMaxQuadratureDegree));
}

}  // namespace detail

inline TetRule make_tet_quadrature(int degree) {
  detail::check_degree(degree);
  const int n = degree / 2 + 1;  // 2n - 1 >= degree
  const auto r1 = detail::gauss_jacobi(n, 2);
  const auto r2 = detail::gauss_jacobi(n, 1);
  const auto r3 = detail::gauss_jacobi(n, 0);
  TetRule rule;
  rule.degree = degree;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const double s1 = r1.nodes[i], s2 = r2.nodes[j], s3 = r3.nodes[k];
        rule.points.emplace_back(s1, s2 * (1.0 - s1), s3 * (1.0 - s1) * (1.0 - s2));
        rule.weights.push_back(r1.weights[i] * r2.weights[j] * r3.weights[k]);
      }
  return rule;
}

inline TriangleRule make_triangle_quadrature(int degree) {
  detail::check_degree(degree);
  const int n = degree / 2 + 1;
  const auto r1 = detail::gauss_jacobi(n, 1);
  const auto r2 = detail::gauss_jacobi(n, 0);
  TriangleRule rule;
  rule.degree = degree;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double s1 = r1.nodes[i], s2 = r2.nodes[j];
      rule.points.emplace_back(s1, s2 * (1.0 - s1));
      rule.weights.push_back(r1.weights[i] * r2.weights[j]);
    }
  return rule;
}

enum class Simplex { tet, triangle };

template <Simplex S>
auto make_quadrature(int degree) {
  if constexpr (S == Simplex::tet)
    return make_tet_quadrature(degree);
  else
    return make_triangle_quadrature(degree);
}

}  // namespace sp3
