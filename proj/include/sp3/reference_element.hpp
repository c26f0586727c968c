#pragma once
// Lagrange basis of degree p on the reference tetrahedron
// (0,0,0), (1,0,0), (0,1,0), (0,0,1), with equispaced barycentric nodes.

#include <array>
#include <vector>

#include <Eigen/Dense>

#include "sp3/errors.hpp"
#include "sp3/mesh.hpp"
#include "sp3/quadrature.hpp"

namespace sp3 {

inline constexpr int kMaxElementDegree = 6;

inline int lagrange_dimension(int p) { return (p + 1) * (p + 2) * (p + 3) / 6; }

/// Vertices of the reference tetrahedron.
inline const std::array<Vec3, 4>& reference_vertices() {
  static const std::array<Vec3, 4> v{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
  return v;
}

/// Reference-tet point on local face f at triangle coordinates (u, v).
inline Vec3 face_to_reference(int f, const Eigen::Vector2d& uv) {
  const auto& R = reference_vertices();
  const auto& fv = kTetFaces[f];
  return R[fv[0]] + uv[0] * (R[fv[1]] - R[fv[0]]) + uv[1] * (R[fv[2]] - R[fv[0]]);
}

class ReferenceElement {
 public:
  using Values = Eigen::VectorXd;
  using Gradients = Eigen::Matrix<double, Eigen::Dynamic, 3>;

  explicit ReferenceElement(int p) : p_(p) {
    if (p < 1 || p > kMaxElementDegree)
      throw UnsupportedDegree("degree " + std::to_string(p) + " outside 1.." +
                              std::to_string(kMaxElementDegree));
    for (int a3 = 0; a3 <= p; ++a3)
      for (int a2 = 0; a2 <= p - a3; ++a2)
        for (int a1 = 0; a1 <= p - a3 - a2; ++a1)
          lattice_.push_back({p - a1 - a2 - a3, a1, a2, a3});
  }

  int degree() const { return p_; }
  int size() const { return static_cast<int>(lattice_.size()); }
  /// Barycentric multi-indices (alpha_0..alpha_3), |alpha| = p.
  const std::vector<std::array<int, 4>>& lattice() const { return lattice_; }

  Vec3 node(int i) const {
    const auto& a = lattice_[i];
    return Vec3(a[1], a[2], a[3]) / p_;
  }

  Values values(const Vec3& xi) const {
    const auto lam = barycentric(xi);
    Values out(size());
    for (int i = 0; i < size(); ++i) {
      double v = 1.0;
      for (int k = 0; k < 4; ++k) v *= factor(lattice_[i][k], lam[k]);
      out[i] = v;
    }
    return out;
  }

  Gradients gradients(const Vec3& xi) const {
    static const std::array<Vec3, 4> dlam{Vec3(-1, -1, -1), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
    const auto lam = barycentric(xi);
    Gradients out(size(), 3);
    for (int i = 0; i < size(); ++i) {
      std::array<double, 4> f, df;
      for (int k = 0; k < 4; ++k) {
        f[k] = factor(lattice_[i][k], lam[k]);
        df[k] = factor_derivative(lattice_[i][k], lam[k]);
      }
      Vec3 g = Vec3::Zero();
      for (int k = 0; k < 4; ++k) {
        double prod = df[k];
        for (int m = 0; m < 4; ++m)
          if (m != k) prod *= f[m];
        g += prod * dlam[k];
      }
      out.row(i) = g.transpose();
    }
    return out;
  }

 private:
  static std::array<double, 4> barycentric(const Vec3& xi) {
    return {1.0 - xi[0] - xi[1] - xi[2], xi[0], xi[1], xi[2]};
  }
  // prod_{j<m} (p*lambda - j) / (j + 1)
  double factor(int m, double lambda) const {
    double v = 1.0;
    for (int j = 0; j < m; ++j) v *= (p_ * lambda - j) / (j + 1);
    return v;
  }
  double factor_derivative(int m, double lambda) const {
    double sum = 0.0;
    for (int i = 0; i < m; ++i) {
      double v = static_cast<double>(p_) / (i + 1);
      for (int j = 0; j < m; ++j)
        if (j != i) v *= (p_ * lambda - j) / (j + 1);
      sum += v;
    }
    return sum;
  }

  int p_;
  std::vector<std::array<int, 4>> lattice_;
};

/// Basis values and reference gradients tabulated at the points of a rule.
struct Tabulation {
  Eigen::MatrixXd values;                // nq x nb
  std::array<Eigen::MatrixXd, 3> grads;  // each nq x nb, d/dxi_k
};

inline Tabulation tabulate(const ReferenceElement& el, const TetRule& rule) {
  const int nq = static_cast<int>(rule.size()), nb = el.size();
  Tabulation t;
  t.values.resize(nq, nb);
  for (auto& g : t.grads) g.resize(nq, nb);
  for (int q = 0; q < nq; ++q) {
    t.values.row(q) = el.values(rule.points[q]).transpose();
    const auto G = el.gradients(rule.points[q]);
    for (int k = 0; k < 3; ++k) t.grads[k].row(q) = G.col(k).transpose();
  }
  return t;
}

/// Basis values at the points of a triangle rule placed on each of the 4 faces.
inline std::array<Eigen::MatrixXd, 4> tabulate_faces(const ReferenceElement& el, const TriangleRule& rule) {
  std::array<Eigen::MatrixXd, 4> out;
  const int nq = static_cast<int>(rule.size());
  for (int f = 0; f < 4; ++f) {
    out[f].resize(nq, el.size());
    for (int q = 0; q < nq; ++q) out[f].row(q) = el.values(face_to_reference(f, rule.points[q])).transpose();
  }
  return out;
}

}  // namespace sp3
