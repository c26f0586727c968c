#pragma once
// Sparse operators and nonlinear loads of the weak SP3 system.
//
// Element contributions are scattered into CSR storage through a sparsity
// pattern and per-element slot tables computed once per space pair, so every
// assembly is a single sequential pass in element order.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "sp3/errors.hpp"
#include "sp3/model.hpp"
#include "sp3/quadrature.hpp"
#include "sp3/reference_element.hpp"
#include "sp3/space.hpp"

namespace sp3 {

using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using TensorField = std::function<Mat3(const Vec3&)>;
/// Boundary data g(x, n) depending on position and outward normal.
using BoundaryFunction = std::function<double(const Vec3&, const Vec3&)>;

/// Default volume/face exactness for a temperature space of degree p and a
/// conductivity polynomial of degree dm: max(4p, 2p + dm p).
inline int default_quadrature_degree(int p, int conductivity_degree = 0) {
  return std::max(4 * p, 2 * p + conductivity_degree * p);
}

/// CSR structure of the coupling between two spaces plus, for every element,
/// the value index of each local (row, col) pair.
struct Pattern {
  SparseMatrix zero;
  std::vector<int> slots;
  int local_rows = 0, local_cols = 0;

  SparseMatrix make() const { return zero; }
  int slot(std::size_t t, int i, int j) const {
    return slots[(t * local_rows + i) * local_cols + j];
  }
};

inline Pattern make_pattern(const FemSpace& rows, const FemSpace& cols) {
  const std::size_t nt = rows.mesh().num_tets();
  const int nr = rows.dofs_per_cell(), nc = cols.dofs_per_cell();
  std::vector<std::vector<int>> adj(rows.num_dofs());
  for (std::size_t t = 0; t < nt; ++t) {
    const int* rd = rows.cell_dofs(t);
    const int* cd = cols.cell_dofs(t);
    for (int i = 0; i < nr; ++i)
      for (int j = 0; j < nc; ++j) adj[rd[i]].push_back(cd[j]);
  }
  std::size_t nnz = 0;
  for (auto& a : adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
    nnz += a.size();
  }
  Pattern pat;
  pat.local_rows = nr;
  pat.local_cols = nc;
  SparseMatrix& A = pat.zero;
  A.resize(rows.num_dofs(), cols.num_dofs());
  A.resizeNonZeros(static_cast<Eigen::Index>(nnz));
  auto* outer = A.outerIndexPtr();
  auto* inner = A.innerIndexPtr();
  outer[0] = 0;
  for (std::size_t r = 0; r < adj.size(); ++r) {
    std::copy(adj[r].begin(), adj[r].end(), inner + outer[r]);
    outer[r + 1] = outer[r] + static_cast<int>(adj[r].size());
  }
  std::fill(A.valuePtr(), A.valuePtr() + nnz, 0.0);

  pat.slots.resize(nt * nr * nc);
  for (std::size_t t = 0; t < nt; ++t) {
    const int* rd = rows.cell_dofs(t);
    const int* cd = cols.cell_dofs(t);
    for (int i = 0; i < nr; ++i) {
      const int* b = inner + outer[rd[i]];
      const int* e = inner + outer[rd[i] + 1];
      for (int j = 0; j < nc; ++j)
        pat.slots[(t * nr + i) * nc + j] = static_cast<int>(std::lower_bound(b, e, cd[j]) - inner);
    }
  }
  return pat;
}

/// Per-space tabulations against a fixed pair of volume and face rules.
struct SpaceTables {
  SpacePtr space;
  Tabulation tab;
  std::array<Eigen::MatrixXd, 4> face_values;  // nq_face x (face dofs)
  std::array<std::vector<int>, 4> face_dofs;    // local indices on each face
  Pattern pattern;
  Eigen::MatrixXd ref_mass;                          // sum_q w phi phi^T
  std::array<std::array<Eigen::MatrixXd, 3>, 3> ref_stiffness;  // sum_q w d_k phi d_l phi^T

  SpaceTables(SpacePtr s, const TetRule& rule, const TriangleRule& face_rule)
      : space(std::move(s)), tab(tabulate(space->element(), rule)), pattern(make_pattern(*space, *space)) {
    const auto& el = space->element();
    const auto all_faces = tabulate_faces(el, face_rule);
    for (int f = 0; f < 4; ++f) {
      for (int i = 0; i < el.size(); ++i)
        if (el.lattice()[i][f] == 0) face_dofs[f].push_back(i);
      face_values[f].resize(all_faces[f].rows(), static_cast<Eigen::Index>(face_dofs[f].size()));
      for (std::size_t k = 0; k < face_dofs[f].size(); ++k) face_values[f].col(k) = all_faces[f].col(face_dofs[f][k]);
    }
    const Eigen::Map<const Eigen::VectorXd> w(rule.weights.data(), static_cast<Eigen::Index>(rule.size()));
    ref_mass = tab.values.transpose() * w.asDiagonal() * tab.values;
    for (int k = 0; k < 3; ++k)
      for (int l = 0; l < 3; ++l) ref_stiffness[k][l] = tab.grads[k].transpose() * w.asDiagonal() * tab.grads[l];
  }

  int nb() const { return space->dofs_per_cell(); }

  Vector gather(std::size_t t, const Vector& coeffs) const {
    const int* d = space->cell_dofs(t);
    Vector out(nb());
    for (int i = 0; i < nb(); ++i) out[i] = coeffs[d[i]];
    return out;
  }
};

class Assembler {
 public:
  /// `temperature` is U_h (degree p); `moments` is the scalar space carrying
  /// each radiative moment (degree p - 1, or p in unified mode).
  Assembler(SpacePtr temperature, SpacePtr moments, int quad_degree)
      : rule_(make_tet_quadrature(quad_degree)),
        face_rule_(make_triangle_quadrature(quad_degree)),
        u_(std::make_shared<const SpaceTables>(temperature, rule_, face_rule_)),
        v_(moments->degree() == temperature->degree() && moments->mesh_ptr() == temperature->mesh_ptr()
               ? u_
               : std::make_shared<const SpaceTables>(moments, rule_, face_rule_)),
        cross_(make_pattern(*temperature, *moments)) {
    if (&temperature->mesh() != &moments->mesh()) throw InvalidParameter("spaces must share one mesh");
    const auto& mesh = temperature->mesh();
    const std::size_t nq = rule_.size();
    qpoints_.reserve(mesh.num_tets() * nq);
    qweights_.reserve(mesh.num_tets() * nq);
    for (std::size_t t = 0; t < mesh.num_tets(); ++t) {
      const auto& g = mesh.geometry(t);
      for (std::size_t q = 0; q < nq; ++q) {
        qpoints_.push_back(g.origin + g.jac * rule_.points[q]);
        qweights_.push_back(rule_.weights[q] * g.det);
      }
    }
    for (const auto& f : mesh.boundary_faces()) {
      const auto& g = mesh.geometry(f.tet);
      for (std::size_t q = 0; q < face_rule_.size(); ++q)
        fpoints_.push_back(g.origin + g.jac * face_to_reference(f.local_face, face_rule_.points[q]));
    }
  }

  Assembler(SpacePtr single, int quad_degree) : Assembler(single, single, quad_degree) {}

  const SpaceTables& u() const { return *u_; }
  const SpaceTables& v() const { return *v_; }
  const TetRule& rule() const { return rule_; }
  const TriangleRule& face_rule() const { return face_rule_; }
  const TetMesh& mesh() const { return u_->space->mesh(); }
  /// Physical quadrature points, element-major.
  const std::vector<Vec3>& quadrature_points() const { return qpoints_; }
  const std::vector<Vec3>& face_quadrature_points() const { return fpoints_; }
  /// Quadrature weights times |det J|, aligned with quadrature_points().
  const std::vector<double>& quadrature_weights() const { return qweights_; }

  // ---- linear operators -------------------------------------------------

  SparseMatrix mass(const SpaceTables& s) const {
    SparseMatrix A = s.pattern.make();
    for (std::size_t t = 0; t < mesh().num_tets(); ++t)
      scatter(A, s.pattern, t, mesh().geometry(t).det * s.ref_mass);
    return A;
  }

  /// (psi_j, w_i) with rows in the temperature space and columns in the moment space.
  SparseMatrix mass_cross() const {
    SparseMatrix A = cross_.make();
    const Eigen::MatrixXd ref = u_->tab.values.transpose() * wdiag() * v_->tab.values;
    for (std::size_t t = 0; t < mesh().num_tets(); ++t) scatter(A, cross_, t, mesh().geometry(t).det * ref);
    return A;
  }

  /// (A grad u_j, grad u_i) for a constant tensor A.
  SparseMatrix diffusion(const SpaceTables& s, const Mat3& tensor) const {
    SparseMatrix A = s.pattern.make();
    Eigen::MatrixXd Ke(s.nb(), s.nb());
    for (std::size_t t = 0; t < mesh().num_tets(); ++t) {
      const auto& g = mesh().geometry(t);
      const Mat3 C = g.det * g.jac_inv * tensor * g.jac_inv.transpose();
      Ke.setZero();
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l) Ke += C(k, l) * s.ref_stiffness[k][l];
      scatter(A, s.pattern, t, Ke);
    }
    return A;
  }

  /// Diffusion with a tensor evaluated at every quadrature point.
  SparseMatrix diffusion(const SpaceTables& s, const TensorField& tensor) const {
    return diffusion_pointwise(s, [&](std::size_t t, std::size_t q) {
      return tensor(qpoints_[t * rule_.size() + q]);
    });
  }

  /// a(., .) with M frozen at the temperature iterate `T` (coefficients on U_h).
  SparseMatrix conduction(const ConductivityModel& model, const Vector& T) const {
    if (model.is_constant()) return diffusion(*u_, tensor_M(0.0, model));
    const Vector Tq = at_quadrature(*u_, T);
    return diffusion_pointwise(*u_, [&](std::size_t t, std::size_t q) {
      return tensor_M(Tq[t * rule_.size() + q], model);
    });
  }

  /// B_ij = coeff * <u_j, u_i>.
  SparseMatrix boundary_mass(const SpaceTables& s, double coeff) const {
    SparseMatrix A = s.pattern.make();
    for (const auto& f : mesh().boundary_faces()) {
      const auto& F = s.face_values[f.local_face];
      const Eigen::MatrixXd Ke = (2.0 * f.area * coeff) * (F.transpose() * fwdiag() * F);
      scatter_face(A, s, f, Ke);
    }
    return A;
  }

  /// <1, u_i>.
  Vector boundary_integral(const SpaceTables& s) const {
    return boundary_source_load(s, [](const Vec3&, const Vec3&) { return 1.0; });
  }

  // ---- pointwise-coefficient operators ---------------------------------

  /// Interpolated values of a U_h or V_h field at all volume quadrature points.
  Vector at_quadrature(const SpaceTables& s, const Vector& coeffs) const {
    const std::size_t nq = rule_.size();
    Vector out(static_cast<Eigen::Index>(mesh().num_tets() * nq));
    for (std::size_t t = 0; t < mesh().num_tets(); ++t)
      out.segment(static_cast<Eigen::Index>(t * nq), static_cast<Eigen::Index>(nq)) = s.tab.values * s.gather(t, coeffs);
    return out;
  }

  /// Values of a U_h/V_h field at all face quadrature points, face-major.
  Vector at_face_quadrature(const SpaceTables& s, const Vector& coeffs) const {
    const std::size_t nq = face_rule_.size();
    const auto& faces = mesh().boundary_faces();
    Vector out(static_cast<Eigen::Index>(faces.size() * nq));
    for (std::size_t k = 0; k < faces.size(); ++k) {
      const auto& f = faces[k];
      const int* d = s.space->cell_dofs(f.tet);
      const auto& idx = s.face_dofs[f.local_face];
      Vector loc(static_cast<Eigen::Index>(idx.size()));
      for (std::size_t i = 0; i < idx.size(); ++i) loc[i] = coeffs[d[idx[i]]];
      out.segment(static_cast<Eigen::Index>(k * nq), static_cast<Eigen::Index>(nq)) = s.face_values[f.local_face] * loc;
    }
    return out;
  }

  /// sum_q w c(x_q) phi_i(x_q) for pointwise values c at volume quadrature points.
  Vector load_from_values(const SpaceTables& s, const Vector& cq) const {
    const std::size_t nq = rule_.size();
    Vector b = Vector::Zero(s.space->num_dofs());
    const Eigen::Map<const Eigen::VectorXd> w(rule_.weights.data(), static_cast<Eigen::Index>(nq));
    for (std::size_t t = 0; t < mesh().num_tets(); ++t) {
      const Vector be = s.tab.values.transpose() *
                        (w.array() * cq.segment(static_cast<Eigen::Index>(t * nq), static_cast<Eigen::Index>(nq)).array()).matrix() *
                        mesh().geometry(t).det;
      const int* d = s.space->cell_dofs(t);
      for (int i = 0; i < s.nb(); ++i) b[d[i]] += be[i];
    }
    return b;
  }

  /// Boundary analogue of load_from_values (values face-major).
  Vector boundary_load_from_values(const SpaceTables& s, const Vector& cq) const {
    const std::size_t nq = face_rule_.size();
    Vector b = Vector::Zero(s.space->num_dofs());
    const Eigen::Map<const Eigen::VectorXd> w(face_rule_.weights.data(), static_cast<Eigen::Index>(nq));
    const auto& faces = mesh().boundary_faces();
    for (std::size_t k = 0; k < faces.size(); ++k) {
      const auto& f = faces[k];
      const Vector be = s.face_values[f.local_face].transpose() *
                        (w.array() * cq.segment(static_cast<Eigen::Index>(k * nq), static_cast<Eigen::Index>(nq)).array()).matrix() *
                        (2.0 * f.area);
      const int* d = s.space->cell_dofs(f.tet);
      const auto& idx = s.face_dofs[f.local_face];
      for (std::size_t i = 0; i < idx.size(); ++i) b[d[idx[i]]] += be[static_cast<Eigen::Index>(i)];
    }
    return b;
  }

  /// sum_q w c(x_q) phi_i phi_j.
  SparseMatrix weighted_mass(const SpaceTables& s, const Vector& cq) const {
    const std::size_t nq = rule_.size();
    SparseMatrix A = s.pattern.make();
    const Eigen::Map<const Eigen::VectorXd> w(rule_.weights.data(), static_cast<Eigen::Index>(nq));
    Eigen::MatrixXd scaled(nq, s.nb());
    for (std::size_t t = 0; t < mesh().num_tets(); ++t) {
      const Eigen::VectorXd c =
          (w.array() * cq.segment(static_cast<Eigen::Index>(t * nq), static_cast<Eigen::Index>(nq)).array()).matrix() *
          mesh().geometry(t).det;
      scaled = c.asDiagonal() * s.tab.values;
      scatter(A, s.pattern, t, s.tab.values.transpose() * scaled);
    }
    return A;
  }

  SparseMatrix weighted_boundary_mass(const SpaceTables& s, const Vector& cq) const {
    const std::size_t nq = face_rule_.size();
    SparseMatrix A = s.pattern.make();
    const Eigen::Map<const Eigen::VectorXd> w(face_rule_.weights.data(), static_cast<Eigen::Index>(nq));
    const auto& faces = mesh().boundary_faces();
    for (std::size_t k = 0; k < faces.size(); ++k) {
      const auto& f = faces[k];
      const auto& F = s.face_values[f.local_face];
      const Eigen::VectorXd c =
          (w.array() * cq.segment(static_cast<Eigen::Index>(k * nq), static_cast<Eigen::Index>(nq)).array()).matrix() *
          (2.0 * f.area);
      scatter_face(A, s, f, F.transpose() * c.asDiagonal() * F);
    }
    return A;
  }

  // ---- black-body terms -------------------------------------------------

  /// (f(T_h), psi_i) for psi in `target`; T lives on the temperature space.
  Vector blackbody_load(const SpaceTables& target, const Vector& T, double c_bs) const {
    Vector fq = at_quadrature(*u_, T);
    for (auto& x : fq) x = black_body(x, c_bs);
    return load_from_values(target, fq);
  }

  /// (f'(T_h) u_j, u_i) on the temperature space.
  SparseMatrix blackbody_jacobian(const Vector& T, double c_bs) const {
    Vector dq = at_quadrature(*u_, T);
    for (auto& x : dq) x = black_body_derivative(x, c_bs);
    return weighted_mass(*u_, dq);
  }

  Vector boundary_blackbody_load(const Vector& T, double c_bs) const {
    Vector fq = at_face_quadrature(*u_, T);
    for (auto& x : fq) x = black_body(x, c_bs);
    return boundary_load_from_values(*u_, fq);
  }

  SparseMatrix boundary_blackbody_jacobian(const Vector& T, double c_bs) const {
    Vector dq = at_face_quadrature(*u_, T);
    for (auto& x : dq) x = black_body_derivative(x, c_bs);
    return weighted_boundary_mass(*u_, dq);
  }

  // ---- sources and norms --------------------------------------------------

  Vector source_load(const SpaceTables& s, const ScalarFunction& source) const {
    Vector vq(static_cast<Eigen::Index>(qpoints_.size()));
    for (std::size_t k = 0; k < qpoints_.size(); ++k) vq[static_cast<Eigen::Index>(k)] = source(qpoints_[k]);
    return load_from_values(s, vq);
  }

  Vector boundary_source_load(const SpaceTables& s, const BoundaryFunction& g) const {
    const std::size_t nq = face_rule_.size();
    const auto& faces = mesh().boundary_faces();
    Vector vq(static_cast<Eigen::Index>(fpoints_.size()));
    for (std::size_t k = 0; k < faces.size(); ++k)
      for (std::size_t q = 0; q < nq; ++q)
        vq[static_cast<Eigen::Index>(k * nq + q)] = g(fpoints_[k * nq + q], faces[k].normal);
    return boundary_load_from_values(s, vq);
  }

  /// ||u_h - u||_0 (u may be null for ||u_h||_0).
  double l2_error(const SpaceTables& s, const Vector& coeffs, const ScalarFunction& exact) const {
    const Vector vq = at_quadrature(s, coeffs);
    double sum = 0.0;
    for (std::size_t k = 0; k < qpoints_.size(); ++k) {
      const double e = vq[static_cast<Eigen::Index>(k)] - (exact ? exact(qpoints_[k]) : 0.0);
      sum += qweights_[k] * e * e;
    }
    return std::sqrt(sum);
  }

  double l2_norm(const SpaceTables& s, const Vector& coeffs) const { return l2_error(s, coeffs, nullptr); }

  /// sqrt(<c, c>) for pointwise boundary values c (face-major).
  double boundary_l2_of_values(const Vector& cq) const {
    const std::size_t nq = face_rule_.size();
    const auto& faces = mesh().boundary_faces();
    double sum = 0.0;
    for (std::size_t k = 0; k < faces.size(); ++k)
      for (std::size_t q = 0; q < nq; ++q) {
        const double c = cq[static_cast<Eigen::Index>(k * nq + q)];
        sum += 2.0 * faces[k].area * face_rule_.weights[q] * c * c;
      }
    return std::sqrt(sum);
  }

 private:
  Eigen::DiagonalMatrix<double, Eigen::Dynamic> wdiag() const {
    return Eigen::Map<const Eigen::VectorXd>(rule_.weights.data(), static_cast<Eigen::Index>(rule_.size())).asDiagonal();
  }
  Eigen::DiagonalMatrix<double, Eigen::Dynamic> fwdiag() const {
    return Eigen::Map<const Eigen::VectorXd>(face_rule_.weights.data(), static_cast<Eigen::Index>(face_rule_.size()))
        .asDiagonal();
  }

  template <class TensorAt>
  SparseMatrix diffusion_pointwise(const SpaceTables& s, TensorAt&& tensor_at) const {
    SparseMatrix A = s.pattern.make();
    const std::size_t nq = rule_.size();
    const int nb = s.nb();
    Eigen::Matrix<double, 3, Eigen::Dynamic> G(3, nb), AG(3, nb);
    Eigen::MatrixXd Ke(nb, nb);
    for (std::size_t t = 0; t < mesh().num_tets(); ++t) {
      const auto& g = mesh().geometry(t);
      Ke.setZero();
      for (std::size_t q = 0; q < nq; ++q) {
        const Mat3 Aq = tensor_at(t, q);
        if (Aq.diagonal().minCoeff() <= 0.0) throw NonPositiveConductivity("tensor not positive at quadrature point");
        for (int k = 0; k < 3; ++k) G.row(k) = s.tab.grads[k].row(static_cast<Eigen::Index>(q));
        G = g.jac_inv.transpose() * G;
        AG.noalias() = Aq * G;
        Ke.noalias() += (rule_.weights[q] * g.det) * G.transpose() * AG;
      }
      scatter(A, s.pattern, t, Ke);
    }
    return A;
  }

  static void scatter(SparseMatrix& A, const Pattern& pat, std::size_t t, const Eigen::MatrixXd& Ke) {
    double* vals = A.valuePtr();
    for (int i = 0; i < pat.local_rows; ++i)
      for (int j = 0; j < pat.local_cols; ++j) vals[pat.slot(t, i, j)] += Ke(i, j);
  }

  static void scatter_face(SparseMatrix& A, const SpaceTables& s, const BoundaryFace& f, const Eigen::MatrixXd& Ke) {
    double* vals = A.valuePtr();
    const auto& idx = s.face_dofs[f.local_face];
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < idx.size(); ++j)
        vals[s.pattern.slot(f.tet, idx[i], idx[j])] += Ke(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

  TetRule rule_;
  TriangleRule face_rule_;
  std::shared_ptr<const SpaceTables> u_;
  std::shared_ptr<const SpaceTables> v_;
  Pattern cross_;
  std::vector<Vec3> qpoints_;
  std::vector<double> qweights_;
  std::vector<Vec3> fpoints_;
};

// ---- single-space convenience entry points ----------------------------------

inline SparseMatrix assemble_mass(const SpacePtr& space, int quad_degree = -1) {
  const Assembler a(space, quad_degree < 0 ? default_quadrature_degree(space->degree()) : quad_degree);
  return a.mass(a.u());
}

inline SparseMatrix assemble_diffusion(const SpacePtr& space, const TensorField& tensor, int quad_degree = -1) {
  const Assembler a(space, quad_degree < 0 ? default_quadrature_degree(space->degree()) : quad_degree);
  return a.diffusion(a.u(), tensor);
}

inline SparseMatrix assemble_boundary_mass(const SpacePtr& space, double coeff, int quad_degree = -1) {
  const Assembler a(space, quad_degree < 0 ? default_quadrature_degree(space->degree()) : quad_degree);
  return a.boundary_mass(a.u(), coeff);
}

inline Vector assemble_blackbody_load(const FemField& T, double c_bs = 5.67e-8, int quad_degree = -1) {
  const Assembler a(T.space, quad_degree < 0 ? default_quadrature_degree(T.space->degree()) : quad_degree);
  return a.blackbody_load(a.u(), T.coeffs, c_bs);
}

inline SparseMatrix assemble_blackbody_jacobian(const FemField& T, double c_bs = 5.67e-8, int quad_degree = -1) {
  const Assembler a(T.space, quad_degree < 0 ? default_quadrature_degree(T.space->degree()) : quad_degree);
  return a.blackbody_jacobian(T.coeffs, c_bs);
}

inline Vector assemble_mms_source(const SpacePtr& space, const std::function<double(const Vec3&, double)>& source,
                                  double t, int quad_degree = -1) {
  const Assembler a(space, quad_degree < 0 ? default_quadrature_degree(space->degree()) : quad_degree);
  return a.source_load(a.u(), [&](const Vec3& x) { return source(x, t); });
}

}  // namespace sp3
