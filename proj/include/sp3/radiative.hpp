#pragma once
// L2 projection and the coupled elliptic system for the radiative moments.

#include <array>
#include <memory>
#include <string>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <unsupported/Eigen/SparseExtra>

#include "sp3/assembly.hpp"
#include "sp3/model.hpp"
#include "sp3/solver.hpp"

namespace sp3 {

/// Q_h u on the temperature space of `a` (mass factorization supplied by the caller).
inline FemField l2_project(const Assembler& a, const SpdFactor& mass, const ScalarFunction& u, Unit unit = Unit::none) {
  return FemField(a.u().space, mass.solve(a.source_load(a.u(), u)), unit);
}

inline FemField l2_project(const SpacePtr& space, const ScalarFunction& u, Unit unit = Unit::none,
                           int quad_degree = -1) {
  const Assembler a(space, quad_degree < 0 ? default_quadrature_degree(space->degree()) : quad_degree);
  const SpdFactor mass(a.mass(a.u()));
  return l2_project(a, mass, u, unit);
}

/// Writes a matrix in MatrixMarket coordinate format.
inline void dump_matrix_market(const SparseMatrix& A, const std::string& path) {
  if (!Eigen::saveMarket(A, path)) throw Error("cannot write " + path);
}

/// Block operator for (phi_1, phi_2), j = 1, 2:
///   tau^2 mu_j^2 (L grad phi_j, grad psi) + k0 (phi_j, psi)
///     + (tau/3) mu_j^2 <alpha_j phi_j + beta_{3-j} phi_{3-j}, psi>
/// The matrix is constant in time and factorized once.
class RadiativeSystem {
 public:
  RadiativeSystem(std::shared_ptr<const Assembler> assembler, const PhysicalParams& params, double theta = 0.0)
      : a_(std::move(assembler)), params_(params) {
    params_.validate();
    const auto adm = check_admissibility(params_);
    if (!adm.pass)
      throw InvalidParameter("k0 = " + std::to_string(params_.k0) + " below admissibility threshold " +
                             std::to_string(adm.threshold));
    const auto& V = a_->v();
    const auto& c = params_.closure;
    const double tau = params_.tau;
    const SparseMatrix KL = a_->diffusion(V, tensor_L(params_, theta));
    const SparseMatrix MV = a_->mass(V);
    const SparseMatrix BV = a_->boundary_mass(V, 1.0);
    boundary_one_ = a_->boundary_integral(V);
    for (int j = 0; j < 2; ++j) {
      const double mu2 = c.mu(j) * c.mu(j);
      blocks_[j][j] = tau * tau * mu2 * KL + params_.k0 * MV + (tau / 3.0 * mu2 * c.alpha(j)) * BV;
      blocks_[j][1 - j] = (tau / 3.0 * mu2 * c.beta_other(j)) * BV;
    }

    // Scaling the second block row by s makes the operator symmetric; it is
    // then positive definite whenever alpha1 alpha2 > beta1 beta2.
    scale_ = (c.mu1 * c.mu1 * c.beta2) / (c.mu2 * c.mu2 * c.beta1);
    const Eigen::Index n = V.space->num_dofs();
    std::vector<Eigen::Triplet<double>> trip;
    for (int bi = 0; bi < 2; ++bi)
      for (int bj = 0; bj < 2; ++bj) {
        const double s = bi == 1 ? scale_ : 1.0;
        const SparseMatrix& B = blocks_[bi][bj];
        for (Eigen::Index r = 0; r < B.outerSize(); ++r)
          for (SparseMatrix::InnerIterator it(B, r); it; ++it)
            trip.emplace_back(bi * n + it.row(), bj * n + it.col(), s * it.value());
      }
    scaled_.resize(2 * n, 2 * n);
    scaled_.setFromTriplets(trip.begin(), trip.end());
    ldlt_.compute(scaled_);
    if (ldlt_.info() != Eigen::Success || (ldlt_.vectorD().array() <= 0.0).any()) {
      lu_ = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<double>>>(scaled_);
      if (lu_->info() != Eigen::Success) throw SingularSystem("radiative block system is singular");
    }
  }

  const SparseMatrix& block(int i, int j) const { return blocks_[i][j]; }
  int size() const { return 2 * a_->v().space->num_dofs(); }
  const Assembler& assembler() const { return *a_; }
  const PhysicalParams& params() const { return params_; }

  /// Unscaled 2n x 2n operator.
  SparseMatrix matrix() const {
    const Eigen::Index n = a_->v().space->num_dofs();
    std::vector<Eigen::Triplet<double>> trip;
    for (int bi = 0; bi < 2; ++bi)
      for (int bj = 0; bj < 2; ++bj)
        for (Eigen::Index r = 0; r < blocks_[bi][bj].outerSize(); ++r)
          for (SparseMatrix::InnerIterator it(blocks_[bi][bj], r); it; ++it)
            trip.emplace_back(bi * n + it.row(), bj * n + it.col(), it.value());
    SparseMatrix A(2 * n, 2 * n);
    A.setFromTriplets(trip.begin(), trip.end());
    return A;
  }

  /// (tau/3) mu_j^2 eta_j <f(T_m), psi> + 4 pi k0 (f(T_h), psi).
  std::array<Vector, 2> rhs(const Vector& T) const {
    const auto& c = params_.closure;
    const Vector emission = (4.0 * std::numbers::pi * params_.k0) * a_->blackbody_load(a_->v(), T, params_.c_bs);
    const double fm = black_body(params_.T_m, params_.c_bs);
    std::array<Vector, 2> out;
    for (int j = 0; j < 2; ++j)
      out[j] = emission + (params_.tau / 3.0 * c.mu(j) * c.mu(j) * c.eta(j) * fm) * boundary_one_;
    return out;
  }

  std::array<Vector, 2> solve(const std::array<Vector, 2>& rhs) const {
    const Eigen::Index n = a_->v().space->num_dofs();
    Vector b(2 * n);
    b.head(n) = rhs[0];
    b.tail(n) = scale_ * rhs[1];
    Vector x = lu_ ? Vector(lu_->solve(b)) : Vector(ldlt_.solve(b));
    const Vector r = b - scaled_ * x;
    x += lu_ ? Vector(lu_->solve(r)) : Vector(ldlt_.solve(r));
    if (!x.allFinite()) throw SingularSystem("non-finite radiative solution");
    return {x.head(n), x.tail(n)};
  }

  /// phi driven by the temperature coefficients T, plus optional extra loads.
  std::array<Vector, 2> solve_for(const Vector& T, const std::array<Vector, 2>* extra = nullptr) const {
    auto b = rhs(T);
    if (extra)
      for (int j = 0; j < 2; ++j) b[j] += (*extra)[j];
    return solve(b);
  }

 private:
  std::shared_ptr<const Assembler> a_;
  PhysicalParams params_;
  std::array<std::array<SparseMatrix, 2>, 2> blocks_;
  Vector boundary_one_;
  double scale_ = 1.0;
  Eigen::SparseMatrix<double> scaled_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
  std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lu_;
};

}  // namespace sp3
