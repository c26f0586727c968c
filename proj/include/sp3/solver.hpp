#pragma once
// Sparse linear solves with factorization reuse.

#include <cmath>
#include <memory>
#include <string>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "sp3/assembly.hpp"
#include "sp3/errors.hpp"

namespace sp3 {

enum class LinearMethod { direct, cg };

struct LinearSolverConfig {
  LinearMethod method = LinearMethod::direct;
  double cg_tol = 1e-12;
  int cg_max_iter = 20000;
  // A cached factorization is kept as a preconditioner for later matrices
  // until preconditioned CG needs more than this many iterations.
  int reuse_max_iter = 12;
};

inline const char* to_string(LinearMethod m) { return m == LinearMethod::direct ? "direct" : "cg"; }

inline LinearMethod parse_linear_method(const std::string& s) {
  if (s == "direct") return LinearMethod::direct;
  if (s == "cg") return LinearMethod::cg;
  throw InvalidParameter("linear_solver must be direct or cg, got '" + s + "'");
}

struct LinearSolveStats {
  int iterations = 0;
  double relative_residual = 0.0;
  bool refactorized = false;
};

namespace detail {

inline double relative_residual(const SparseMatrix& A, const Vector& x, const Vector& b) {
  const double nb = b.norm();
  return (A * x - b).norm() / (nb > 0.0 ? nb : 1.0);
}

// Preconditioned CG; `apply` approximates A^{-1}.
template <class Apply>
bool pcg(const SparseMatrix& A, const Vector& b, Vector& x, Apply&& apply, double tol, int max_iter,
         LinearSolveStats& stats) {
  const double nb = b.norm();
  if (nb == 0.0) {
    x.setZero();
    stats.iterations = 0;
    stats.relative_residual = 0.0;
    return true;
  }
  Vector r = b - A * x;
  Vector z = apply(r);
  Vector p = z;
  double rz = r.dot(z);
  for (int k = 0; k < max_iter; ++k) {
    const double res = r.norm() / nb;
    stats.iterations = k;
    stats.relative_residual = res;
    if (res <= tol) return true;
    const Vector Ap = A * p;
    const double pAp = p.dot(Ap);
    if (!(pAp > 0.0)) return false;
    const double alpha = rz / pAp;
    x += alpha * p;
    r -= alpha * Ap;
    z = apply(r);
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  stats.iterations = max_iter;
  stats.relative_residual = r.norm() / nb;
  return stats.relative_residual <= tol;
}

}  // namespace detail

/// One-shot solve of a general sparse system.
inline Vector solve_linear(const SparseMatrix& A, const Vector& b, const LinearSolverConfig& cfg = {}) {
  if (A.rows() != A.cols() || A.rows() != b.size()) throw InvalidParameter("solve_linear: dimension mismatch");
  if (cfg.method == LinearMethod::cg) {
    Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper, Eigen::DiagonalPreconditioner<double>> cg;
    cg.setTolerance(cfg.cg_tol);
    cg.setMaxIterations(cfg.cg_max_iter);
    cg.compute(A);
    Vector x = cg.solve(b);
    if (cg.info() != Eigen::Success || detail::relative_residual(A, x, b) > 10.0 * cfg.cg_tol)
      throw MaxIterationsExceeded("CG did not reach tolerance " + std::to_string(cfg.cg_tol));
    return x;
  }
  const Eigen::SparseMatrix<double> C = A;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(C);
  if (lu.info() != Eigen::Success) throw SingularSystem("sparse LU failed: " + lu.lastErrorMessage());
  Vector x = lu.solve(b);
  x += lu.solve(b - A * x);  // one refinement step
  if (!x.allFinite()) throw SingularSystem("non-finite solution");
  return x;
}

/// Solver for a sequence of nearby SPD matrices (Newton matrices of
/// successive iterates and steps). In direct mode the latest LDL^T
/// factorization is reused as a CG preconditioner and refreshed only when it
/// stops being effective, so results meet the tolerance of a direct solve.
class SpdSequenceSolver {
 public:
  explicit SpdSequenceSolver(LinearSolverConfig cfg = {}) : cfg_(cfg) {}

  Vector solve(const SparseMatrix& A, const Vector& b, LinearSolveStats* out = nullptr) {
    LinearSolveStats stats;
    Vector x = Vector::Zero(b.size());
    if (cfg_.method == LinearMethod::cg) {
      const Vector inv_diag = A.diagonal().cwiseInverse();
      if (!detail::pcg(A, b, x, [&](const Vector& r) { return Vector(inv_diag.cwiseProduct(r)); }, cfg_.cg_tol,
                       cfg_.cg_max_iter, stats))
        throw MaxIterationsExceeded("CG did not reach tolerance " + std::to_string(cfg_.cg_tol));
    } else {
      const double tol = std::min(cfg_.cg_tol, 1e-12);
      bool ok = false;
      if (ldlt_) ok = detail::pcg(A, b, x, [&](const Vector& r) { return Vector(ldlt_->solve(r)); }, tol,
                                  cfg_.reuse_max_iter, stats);
      if (!ok) {
        factorize(A);
        stats.refactorized = true;
        x.setZero();
        if (!detail::pcg(A, b, x, [&](const Vector& r) { return Vector(ldlt_->solve(r)); }, tol, 50, stats))
          throw SingularSystem("refined direct solve did not converge");
      }
    }
    ++solves_;
    if (out) *out = stats;
    return x;
  }

  int factorizations() const { return factorizations_; }
  int solves() const { return solves_; }
  void reset() { ldlt_.reset(); }

 private:
  void factorize(const SparseMatrix& A) {
    const Eigen::SparseMatrix<double> C = A;
    if (!ldlt_) {
      ldlt_ = std::make_unique<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
      ldlt_->analyzePattern(C);
    }
    ldlt_->factorize(C);
    if (ldlt_->info() != Eigen::Success) {
      ldlt_.reset();
      throw SingularSystem("LDL^T factorization failed");
    }
    ++factorizations_;
  }

  LinearSolverConfig cfg_;
  std::unique_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> ldlt_;
  int factorizations_ = 0;
  int solves_ = 0;
};

/// Factorization of one fixed SPD matrix (mass matrices).
class SpdFactor {
 public:
  SpdFactor() = default;
  explicit SpdFactor(const SparseMatrix& A) { compute(A); }

  void compute(const SparseMatrix& A) {
    A_ = A;
    ldlt_.compute(Eigen::SparseMatrix<double>(A));
    if (ldlt_.info() != Eigen::Success) throw SingularMass("LDL^T factorization of an SPD operator failed");
    if ((ldlt_.vectorD().array() <= 0.0).any()) throw SingularMass("operator is not positive definite");
  }

  Vector solve(const Vector& b) const {
    Vector x = ldlt_.solve(b);
    x += ldlt_.solve(b - A_ * x);
    return x;
  }

  const SparseMatrix& matrix() const { return A_; }

 private:
  SparseMatrix A_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
};

}  // namespace sp3
