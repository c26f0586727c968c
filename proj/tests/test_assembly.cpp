#include <cstdio>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "dense_oracle.hpp"
#include "sp3/integrator.hpp"
#include "sp3/radiative.hpp"

using namespace sp3;

namespace {

// Largest entry difference relative to the largest entry of the reference.
double rel_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& ref) {
  return (a - ref).cwiseAbs().maxCoeff() / std::max(1e-300, ref.cwiseAbs().maxCoeff());
}

Eigen::MatrixXd dense(const SparseMatrix& A) { return Eigen::MatrixXd(A); }

struct TinyMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 4>> tets;
};

TinyMesh one_tet() {
  return {{Vec3(0.1, 0, 0), Vec3(1.2, 0.1, -0.1), Vec3(0.2, 0.9, 0.1), Vec3(0.05, 0.2, 1.1)}, {{0, 1, 2, 3}}};
}

TinyMesh two_tets() {
  TinyMesh m = one_tet();
  m.vertices.push_back(Vec3(1.0, 1.1, 0.9));
  m.tets.push_back({1, 2, 3, 4});
  return m;
}

ConductivityModel test_conductivity() {
  ConductivityModel m;
  m.theta = 0.3;
  m.m[0].coeffs = {1.0, 1e-3};
  m.m[1].coeffs = {2.0};
  m.m[2].coeffs = {0.5, 0.0, 5e-7};
  return m;
}

PhysicalParams test_params() {
  PhysicalParams p;
  p.k0 = 1.3;
  p.tau = 0.8;
  p.alpha = 0.5;
  p.c_m = 1.5;
  p.T_m = 300.0;
  p.sigma_scatter = {0.5, 0.2, 0.1};
  return p;
}

double T0_fn(const Vec3& x) { return 800.0 + 200.0 * x[0] * x[1] + 100.0 * x[2] * x[2] - 50.0 * x[1]; }

struct Case {
  TinyMesh mesh;
  int p, p_phi;
  std::string label;
};

class OracleEquivalence : public ::testing::TestWithParam<Case> {
 protected:
  void SetUp() override {
    const auto& c = GetParam();
    lib_mesh = std::make_shared<const TetMesh>(c.mesh.vertices, c.mesh.tets);
    U = make_space(lib_mesh, c.p);
    V = c.p_phi == c.p ? U : make_space(lib_mesh, c.p_phi);
    a = std::make_shared<const Assembler>(U, V, 16);
    om.vertices = c.mesh.vertices;
    om.tets = c.mesh.tets;
    oU = std::make_unique<oracle::Space>(om, c.p, U->dof_coords());
    oV = std::make_unique<oracle::Space>(om, c.p_phi, V->dof_coords());
    ops = std::make_unique<oracle::Operators>(oracle::Operators{om, *oU, *oV});
    T = interpolate(U, T0_fn).coeffs;
  }

  std::shared_ptr<const TetMesh> lib_mesh;
  SpacePtr U, V;
  std::shared_ptr<const Assembler> a;
  oracle::Mesh om;
  std::unique_ptr<oracle::Space> oU, oV;
  std::unique_ptr<oracle::Operators> ops;
  Vector T;
};

TEST_P(OracleEquivalence, LinearOperators) {
  const auto one = [](std::size_t, const Vec3&) { return 1.0; };
  EXPECT_LT(rel_diff(dense(a->mass(a->u())), ops->mass(*oU)), 1e-8);
  EXPECT_LT(rel_diff(dense(a->mass(a->v())), ops->mass(*oV)), 1e-8);
  EXPECT_LT(rel_diff(dense(a->mass_cross()), ops->cross()), 1e-8);
  EXPECT_LT(rel_diff(dense(a->boundary_mass(a->u(), 2.5)), 2.5 * ops->boundary_mass(*oU, one)), 1e-8);
  EXPECT_LT(rel_diff(a->boundary_integral(a->v()), ops->boundary_load(*oV, one)), 1e-8);
  const Mat3 L = rotate_diagonal(0.4, Vec3(0.3, 0.2, 0.1));
  EXPECT_LT(rel_diff(dense(a->diffusion(a->v(), L)), ops->stiffness(*oV, [&](std::size_t, const Vec3&) { return L; })),
            1e-8);
  const TensorField field = [](const Vec3& x) { return rotate_diagonal(x[0], Vec3(1 + x[1], 2.0, 1 + x[2] * x[2])); };
  EXPECT_LT(rel_diff(dense(a->diffusion(a->u(), field)),
                     ops->stiffness(*oU, [&](std::size_t, const Vec3& x) { return field(x); })),
            1e-8);
  const ScalarFunction src = [](const Vec3& x) { return std::sin(x[0]) + x[1] * x[2]; };
  EXPECT_LT(rel_diff(a->source_load(a->u(), src), ops->load(*oU, [&](std::size_t, const Vec3& x) { return src(x); })),
            1e-10);
}

TEST_P(OracleEquivalence, NonlinearOperators) {
  const ConductivityModel model = test_conductivity();
  oracle::Scheme s(*ops, test_params(), [&](double t) { return model.diagonal(t); }, model.theta, 1e-4);
  const double c = 5.67e-8;
  EXPECT_LT(rel_diff(dense(a->conduction(model, T)), s.conduction(T)), 1e-8);
  EXPECT_LT(rel_diff(a->blackbody_load(a->u(), T, c), s.bb_load(*oU, T)), 1e-8);
  EXPECT_LT(rel_diff(a->blackbody_load(a->v(), T, c), s.bb_load(*oV, T)), 1e-8);
  EXPECT_LT(rel_diff(dense(a->blackbody_jacobian(T, c)), s.bb_jacobian(T)), 1e-8);
  EXPECT_LT(rel_diff(a->boundary_blackbody_load(T, c), s.bb_boundary(T)), 1e-8);
  EXPECT_LT(rel_diff(dense(a->boundary_blackbody_jacobian(T, c)), s.bb_boundary_jacobian(T)), 1e-8);
}

TEST_P(OracleEquivalence, RadiativeSystem) {
  const ConductivityModel model = test_conductivity();
  const PhysicalParams params = test_params();
  oracle::Scheme s(*ops, params, [&](double t) { return model.diagonal(t); }, model.theta, 1e-4);
  const RadiativeSystem rad(a, params, model.theta);
  EXPECT_LT(rel_diff(dense(rad.matrix()), s.rad), 1e-8);
  const auto phi = rad.solve_for(T);
  const auto ref = s.solve_phi(T);
  for (int j = 0; j < 2; ++j) EXPECT_LT(rel_diff(phi[j], ref[j]), 1e-8);
}

TEST_P(OracleEquivalence, OnePredictorCorrectorStep) {
  const ConductivityModel model = test_conductivity();
  const PhysicalParams params = test_params();
  const double sigma = 1e-4;
  Problem pr;
  pr.params = params;
  pr.conductivity = model;
  pr.t_final = sigma;
  pr.T0 = T0_fn;
  IntegratorConfig cfg;
  cfg.sigma = sigma;
  cfg.init = InitPath::weak;
  Integrator integ(a, pr, cfg);
  StepperState st = integ.init_state();

  oracle::Scheme s(*ops, params, [&](double t) { return model.diagonal(t); }, model.theta, sigma);
  auto ref = s.init([](const Vec3& x) { return T0_fn(x); });
  EXPECT_LT(rel_diff(st.T.coeffs, ref.T), 1e-8);
  EXPECT_LT(rel_diff(st.T_half_prev.coeffs, ref.T_half), 1e-8);
  for (int j = 0; j < 2; ++j) EXPECT_LT(rel_diff(st.phi[j].coeffs, ref.phi[j]), 1e-8);

  integ.predictor_step(st);
  integ.corrector_step(st);
  s.step(ref);
  EXPECT_LT(rel_diff(st.T_half_prev.coeffs, ref.T_half), 1e-8);
  EXPECT_LT(rel_diff(st.T.coeffs, ref.T), 1e-8);
  for (int j = 0; j < 2; ++j) EXPECT_LT(rel_diff(st.phi[j].coeffs, ref.phi[j]), 1e-8);
  EXPECT_EQ(st.n, 1);
  EXPECT_DOUBLE_EQ(st.t, sigma);
}

INSTANTIATE_TEST_SUITE_P(TinyMeshes, OracleEquivalence,
                         ::testing::Values(Case{one_tet(), 1, 1, "OneTetP1P1"}, Case{one_tet(), 2, 1, "OneTetP2P1"},
                                           Case{two_tets(), 2, 1, "TwoTetsP2P1"}, Case{two_tets(), 2, 2, "TwoTetsP2P2"},
                                           Case{two_tets(), 3, 2, "TwoTetsP3P2"}),
                         [](const auto& info) { return info.param.label; });

// ---- property suites on box meshes ----------------------------------------------

class BoxProperties : public ::testing::TestWithParam<int> {
 protected:
  void SetUp() override {
    mesh = std::make_shared<const TetMesh>(build_box_mesh({Vec3(0, 0, 0), Vec3(1, 2, 1)}, {2, 2, 1}));
    U = make_space(mesh, GetParam());
    a = std::make_shared<const Assembler>(U, default_quadrature_degree(GetParam()));
  }
  std::shared_ptr<const TetMesh> mesh;
  SpacePtr U;
  std::shared_ptr<const Assembler> a;
};

TEST_P(BoxProperties, MassIsSymmetricPositiveDefinite) {
  const Eigen::MatrixXd M = dense(a->mass(a->u()));
  EXPECT_LT((M - M.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_GT(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(M).eigenvalues().minCoeff(), 0.0);
  EXPECT_NEAR(M.sum(), 2.0, 1e-12);  // 1^T M 1 = |Omega|
}

TEST_P(BoxProperties, DiffusionKernelIsConstants) {
  const Eigen::MatrixXd K = dense(a->diffusion(a->u(), Mat3(rotate_diagonal(0.5, Vec3(1, 2, 3)))));
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(K.rows());
  EXPECT_LT((K * ones).cwiseAbs().maxCoeff(), 1e-11);
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(K).eigenvalues();
  EXPECT_GT(ev[1], 1e-6 * ev.maxCoeff());
  EXPECT_GT(ev[0], -1e-10 * ev.maxCoeff());
}

TEST_P(BoxProperties, ProjectionIsOrthogonalAndIdempotent) {
  const SpdFactor mass(a->mass(a->u()));
  const ScalarFunction u = [](const Vec3& x) { return std::exp(x[0]) * std::cos(2 * x[1]) + x[2]; };
  const FemField q = l2_project(*a, mass, u);
  // (u - Q u, v_h) = 0 for every basis function
  const Vector residual = a->source_load(a->u(), u) - mass.matrix() * q.coeffs;
  EXPECT_LT(residual.cwiseAbs().maxCoeff(), 1e-12);
  const FemField qq = l2_project(*a, mass, [&](const Vec3& x) { return evaluate(q, x); });
  EXPECT_LT((qq.coeffs - q.coeffs).cwiseAbs().maxCoeff(), 1e-11);
}

TEST_P(BoxProperties, BlackbodyJacobianMatchesFiniteDifferences) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> d(-50.0, 50.0);
  Vector T = interpolate(U, T0_fn).coeffs;
  for (auto& t : T) t += d(rng);
  const double c = 5.67e-8;
  for (bool boundary : {false, true}) {
    const Eigen::MatrixXd J =
        dense(boundary ? a->boundary_blackbody_jacobian(T, c) : a->blackbody_jacobian(T, c));
    Eigen::MatrixXd fd(J.rows(), J.cols());
    for (Eigen::Index k = 0; k < T.size(); ++k) {
      const double h = 1e-4 * std::abs(T[k]);
      Vector tp = T, tm = T;
      tp[k] += h;
      tm[k] -= h;
      const Vector lp = boundary ? a->boundary_blackbody_load(tp, c) : a->blackbody_load(a->u(), tp, c);
      const Vector lm = boundary ? a->boundary_blackbody_load(tm, c) : a->blackbody_load(a->u(), tm, c);
      fd.col(k) = (lp - lm) / (2 * h);
    }
    EXPECT_LT(rel_diff(J, fd), 1e-6) << (boundary ? "boundary" : "volume");
  }
}

INSTANTIATE_TEST_SUITE_P(Degrees, BoxProperties, ::testing::Values(1, 2, 3));

TEST(Assembly, DefaultQuadratureDegree) {
  EXPECT_EQ(default_quadrature_degree(1), 4);
  EXPECT_EQ(default_quadrature_degree(2), 8);
  EXPECT_EQ(default_quadrature_degree(3, 2), 12);
  EXPECT_EQ(default_quadrature_degree(2, 4), 12);
}

TEST(Assembly, L2ErrorOfInterpolantConverges) {
  const ScalarFunction u = [](const Vec3& x) { return std::sin(3 * x[0]) * std::exp(x[1]) + x[2] * x[2]; };
  for (int p = 1; p <= 3; ++p) {
    std::vector<double> errs;
    for (int n : {2, 4}) {
      auto mesh = std::make_shared<const TetMesh>(build_box_mesh({}, {n, n, n}));
      const auto V = make_space(mesh, p);
      const Assembler a(V, default_quadrature_degree(p) + 2);
      errs.push_back(a.l2_error(a.u(), interpolate(V, u).coeffs, u));
    }
    EXPECT_NEAR(std::log2(errs[0] / errs[1]), p + 1.0, 0.45) << "p=" << p;
  }
}

// ---- solvers ---------------------------------------------------------------------

SparseMatrix laplacian_1d(int n, double shift) {
  std::vector<Eigen::Triplet<double>> t;
  for (int i = 0; i < n; ++i) {
    t.emplace_back(i, i, 2.0 + shift);
    if (i > 0) t.emplace_back(i, i - 1, -1.0);
    if (i + 1 < n) t.emplace_back(i, i + 1, -1.0);
  }
  SparseMatrix A(n, n);
  A.setFromTriplets(t.begin(), t.end());
  return A;
}

TEST(Solver, DirectAndCgAgree) {
  const SparseMatrix A = laplacian_1d(200, 0.01);
  const Vector b = Vector::LinSpaced(200, -1, 1);
  const Vector x1 = solve_linear(A, b);
  LinearSolverConfig cg;
  cg.method = LinearMethod::cg;
  const Vector x2 = solve_linear(A, b, cg);
  EXPECT_LT((A * x1 - b).norm(), 1e-12 * b.norm());
  EXPECT_LT((x1 - x2).norm(), 1e-9 * x1.norm());
  cg.cg_max_iter = 2;
  EXPECT_THROW(solve_linear(A, b, cg), MaxIterationsExceeded);
  SparseMatrix S(3, 3);
  S.insert(0, 0) = 1.0;
  EXPECT_THROW(solve_linear(S, Vector::Ones(3)), SingularSystem);
  EXPECT_EQ(parse_linear_method("cg"), LinearMethod::cg);
  EXPECT_THROW(parse_linear_method("gmres"), InvalidParameter);
}

TEST(Solver, SequenceSolverReusesFactorization) {
  SpdSequenceSolver solver;
  const Vector b = Vector::Ones(300);
  for (double shift : {0.10, 0.1001, 0.1002}) {
    const SparseMatrix A = laplacian_1d(300, shift);
    const Vector x = solver.solve(A, b);
    EXPECT_LT((A * x - b).norm(), 1e-11 * b.norm());
  }
  EXPECT_EQ(solver.factorizations(), 1);
  const SparseMatrix far = laplacian_1d(300, 5.0);
  const Vector x = solver.solve(far, b);
  EXPECT_LT((far * x - b).norm(), 1e-11 * b.norm());
  EXPECT_EQ(solver.factorizations(), 2);
  EXPECT_EQ(solver.solves(), 4);
}

TEST(Solver, SpdFactorRejectsIndefinite) {
  SparseMatrix A = laplacian_1d(10, 0.0);
  A.coeffRef(3, 3) = -5.0;
  EXPECT_THROW(SpdFactor{A}, SingularMass);
}

// ---- radiative system ---------------------------------------------------------------

class Radiative : public ::testing::Test {
 protected:
  void SetUp() override {
    mesh = std::make_shared<const TetMesh>(build_box_mesh({}, {2, 2, 2}));
    a = std::make_shared<const Assembler>(make_space(mesh, 2), make_space(mesh, 1), 8);
  }
  std::shared_ptr<const TetMesh> mesh;
  std::shared_ptr<const Assembler> a;
};

TEST_F(Radiative, ScaledOperatorIsSymmetric) {
  const PhysicalParams p;
  const RadiativeSystem rad(a, p, 0.2);
  const Eigen::MatrixXd A = dense(rad.matrix());
  const auto& c = p.closure;
  const Eigen::Index n = A.rows() / 2;
  Eigen::MatrixXd S = A;
  S.bottomRows(n) *= c.mu1 * c.mu1 * c.beta2 / (c.mu2 * c.mu2 * c.beta1);
  EXPECT_LT((S - S.transpose()).cwiseAbs().maxCoeff(), 1e-12 * S.cwiseAbs().maxCoeff());
  EXPECT_GT(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(S).eigenvalues().minCoeff(), 0.0);
}

TEST_F(Radiative, AmbientTemperatureGivesEquilibriumMoments) {
  const PhysicalParams p;
  const RadiativeSystem rad(a, p);
  const Vector T = Vector::Constant(a->u().space->num_dofs(), p.T_m);
  const auto phi = rad.solve_for(T);
  const double ref = 4.0 * std::numbers::pi * black_body(p.T_m);
  for (int j = 0; j < 2; ++j) EXPECT_LT((phi[j].array() / ref - 1.0).abs().maxCoeff(), 1e-4);
}

TEST_F(Radiative, RejectsInadmissibleAbsorption) {
  PhysicalParams p;
  p.k0 = 5e-4;
  EXPECT_THROW(RadiativeSystem(a, p), InvalidParameter);
}

TEST_F(Radiative, MatrixMarketDump) {
  const RadiativeSystem rad(a, PhysicalParams{});
  const std::string path = ::testing::TempDir() + "rad.mtx";
  dump_matrix_market(rad.matrix(), path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_NE(header.find("MatrixMarket"), std::string::npos);
  std::remove(path.c_str());
}

}  // namespace
