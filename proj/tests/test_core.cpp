#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "sp3/space.hpp"

using namespace sp3;

namespace {

double factorial(int n) { return std::tgamma(n + 1.0); }

Vec3 random_reference_point(std::mt19937& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (;;) {
    Vec3 x(u(rng), u(rng), u(rng));
    if (x.sum() < 1.0) return x;
  }
}

}  // namespace

// ---- model ---------------------------------------------------------------------

TEST(Model, AdmissibilityThresholdForDefaultClosure) {
  PhysicalParams p;
  const auto adm = check_admissibility(p);
  EXPECT_NEAR(adm.threshold, 7.1947e-4, 5e-8);
  EXPECT_TRUE(adm.pass);
  p.k0 = 7.0e-4;
  EXPECT_FALSE(check_admissibility(p).pass);
  p.tau = 0.5;  // the threshold scales with tau
  EXPECT_NEAR(check_admissibility(p).threshold, 0.5 * 7.1947e-4, 5e-8);
}

TEST(Model, BlackBodyValues) {
  EXPECT_NEAR(black_body(300.0), 459.27, 1e-9);
  EXPECT_NEAR(4.0 * std::numbers::pi * black_body(300.0), 5771.357, 1e-3);
  for (double T : {1.0, 300.0, 1500.0}) {
    const double h = 1e-4 * T;
    const double fd = (black_body(T + h) - black_body(T - h)) / (2 * h);
    EXPECT_NEAR(black_body_derivative(T), fd, 1e-7 * std::abs(fd));  // O(h^2) truncation
  }
}

TEST(Model, ClosureEmissionMatchesAbsorptionToRounding) {
  // At equilibrium phi_j = 4 pi f(T_m) only if eta_j = 4 pi (alpha_j + beta_other).
  const Sp3Closure c;
  for (int j = 0; j < 2; ++j)
    EXPECT_NEAR(c.eta(j) / (4.0 * std::numbers::pi * (c.alpha(j) + c.beta_other(j))), 1.0, 1e-4);
}

TEST(Model, ParameterValidation) {
  PhysicalParams p;
  EXPECT_NO_THROW(p.validate());
  p.tau = 0.0;
  EXPECT_THROW(p.validate(), InvalidParameter);
  p = PhysicalParams{};
  p.k0 = -1.0;
  EXPECT_THROW(p.validate(), InvalidParameter);
  p = PhysicalParams{};
  p.closure.gamma2 = p.closure.gamma1;
  EXPECT_THROW(p.validate(), InvalidParameter);
  p = PhysicalParams{};
  p.sigma_scatter = {-2.0, 0.0, 0.0};
  EXPECT_THROW(tensor_L(p, 0.0), DegenerateOpacity);
}

TEST(Model, RotatedTensorsAreSymmetricWithPrescribedSpectrum) {
  ConductivityModel m;
  m.theta = 0.7;
  m.m[0].coeffs = {0.1, 2e-2, 5e-4};
  m.m[1].coeffs = {0.1, 2e-2};
  m.m[2].coeffs = {0.1, 2e-2, 5e-4};
  const Mat3 P = rotation(m.theta);
  EXPECT_NEAR((P * P.transpose() - Mat3::Identity()).norm(), 0.0, 1e-15);
  EXPECT_NEAR(P.determinant(), 1.0, 1e-15);
  for (double T : {0.0, 10.0, 1000.0}) {
    const Mat3 M = tensor_M(T, m);
    EXPECT_EQ((M - M.transpose()).norm(), 0.0);
    Eigen::SelfAdjointEigenSolver<Mat3> es(M);
    std::vector<double> want{m.m[0](T), m.m[1](T), m.m[2](T)};
    std::sort(want.begin(), want.end());
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(es.eigenvalues()[i], want[i], 1e-12 * want[2]);
  }
  m.m[1].coeffs = {-1.0};
  EXPECT_THROW(tensor_M(1.0, m), NonPositiveConductivity);
}

TEST(Model, PolynomialDerivative) {
  Polynomial q{{0.1, 2e-2, 5e-4}};
  EXPECT_EQ(q.degree(), 2);
  for (double T : {-3.0, 0.5, 800.0}) {
    EXPECT_NEAR(q(T), 0.1 + 2e-2 * T + 5e-4 * T * T, 1e-12 * (1 + std::abs(q(T))));
    EXPECT_NEAR(q.derivative(T), 2e-2 + 1e-3 * T, 1e-12 * (1 + std::abs(T)));
  }
}

// ---- mesh ----------------------------------------------------------------------

TEST(Mesh, BoxMeshGeometry) {
  const Box box{Vec3(0, 0, -1), Vec3(10, 10, 1)};
  const TetMesh mesh = build_box_mesh(box, {3, 2, 4});
  EXPECT_EQ(mesh.num_tets(), 6u * 3 * 2 * 4);
  EXPECT_EQ(mesh.num_vertices(), 4u * 3 * 5);
  EXPECT_NEAR(mesh.volume(), box.volume(), 1e-10);
  EXPECT_NEAR(mesh.boundary_area(), box.surface_area(), 1e-10);
  EXPECT_EQ(mesh.boundary_faces().size(), 2u * 2 * (3 * 2 + 2 * 4 + 3 * 4));
  for (std::size_t t = 0; t < mesh.num_tets(); ++t) EXPECT_GT(mesh.geometry(t).det, 0.0);
}

TEST(Mesh, KuhnSplitIsConforming) {
  const TetMesh mesh = build_box_mesh({}, {3, 3, 3});
  std::map<std::array<int, 3>, int> count;
  for (const auto& t : mesh.tets())
    for (const auto& f : kTetFaces) {
      std::array<int, 3> key{t[f[0]], t[f[1]], t[f[2]]};
      std::sort(key.begin(), key.end());
      ++count[key];
    }
  std::size_t single = 0;
  for (const auto& [k, c] : count) {
    EXPECT_LE(c, 2);
    single += c == 1;
  }
  EXPECT_EQ(single, mesh.boundary_faces().size());
}

TEST(Mesh, BoundaryNormalsPointOutwardAndCloseTheSurface) {
  const TetMesh mesh = build_box_mesh({}, {2, 3, 2});
  Vec3 sum = Vec3::Zero();
  for (const auto& f : mesh.boundary_faces()) {
    Vec3 centroid = Vec3::Zero();
    for (int v : f.vertices) centroid += mesh.vertices()[v] / 3.0;
    Vec3 inner = Vec3::Zero();
    for (int v : mesh.tets()[f.tet]) inner += mesh.vertices()[v] / 4.0;
    EXPECT_GT(f.normal.dot(centroid - inner), 0.0);
    EXPECT_NEAR(f.normal.norm(), 1.0, 1e-14);
    sum += f.area * f.normal;
  }
  EXPECT_NEAR(sum.norm(), 0.0, 1e-13);
}

TEST(Mesh, UniformRefinementHalvesH) {
  const TetMesh coarse = build_box_mesh({}, {2, 2, 2});
  const TetMesh fine = refine_uniform(coarse);
  EXPECT_EQ(fine.num_tets(), 8 * coarse.num_tets());
  EXPECT_NEAR(fine.h(), coarse.h() / 2, 1e-14);
  const TetMesh imported(coarse.vertices(), coarse.tets());
  EXPECT_THROW(refine_uniform(imported), InvalidParameter);
}

TEST(Mesh, RejectsBadInput) {
  EXPECT_THROW(build_box_mesh({Vec3(0, 0, 0), Vec3(1, 0, 1)}, {1, 1, 1}), DegenerateBox);
  EXPECT_THROW(build_box_mesh({}, {0, 1, 1}), DegenerateBox);
  std::vector<Vec3> flat{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(1, 1, 0)};
  EXPECT_THROW(TetMesh(flat, {{0, 1, 2, 3}}), MeshFormatError);
  std::istringstream bad("tetmesh v2\n");
  EXPECT_THROW(read_tetmesh(bad), MeshFormatError);
}

TEST(Mesh, TextRoundTrip) {
  const TetMesh mesh = build_box_mesh({Vec3(0, 0, 0), Vec3(2, 1, 0.5)}, {2, 1, 1});
  std::stringstream ss;
  write_tetmesh(ss, mesh);
  const TetMesh back = read_tetmesh(ss);
  ASSERT_EQ(back.num_tets(), mesh.num_tets());
  for (std::size_t i = 0; i < mesh.num_vertices(); ++i)
    EXPECT_EQ((back.vertices()[i] - mesh.vertices()[i]).norm(), 0.0);
  EXPECT_NEAR(back.volume(), 1.0, 1e-14);
}

TEST(Mesh, LocateFindsContainingTet) {
  const TetMesh mesh = build_box_mesh({}, {3, 3, 3});
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    const Vec3 x(u(rng), u(rng), u(rng));
    const auto hit = mesh.locate(x);
    ASSERT_TRUE(hit.has_value());
    const auto& g = mesh.geometry(hit->first);
    EXPECT_NEAR((g.origin + g.jac * hit->second - x).norm(), 0.0, 1e-13);
  }
  EXPECT_FALSE(mesh.locate(Vec3(1.5, 0.5, 0.5)).has_value());
}

// ---- reference element and quadrature -----------------------------------------

class QuadratureExactness : public ::testing::TestWithParam<int> {};

TEST_P(QuadratureExactness, TetMonomials) {
  const int d = GetParam();
  const TetRule rule = make_tet_quadrature(d);
  EXPECT_GE(rule.degree, d);
  for (int a = 0; a <= d; ++a)
    for (int b = 0; a + b <= d; ++b)
      for (int c = 0; a + b + c <= d; ++c) {
        double q = 0.0;
        for (std::size_t k = 0; k < rule.size(); ++k) {
          const auto& x = rule.points[k];
          q += rule.weights[k] * std::pow(x[0], a) * std::pow(x[1], b) * std::pow(x[2], c);
        }
        const double exact = factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3);
        EXPECT_NEAR(q, exact, 1e-14) << a << " " << b << " " << c;
      }
}

TEST_P(QuadratureExactness, TriangleMonomials) {
  const int d = GetParam();
  const TriangleRule rule = make_triangle_quadrature(d);
  for (int a = 0; a <= d; ++a)
    for (int b = 0; a + b <= d; ++b) {
      double q = 0.0;
      for (std::size_t k = 0; k < rule.size(); ++k)
        q += rule.weights[k] * std::pow(rule.points[k][0], a) * std::pow(rule.points[k][1], b);
      EXPECT_NEAR(q, factorial(a) * factorial(b) / factorial(a + b + 2), 1e-14) << a << " " << b;
    }
}

INSTANTIATE_TEST_SUITE_P(Degrees, QuadratureExactness, ::testing::Values(0, 1, 2, 3, 5, 8, 12, 16, 24));

TEST(Quadrature, RejectsUnsupportedDegree) {
  EXPECT_THROW(make_tet_quadrature(kMaxQuadratureDegree + 1), UnsupportedExactness);
  EXPECT_THROW(make_triangle_quadrature(-1), UnsupportedExactness);
}

class ElementDegree : public ::testing::TestWithParam<int> {};

TEST_P(ElementDegree, PartitionOfUnityAndNodality) {
  const ReferenceElement el(GetParam());
  EXPECT_EQ(el.size(), lagrange_dimension(GetParam()));
  std::mt19937 rng(GetParam());
  for (int k = 0; k < 20; ++k) {
    const Vec3 xi = random_reference_point(rng);
    EXPECT_NEAR(el.values(xi).sum(), 1.0, 1e-12);
    EXPECT_NEAR(el.gradients(xi).colwise().sum().norm(), 0.0, 1e-10);
  }
  for (int j = 0; j < el.size(); ++j) {
    const auto v = el.values(el.node(j));
    for (int i = 0; i < el.size(); ++i) EXPECT_NEAR(v[i], i == j ? 1.0 : 0.0, 1e-12);
  }
}

TEST_P(ElementDegree, GradientsMatchFiniteDifferences) {
  const ReferenceElement el(GetParam());
  std::mt19937 rng(100 + GetParam());
  const double h = 1e-6;
  for (int k = 0; k < 5; ++k) {
    const Vec3 xi = 0.8 * random_reference_point(rng) + Vec3::Constant(0.05);
    const auto G = el.gradients(xi);
    for (int d = 0; d < 3; ++d) {
      const Vec3 e = Vec3::Unit(d) * h;
      const Eigen::VectorXd fd = (el.values(xi + e) - el.values(xi - e)) / (2 * h);
      EXPECT_NEAR((G.col(d) - fd).cwiseAbs().maxCoeff(), 0.0, 1e-6);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Degrees, ElementDegree, ::testing::Range(1, kMaxElementDegree + 1));

TEST(Element, RejectsUnsupportedDegree) {
  EXPECT_THROW(ReferenceElement(0), UnsupportedDegree);
  EXPECT_THROW(ReferenceElement(kMaxElementDegree + 1), UnsupportedDegree);
}

// ---- spaces ---------------------------------------------------------------------

TEST(Space, DofCountsOnBoxMeshes) {
  auto mesh = std::make_shared<const TetMesh>(build_box_mesh({}, {2, 3, 2}));
  for (int p = 1; p <= 4; ++p) {
    const auto V = make_space(mesh, p);
    EXPECT_EQ(V->num_dofs(), (2 * p + 1) * (3 * p + 1) * (2 * p + 1));
    int boundary = 0;
    for (int i = 0; i < V->num_dofs(); ++i) boundary += V->is_boundary_dof(i);
    EXPECT_EQ(boundary, V->num_dofs() - (2 * p - 1) * (3 * p - 1) * (2 * p - 1));
  }
}

TEST(Space, InterpolationReproducesPolynomialsOfDegreeP) {
  auto mesh = std::make_shared<const TetMesh>(build_box_mesh({Vec3(-1, 0, 0), Vec3(1, 1, 2)}, {2, 2, 2}));
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int p = 1; p <= 4; ++p) {
    auto poly = [p](const Vec3& x) { return std::pow(x[0] + 2 * x[1] - x[2] + 0.3, p) + x[0] * x[2]; };
    const auto V = make_space(mesh, std::max(p, 2));
    const FemField f = interpolate(V, poly);
    for (int k = 0; k < 30; ++k) {
      const Vec3 x(-1 + 2 * u(rng), u(rng), 2 * u(rng));
      EXPECT_NEAR(evaluate(f, x), poly(x), 1e-11 * (1 + std::abs(poly(x))));
    }
  }
  const auto V1 = make_space(mesh, 1);
  const FemField lin = interpolate(V1, [](const Vec3& x) { return 3 * x[0] - x[1] + 0.5 * x[2]; });
  EXPECT_NEAR((evaluate_gradient(lin, Vec3(0.1, 0.2, 0.3)) - Vec3(3, -1, 0.5)).norm(), 0.0, 1e-12);
  EXPECT_THROW(evaluate(lin, Vec3(5, 0, 0)), PointOutsideMesh);
}

TEST(Space, FieldsAreContinuousAcrossFaces) {
  auto mesh = std::make_shared<const TetMesh>(build_box_mesh({}, {2, 2, 2}));
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int p = 1; p <= 4; ++p) {
    const auto V = make_space(mesh, p);
    FemField f(V);
    for (int i = 0; i < V->num_dofs(); ++i) f.coeffs[i] = u(rng);
    // interior faces: shared by two tets
    std::map<std::array<int, 3>, std::vector<std::size_t>> owners;
    for (std::size_t t = 0; t < mesh->num_tets(); ++t)
      for (const auto& lf : kTetFaces) {
        const auto& tet = mesh->tets()[t];
        std::array<int, 3> key{tet[lf[0]], tet[lf[1]], tet[lf[2]]};
        std::sort(key.begin(), key.end());
        owners[key].push_back(t);
      }
    for (const auto& [key, ts] : owners) {
      if (ts.size() != 2) continue;
      const double a = u(rng), b = u(rng) * (1 - a);
      const auto& v = mesh->vertices();
      const Vec3 x = v[key[0]] + a * (v[key[1]] - v[key[0]]) + b * (v[key[2]] - v[key[0]]);
      EXPECT_NEAR(evaluate_in_cell(f, ts[0], x), evaluate_in_cell(f, ts[1], x), 1e-12);
    }
  }
}

TEST(Space, VtkExport) {
  auto mesh = std::make_shared<const TetMesh>(build_box_mesh({}, {1, 1, 1}));
  const auto V = make_space(mesh, 2);
  const FemField f = interpolate(V, [](const Vec3& x) { return x.squaredNorm(); });
  for (int level : {0, 2}) {
    std::ostringstream os;
    write_vtk(os, {{"T", &f}}, level);
    const std::string s = os.str();
    EXPECT_NE(s.find("DATASET UNSTRUCTURED_GRID"), std::string::npos);
    const std::size_t cells = mesh->num_tets() * (level == 0 ? 1 : level * level * level);
    EXPECT_NE(s.find("CELLS " + std::to_string(cells) + " "), std::string::npos);
    EXPECT_NE(s.find("SCALARS T double 1"), std::string::npos);
  }
  EXPECT_THROW(write_vtk(std::cout, {}), InvalidParameter);
}
