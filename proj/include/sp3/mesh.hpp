#pragma once
// Conforming tetrahedral meshes of axis-aligned boxes, plus a plain-text
// import/export path for externally generated meshes.

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sp3/errors.hpp"
#include "sp3/model.hpp"

namespace sp3 {

struct Box {
  Vec3 lo{0, 0, 0};
  Vec3 hi{1, 1, 1};

  double volume() const { return (hi - lo).prod(); }
  double surface_area() const {
    const Vec3 e = hi - lo;
    return 2.0 * (e[0] * e[1] + e[1] * e[2] + e[0] * e[2]);
  }
};

struct CellCounts {
  int nx = 1, ny = 1, nz = 1;
};

/// Affine map x = origin + jac * xi from the reference tetrahedron.
struct TetGeometry {
  Vec3 origin;
  Mat3 jac;
  Mat3 jac_inv;
  double det = 0.0;
};

struct BoundaryFace {
  int tet = 0;
  int local_face = 0;  // face opposite local vertex `local_face`
  std::array<int, 3> vertices{};
  Vec3 normal{0, 0, 0};  // outward, unit length
  double area = 0.0;
};

inline constexpr std::array<std::array<int, 3>, 4> kTetFaces{{
    {1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}}};

class TetMesh {
 public:
  TetMesh() = default;
  TetMesh(std::vector<Vec3> vertices, std::vector<std::array<int, 4>> tets)
      : vertices_(std::move(vertices)), tets_(std::move(tets)) {
    finalize();
  }

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<std::array<int, 4>>& tets() const { return tets_; }
  const std::vector<BoundaryFace>& boundary_faces() const { return boundary_; }
  const TetGeometry& geometry(std::size_t t) const { return geometry_[t]; }
  std::size_t num_vertices() const { return vertices_.size(); }
  std::size_t num_tets() const { return tets_.size(); }
  double h() const { return h_; }

  const std::optional<Box>& box() const { return box_; }
  const std::optional<CellCounts>& cells() const { return cells_; }

  double volume() const {
    double v = 0.0;
    for (const auto& g : geometry_) v += g.det / 6.0;
    return v;
  }
  double boundary_area() const {
    double a = 0.0;
    for (const auto& f : boundary_) a += f.area;
    return a;
  }
  /// Largest-to-smallest boundary face area; imported meshes above 10 get a warning.
  double boundary_area_ratio() const {
    if (boundary_.empty()) return 1.0;
    auto [lo, hi] = std::minmax_element(boundary_.begin(), boundary_.end(),
        [](const BoundaryFace& a, const BoundaryFace& b) { return a.area < b.area; });
    return hi->area / lo->area;
  }

  /// Barycentric-coordinate search; returns tet index and reference point.
  std::optional<std::pair<std::size_t, Vec3>> locate(const Vec3& x, double tol = 1e-12) const {
    if (box_ && cells_) {
      // Generated box meshes store the six tets of cell (i, j, k) contiguously.
      const std::array<int, 3> n{cells_->nx, cells_->ny, cells_->nz};
      std::array<int, 3> c;
      for (int d = 0; d < 3; ++d) {
        const double u = (x[d] - box_->lo[d]) / (box_->hi[d] - box_->lo[d]) * n[d];
        c[d] = std::clamp(static_cast<int>(std::floor(u)), 0, n[d] - 1);
      }
      const std::size_t cell = (static_cast<std::size_t>(c[2]) * n[1] + c[1]) * n[0] + c[0];
      for (std::size_t t = 6 * cell; t < 6 * cell + 6; ++t) {
        const auto& g = geometry_[t];
        const Vec3 xi = g.jac_inv * (x - g.origin);
        if (xi.minCoeff() >= -tol && xi.sum() <= 1.0 + tol) return std::make_pair(t, xi);
      }
    }
    for (std::size_t t = 0; t < tets_.size(); ++t) {
      const auto& g = geometry_[t];
      const Vec3 xi = g.jac_inv * (x - g.origin);
      if (xi.minCoeff() >= -tol && xi.sum() <= 1.0 + tol) return std::make_pair(t, xi);
    }
    return std::nullopt;
  }

  friend TetMesh build_box_mesh(const Box&, const CellCounts&);

 private:
  void finalize();

  std::vector<Vec3> vertices_;
  std::vector<std::array<int, 4>> tets_;
  std::vector<TetGeometry> geometry_;
  std::vector<BoundaryFace> boundary_;
  double h_ = 0.0;
  std::optional<Box> box_;
  std::optional<CellCounts> cells_;
};

inline void TetMesh::finalize() {
  geometry_.clear();
  geometry_.reserve(tets_.size());
  h_ = 0.0;
  for (auto& tet : tets_) {
    for (int v : tet)
      if (v < 0 || v >= static_cast<int>(vertices_.size()))
        throw MeshFormatError("tet references vertex " + std::to_string(v));
    auto build = [&] {
      TetGeometry g;
      g.origin = vertices_[tet[0]];
      for (int k = 0; k < 3; ++k)
        g.jac.col(k) = vertices_[tet[k + 1]] - g.origin;
      g.det = g.jac.determinant();
      return g;
    };
    TetGeometry g = build();
    if (g.det < 0.0) {
      std::swap(tet[2], tet[3]);
      g = build();
    }
    if (!(g.det > 0.0)) throw MeshFormatError("degenerate tetrahedron");
    g.jac_inv = g.jac.inverse();
    geometry_.push_back(g);
    for (int a = 0; a < 4; ++a)
      for (int b = a + 1; b < 4; ++b)
        h_ = std::max(h_, (vertices_[tet[a]] -
                           vertices_[tet[b]]).norm());
  }

  // Faces referenced by exactly one tet form the boundary.
  std::map<std::array<int, 3>, std::vector<std::pair<int, int>>> faces;
  for (std::size_t t = 0; t < tets_.size(); ++t)
    for (int f = 0; f < 4; ++f) {
      std::array<int, 3> key;
      for (int k = 0; k < 3; ++k)
        key[k] = tets_[t][kTetFaces[f][k]];
      std::sort(key.begin(), key.end());
      faces[key].emplace_back(static_cast<int>(t), f);
    }
  boundary_.clear();
  for (const auto& [key, owners] : faces) {
    if (owners.size() > 2) throw MeshFormatError("face shared by more than two tets");
    if (owners.size() != 1) continue;
    const auto [t, f] = owners.front();
    const auto& tet = tets_[t];
    BoundaryFace bf;
    bf.tet = t;
    bf.local_face = f;
    for (int k = 0; k < 3; ++k)
      bf.vertices[k] = tet[kTetFaces[f][k]];
    const Vec3& a = vertices_[bf.vertices[0]];
    const Vec3& b = vertices_[bf.vertices[1]];
    const Vec3& c = vertices_[bf.vertices[2]];
    Vec3 n = (b - a).cross(c - a);
    bf.area = 0.5 * n.norm();
    n.normalize();
    const Vec3& opposite = vertices_[tet[f]];
    if (n.dot(a - opposite) < 0.0) n = -n;
    bf.normal = n;
    boundary_.push_back(bf);
  }
}

/// nx*ny*nz hexahedra, each split into six tets sharing the cell main diagonal.
inline TetMesh build_box_mesh(const Box& box, const CellCounts& n) {
  if (n.nx < 1 || n.ny < 1 || n.nz < 1) throw DegenerateBox("cell counts must be >= 1");
  for (int d = 0; d < 3; ++d)
    if (!(box.hi[d] > box.lo[d])) throw DegenerateBox("empty extent along axis " + std::to_string(d));

  const int sx = n.nx + 1, sy = n.ny + 1, sz = n.nz + 1;
  auto vid = [&](int i, int j, int k) { return (k * sy + j) * sx + i; };

  std::vector<Vec3> vertices;
  vertices.reserve(sx * sy * sz);
  for (int k = 0; k < sz; ++k)
    for (int j = 0; j < sy; ++j)
      for (int i = 0; i < sx; ++i)
        vertices.emplace_back(box.lo[0] + (box.hi[0] - box.lo[0]) * i / n.nx,
                              box.lo[1] + (box.hi[1] - box.lo[1]) * j / n.ny,
                              box.lo[2] + (box.hi[2] - box.lo[2]) * k / n.nz);

  // Kuhn split: one tet per ordering of the three axis steps from corner
  // (0,0,0) to corner (1,1,1).
  static constexpr std::array<std::array<int, 3>, 6> perms{{
      {0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  std::vector<std::array<int, 4>> tets;
  tets.reserve(6 * n.nx * n.ny * n.nz);
  for (int k = 0; k < n.nz; ++k)
    for (int j = 0; j < n.ny; ++j)
      for (int i = 0; i < n.nx; ++i)
        for (const auto& perm : perms) {
          std::array<int, 3> c{i, j, k};
          std::array<int, 4> tet;
          tet[0] = vid(c[0], c[1], c[2]);
          for (int s = 0; s < 3; ++s) {
            ++c[perm[s]];
            tet[s + 1] = vid(c[0], c[1], c[2]);
          }
          tets.push_back(tet);
        }

  TetMesh mesh(std::move(vertices), std::move(tets));
  mesh.box_ = box;
  mesh.cells_ = n;
  return mesh;
}

/// Rebuilds a box mesh with every cell count doubled.
inline TetMesh refine_uniform(const TetMesh& mesh) {
  if (!mesh.box() || !mesh.cells())
    throw InvalidParameter("uniform refinement is only available for generated box meshes");
  const auto& c = *mesh.cells();
  return build_box_mesh(*mesh.box(), {2 * c.nx, 2 * c.ny, 2 * c.nz});
}

/// Oriented boundary triangles (the boundary face list of the mesh).
inline const std::vector<BoundaryFace>& boundary_quadrature_faces(const TetMesh& mesh) {
  return mesh.boundary_faces();
}

// Plain-text format:
//   tetmesh v1
//   <nv>
//   x y z            (nv lines)
//   <nt>
//   a b c d          (nt lines, 0-based)
inline void write_tetmesh(std::ostream& os, const TetMesh& mesh) {
  os << "tetmesh v1\n" << mesh.num_vertices() << "\n";
  os.precision(17);
  for (const auto& v : mesh.vertices()) os << v[0] << " " << v[1] << " " << v[2] << "\n";
  os << mesh.num_tets() << "\n";
  for (const auto& t : mesh.tets()) os << t[0] << " " << t[1] << " " << t[2] << " " << t[3] << "\n";
}

inline TetMesh read_tetmesh(std::istream& is) {
  std::string tag, version;
  if (!(is >> tag >> version) || tag != "tetmesh" || version != "v1")
    throw MeshFormatError("expected header 'tetmesh v1'");
  long nv = -1;
  if (!(is >> nv) || nv < 4) throw MeshFormatError("bad vertex count");
  std::vector<Vec3> vertices(nv);
  for (auto& v : vertices)
    if (!(is >> v[0] >> v[1] >> v[2])) throw MeshFormatError("truncated vertex list");
  long nt = -1;
  if (!(is >> nt) || nt < 1) throw MeshFormatError("bad tet count");
  std::vector<std::array<int, 4>> tets(nt);
  for (auto& t : tets)
    if (!(is >> t[0] >> t[1] >> t[2] >> t[3])) throw MeshFormatError("truncated tet list");
  return TetMesh(std::move(vertices), std::move(tets));
}

}  // namespace sp3
