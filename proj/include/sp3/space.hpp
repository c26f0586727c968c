#pragma once
// Continuous Lagrange spaces over a tet mesh and discrete fields on them.

#include <algorithm>
#include <array>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sp3/errors.hpp"
#include "sp3/mesh.hpp"
#include "sp3/reference_element.hpp"

namespace sp3 {

using ScalarFunction = std::function<double(const Vec3&)>;

class FemSpace {
 public:
  FemSpace(std::shared_ptr<const TetMesh> mesh, int degree) : mesh_(std::move(mesh)), element_(degree) {
    const int nb = element_.size();
    cell_dofs_.resize(mesh_->num_tets() * nb);
    vertex_dofs_.assign(mesh_->num_vertices(), -1);

    // A node is identified by the global vertices it is a combination of and
    // their barycentric weights, so neighbours agree on shared entities.
    using Key = std::array<int, 8>;
    std::map<Key, int> ids;
    for (std::size_t t = 0; t < mesh_->num_tets(); ++t) {
      const auto& tet = mesh_->tets()[t];
      for (int i = 0; i < nb; ++i) {
        const auto& a = element_.lattice()[i];
        std::array<std::pair<int, int>, 4> parts;
        for (int k = 0; k < 4; ++k) parts[k] = a[k] > 0 ? std::make_pair(tet[k], a[k]) : std::make_pair(-1, 0);
        std::sort(parts.begin(), parts.end());
        Key key;
        for (int k = 0; k < 4; ++k) {
          key[2 * k] = parts[k].first;
          key[2 * k + 1] = parts[k].second;
        }
        auto [it, inserted] = ids.try_emplace(key, static_cast<int>(ids.size()));
        if (inserted) {
          const auto& g = mesh_->geometry(t);
          dof_coords_.push_back(g.origin + g.jac * element_.node(i));
        }
        cell_dofs_[t * nb + i] = it->second;
        for (int k = 0; k < 4; ++k)
          if (a[k] == degree) vertex_dofs_[tet[k]] = it->second;
      }
    }
    ndofs_ = static_cast<int>(ids.size());

    boundary_dof_.assign(ndofs_, false);
    for (const auto& f : mesh_->boundary_faces()) {
      const int* dofs = cell_dofs(f.tet);
      for (int i = 0; i < nb; ++i)
        if (element_.lattice()[i][f.local_face] == 0) boundary_dof_[dofs[i]] = true;
    }
  }

  const TetMesh& mesh() const { return *mesh_; }
  const std::shared_ptr<const TetMesh>& mesh_ptr() const { return mesh_; }
  int degree() const { return element_.degree(); }
  const ReferenceElement& element() const { return element_; }
  int num_dofs() const { return ndofs_; }
  int dofs_per_cell() const { return element_.size(); }
  const int* cell_dofs(std::size_t t) const { return cell_dofs_.data() + t * element_.size(); }
  const std::vector<Vec3>& dof_coords() const { return dof_coords_; }
  int vertex_dof(std::size_t v) const { return vertex_dofs_[v]; }
  bool is_boundary_dof(int i) const { return boundary_dof_[i]; }

 private:
  std::shared_ptr<const TetMesh> mesh_;
  ReferenceElement element_;
  int ndofs_ = 0;
  std::vector<int> cell_dofs_;
  std::vector<int> vertex_dofs_;
  std::vector<Vec3> dof_coords_;
  std::vector<bool> boundary_dof_;
};

using SpacePtr = std::shared_ptr<const FemSpace>;

inline SpacePtr make_space(std::shared_ptr<const TetMesh> mesh, int degree) {
  return std::make_shared<const FemSpace>(std::move(mesh), degree);
}

enum class Unit { kelvin, intensity, none };

struct FemField {
  SpacePtr space;
  Eigen::VectorXd coeffs;
  Unit unit = Unit::none;

  FemField() = default;
  FemField(SpacePtr s, Unit u = Unit::none)
      : space(std::move(s)), coeffs(Eigen::VectorXd::Zero(space->num_dofs())), unit(u) {}
  FemField(SpacePtr s, Eigen::VectorXd c, Unit u = Unit::none)
      : space(std::move(s)), coeffs(std::move(c)), unit(u) {
    if (coeffs.size() != space->num_dofs()) throw InvalidParameter("coefficient length mismatch");
  }

  bool all_finite() const { return coeffs.allFinite(); }
};

namespace detail {
inline std::pair<std::size_t, Vec3> locate_or_throw(const TetMesh& mesh, const Vec3& x) {
  auto hit = mesh.locate(x, 1e-10);
  if (!hit) {
    std::ostringstream os;
    os << "(" << x.transpose() << ")";
    throw PointOutsideMesh(os.str());
  }
  return *hit;
}
}  // namespace detail

inline double evaluate(const FemField& field, const Vec3& x) {
  const auto& sp = *field.space;
  const auto [t, xi] = detail::locate_or_throw(sp.mesh(), x);
  const auto phi = sp.element().values(xi);
  const int* dofs = sp.cell_dofs(t);
  double v = 0.0;
  for (int i = 0; i < sp.dofs_per_cell(); ++i) v += field.coeffs[dofs[i]] * phi[i];
  return v;
}

/// Value restricted to a given tet (used to compare traces across faces).
inline double evaluate_in_cell(const FemField& field, std::size_t t, const Vec3& x) {
  const auto& sp = *field.space;
  const auto& g = sp.mesh().geometry(t);
  const auto phi = sp.element().values(g.jac_inv * (x - g.origin));
  const int* dofs = sp.cell_dofs(t);
  double v = 0.0;
  for (int i = 0; i < sp.dofs_per_cell(); ++i) v += field.coeffs[dofs[i]] * phi[i];
  return v;
}

inline Vec3 evaluate_gradient(const FemField& field, const Vec3& x) {
  const auto& sp = *field.space;
  const auto [t, xi] = detail::locate_or_throw(sp.mesh(), x);
  const auto G = sp.element().gradients(xi);
  const int* dofs = sp.cell_dofs(t);
  Vec3 ref = Vec3::Zero();
  for (int i = 0; i < sp.dofs_per_cell(); ++i) ref += field.coeffs[dofs[i]] * G.row(i).transpose();
  return sp.mesh().geometry(t).jac_inv.transpose() * ref;
}

/// Nodal interpolant I_h u.
inline FemField interpolate(const SpacePtr& space, const ScalarFunction& u, Unit unit = Unit::none) {
  FemField f(space, unit);
  for (int i = 0; i < space->num_dofs(); ++i) f.coeffs[i] = u(space->dof_coords()[i]);
  return f;
}

// Legacy ASCII VTK unstructured grid. With level 0 one value per mesh vertex
// is written; level r >= 1 subdivides every tet into r^3 linear sub-tets.
inline void write_vtk(std::ostream& os, const std::vector<std::pair<std::string, const FemField*>>& fields,
                      int level = 0, const std::string& title = "sp3rad") {
  if (fields.empty()) throw InvalidParameter("no fields to export");
  const TetMesh& mesh = fields.front().second->space->mesh();
  for (const auto& [name, f] : fields)
    if (&f->space->mesh() != &mesh) throw InvalidParameter("fields live on different meshes");

  std::vector<Vec3> points;
  std::vector<std::array<int, 4>> cells;
  std::vector<std::vector<double>> data(fields.size());

  if (level <= 0) {
    points = mesh.vertices();
    cells = mesh.tets();
    for (std::size_t k = 0; k < fields.size(); ++k) {
      const FemField& f = *fields[k].second;
      for (std::size_t v = 0; v < mesh.num_vertices(); ++v) data[k].push_back(f.coeffs[f.space->vertex_dof(v)]);
    }
  } else {
    // Lattice points 0 <= K <= J <= I <= r of the Kuhn simplex a >= b >= c,
    // mapped to the reference tet by xi = (a - b, b - c, c).
    const int r = level;
    std::map<std::array<int, 3>, int> local;
    std::vector<Vec3> ref_points;
    for (int I = 0; I <= r; ++I)
      for (int J = 0; J <= I; ++J)
        for (int K = 0; K <= J; ++K) {
          local[{I, J, K}] = static_cast<int>(ref_points.size());
          ref_points.emplace_back(double(I - J) / r, double(J - K) / r, double(K) / r);
        }
    std::vector<std::array<int, 4>> ref_cells;
    static constexpr std::array<std::array<int, 3>, 6> perms{{
        {0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < r; ++j)
        for (int k = 0; k < r; ++k)
          for (const auto& perm : perms) {
            std::array<int, 3> c{i, j, k};
            std::array<std::array<int, 3>, 4> v;
            v[0] = c;
            for (int s = 0; s < 3; ++s) {
              ++c[perm[s]];
              v[s + 1] = c;
            }
            Vec3 centroid = Vec3::Zero();
            for (const auto& q : v) centroid += Vec3(q[0], q[1], q[2]) / 4.0;
            if (!(centroid[0] >= centroid[1] && centroid[1] >= centroid[2])) continue;
            std::array<int, 4> cell;
            for (int s = 0; s < 4; ++s) cell[s] = local.at(v[s]);
            ref_cells.push_back(cell);
          }
    for (std::size_t t = 0; t < mesh.num_tets(); ++t) {
      const auto& g = mesh.geometry(t);
      const int base = static_cast<int>(points.size());
      for (const auto& xi : ref_points) points.push_back(g.origin + g.jac * xi);
      for (auto c : ref_cells) {
        for (auto& idx : c) idx += base;
        cells.push_back(c);
      }
      for (std::size_t k = 0; k < fields.size(); ++k) {
        const FemField& f = *fields[k].second;
        const int* dofs = f.space->cell_dofs(t);
        for (const auto& xi : ref_points) {
          const auto phi = f.space->element().values(xi);
          double v = 0.0;
          for (int i = 0; i < f.space->dofs_per_cell(); ++i) v += f.coeffs[dofs[i]] * phi[i];
          data[k].push_back(v);
        }
      }
    }
  }

  os << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  os.precision(12);
  os << "POINTS " << points.size() << " double\n";
  for (const auto& p : points) os << p[0] << " " << p[1] << " " << p[2] << "\n";
  os << "CELLS " << cells.size() << " " << 5 * cells.size() << "\n";
  for (const auto& c : cells) os << "4 " << c[0] << " " << c[1] << " " << c[2] << " " << c[3] << "\n";
  os << "CELL_TYPES " << cells.size() << "\n";
  for (std::size_t c = 0; c < cells.size(); ++c) os << "10\n";
  os << "POINT_DATA " << points.size() << "\n";
  for (std::size_t k = 0; k < fields.size(); ++k) {
    os << "SCALARS " << fields[k].first << " double 1\nLOOKUP_TABLE default\n";
    for (double v : data[k]) os << v << "\n";
  }
}

}  // namespace sp3
