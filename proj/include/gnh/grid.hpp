#pragma once

/// Uniform tensor-product grids in 1, 2 or 3 dimensions, with an optional
/// rectangular hole of cells in 2-D.
///
/// Entities are nodes, edges, faces (3-D only) and cells. In 2-D the
/// two-dimensional entities are the cells, so curl maps edges to cells.
/// Within a kind, active entities are ordered lexicographically with x
/// fastest; edges (and 3-D faces) are grouped by axis, x first.

#include "gnh/errors.hpp"

#include <Eigen/Dense>

#include <array>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gnh {

enum class EntityKind { Node, Edge, Face };

inline std::string to_string(EntityKind k) {
  switch (k) {
    case EntityKind::Node: return "node";
    case EntityKind::Edge: return "edge";
    case EntityKind::Face: return "face";
  }
  return "node";
}

/// Cells [lo, hi) along each axis.
struct CellBox {
  std::array<int, 3> lo{0, 0, 0};
  std::array<int, 3> hi{0, 0, 0};
};

struct GridSpec {
  int dim = 1;
  std::array<int, 3> cells{2, 1, 1};
  std::array<double, 3> spacing{0.5, 1.0, 1.0};
  std::optional<CellBox> hole;

  /// n cells per axis on the unit cube.
  static GridSpec unit(int dim, int n) {
    GridSpec g;
    g.dim = dim;
    for (int a = 0; a < 3; ++a) {
      g.cells[a] = a < dim ? n : 1;
      g.spacing[a] = a < dim ? 1.0 / n : 1.0;
    }
    return g;
  }

  void validate() const {
    if (dim < 1 || dim > 3) throw std::invalid_argument("grid dimension must be 1, 2 or 3");
    for (int a = 0; a < dim; ++a) {
      if (cells[a] < 2) throw std::invalid_argument("grid needs at least 2 cells per axis");
      if (!(spacing[a] > 0.0)) throw std::invalid_argument("grid spacing must be positive");
    }
    if (hole) {
      if (dim != 2) throw std::invalid_argument("holes are supported on 2-D grids only");
      for (int a = 0; a < 2; ++a) {
        if (hole->lo[a] < 1 || hole->hi[a] > cells[a] - 1 || hole->lo[a] >= hole->hi[a])
          throw std::invalid_argument("hole must be a nonempty box strictly inside the grid");
      }
    }
  }
};

/// Active entities of one kind with their geometry.
struct EntityTable {
  std::vector<int> lattice;        // lattice index of each active entity
  std::vector<int> compact;        // lattice index -> active index, -1 if inactive
  std::vector<int> axis;           // edge direction or face normal; 0 for nodes and 2-D cells
  std::vector<std::array<int, 3>> pos;
  Eigen::VectorXd mass;
  std::vector<bool> boundary;

  int size() const { return static_cast<int>(lattice.size()); }
};

class Grid {
 public:
  explicit Grid(GridSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    for (int a = 0; a < 3; ++a) {
      ncell_[a] = a < spec_.dim ? spec_.cells[a] : 1;
      nnode_[a] = a < spec_.dim ? spec_.cells[a] + 1 : 1;
      h_[a] = a < spec_.dim ? spec_.spacing[a] : 1.0;
    }
    cell_volume_ = 1.0;
    for (int a = 0; a < spec_.dim; ++a) cell_volume_ *= h_[a];
    build_cells();
    build_nodes();
    build_edges();
    build_faces();
    build_surface_weights();
  }

  const GridSpec& spec() const { return spec_; }
  int dim() const { return spec_.dim; }
  double h(int axis) const { return h_[axis]; }
  double cell_volume() const { return cell_volume_; }
  double min_spacing() const {
    double m = h_[0];
    for (int a = 1; a < spec_.dim; ++a) m = std::min(m, h_[a]);
    return m;
  }

  const EntityTable& nodes() const { return nodes_; }
  const EntityTable& edges() const { return edges_; }
  /// Two-dimensional entities: faces in 3-D, cells in 2-D. Empty in 1-D.
  const EntityTable& faces() const { return faces_; }
  const EntityTable& table(EntityKind k) const {
    switch (k) {
      case EntityKind::Node: return nodes_;
      case EntityKind::Edge: return edges_;
      case EntityKind::Face: return faces_;
    }
    return nodes_;
  }

  int num_active_cells() const { return num_active_cells_; }
  bool cell_active(int i, int j, int k) const {
    if (i < 0 || j < 0 || k < 0 || i >= ncell_[0] || j >= ncell_[1] || k >= ncell_[2]) return false;
    return cell_active_[cell_index(i, j, k)];
  }

  /// Lumped boundary measure at each node (zero at interior nodes).
  const Eigen::VectorXd& surface_weights() const { return surface_; }

  /// Active node index at lattice position p, -1 if none.
  int node_at(const std::array<int, 3>& p) const {
    for (int a = 0; a < 3; ++a)
      if (p[a] < 0 || p[a] >= nnode_[a]) return -1;
    return nodes_.compact[node_lattice(p)];
  }

  /// Active edge index along `axis` starting at lattice node p, -1 if none.
  int edge_at(int axis, const std::array<int, 3>& p) const {
    if (axis >= spec_.dim) return -1;
    std::array<int, 3> ext = nnode_;
    ext[axis] = ncell_[axis];
    for (int a = 0; a < 3; ++a)
      if (p[a] < 0 || p[a] >= ext[a]) return -1;
    return edges_.compact[edge_offset_[axis] + flat(p, ext)];
  }

  /// Coordinates of a node.
  std::array<double, 3> node_coords(int node) const {
    const auto& p = nodes_.pos[node];
    return {p[0] * h_[0], p[1] * h_[1], p[2] * h_[2]};
  }

  /// Midpoint of an edge.
  std::array<double, 3> edge_midpoint(int edge) const {
    const auto& p = edges_.pos[edge];
    std::array<double, 3> x{p[0] * h_[0], p[1] * h_[1], p[2] * h_[2]};
    x[edges_.axis[edge]] += 0.5 * h_[edges_.axis[edge]];
    return x;
  }

 private:
  static int flat(const std::array<int, 3>& p, const std::array<int, 3>& ext) {
    return p[0] + ext[0] * (p[1] + ext[1] * p[2]);
  }
  int cell_index(int i, int j, int k) const { return i + ncell_[0] * (j + ncell_[1] * k); }
  int node_lattice(const std::array<int, 3>& p) const { return flat(p, nnode_); }

  void build_cells() {
    cell_active_.assign(static_cast<std::size_t>(ncell_[0] * ncell_[1] * ncell_[2]), true);
    if (spec_.hole) {
      const auto& b = *spec_.hole;
      for (int j = b.lo[1]; j < b.hi[1]; ++j)
        for (int i = b.lo[0]; i < b.hi[0]; ++i) cell_active_[cell_index(i, j, 0)] = false;
    }
    num_active_cells_ = 0;
    for (bool a : cell_active_) num_active_cells_ += a ? 1 : 0;
  }

  // Count active cells among those adjacent to an entity at lattice position p.
  // `free` marks axes along which the adjacent cells sit at p - 1 and p.
  int count_adjacent(const std::array<int, 3>& p, const std::array<bool, 3>& free) const {
    int count = 0;
    for (int dz = 0; dz <= (free[2] ? 1 : 0); ++dz)
      for (int dy = 0; dy <= (free[1] ? 1 : 0); ++dy)
        for (int dx = 0; dx <= (free[0] ? 1 : 0); ++dx)
          if (cell_active(p[0] - dx, p[1] - dy, p[2] - dz)) ++count;
    return count;
  }

  void fill(EntityTable& t, int lattice, int axis, const std::array<int, 3>& p, const std::array<bool, 3>& free,
            int full) {
    const int active = count_adjacent(p, free);
    if (active == 0) {
      t.compact.push_back(-1);
      return;
    }
    t.compact.push_back(t.size());
    t.lattice.push_back(lattice);
    t.axis.push_back(axis);
    t.pos.push_back(p);
    t.boundary.push_back(active < full);
    masses_.push_back(cell_volume_ * active / full);
  }

  void finish(EntityTable& t) {
    t.mass = Eigen::Map<Eigen::VectorXd>(masses_.data(), static_cast<Eigen::Index>(masses_.size()));
    masses_.clear();
  }

  void build_nodes() {
    std::array<bool, 3> free{};
    int full = 1;
    for (int a = 0; a < 3; ++a) {
      free[a] = a < spec_.dim;
      if (free[a]) full *= 2;
    }
    int lattice = 0;
    for (int k = 0; k < nnode_[2]; ++k)
      for (int j = 0; j < nnode_[1]; ++j)
        for (int i = 0; i < nnode_[0]; ++i) fill(nodes_, lattice++, 0, {i, j, k}, free, full);
    finish(nodes_);
  }

  void build_edges() {
    int lattice = 0;
    for (int axis = 0; axis < spec_.dim; ++axis) {
      edge_offset_[axis] = lattice;
      std::array<int, 3> ext = nnode_;
      ext[axis] = ncell_[axis];
      std::array<bool, 3> free{};
      int full = 1;
      for (int a = 0; a < 3; ++a) {
        free[a] = a < spec_.dim && a != axis;
        if (free[a]) full *= 2;
      }
      for (int k = 0; k < ext[2]; ++k)
        for (int j = 0; j < ext[1]; ++j)
          for (int i = 0; i < ext[0]; ++i) fill(edges_, lattice++, axis, {i, j, k}, free, full);
    }
    finish(edges_);
  }

  void build_faces() {
    if (spec_.dim == 1) {
      finish(faces_);
      return;
    }
    if (spec_.dim == 2) {
      int lattice = 0;
      for (int j = 0; j < ncell_[1]; ++j)
        for (int i = 0; i < ncell_[0]; ++i) fill(faces_, lattice++, 2, {i, j, 0}, {false, false, false}, 1);
      finish(faces_);
      return;
    }
    int lattice = 0;
    for (int axis = 0; axis < 3; ++axis) {
      std::array<int, 3> ext = ncell_;
      ext[axis] = nnode_[axis];
      std::array<bool, 3> free{};
      free[axis] = true;
      for (int k = 0; k < ext[2]; ++k)
        for (int j = 0; j < ext[1]; ++j)
          for (int i = 0; i < ext[0]; ++i) fill(faces_, lattice++, axis, {i, j, k}, free, 2);
    }
    finish(faces_);
  }

  // Boundary facets (entities of codimension one with a single active cell)
  // spread their measure evenly over their vertices.
  void build_surface_weights() {
    surface_ = Eigen::VectorXd::Zero(nodes_.size());
    if (spec_.dim == 1) {
      for (int n = 0; n < nodes_.size(); ++n)
        if (nodes_.boundary[n]) surface_(n) = 1.0;
      return;
    }
    const EntityTable& facets = spec_.dim == 2 ? edges_ : faces_;
    for (int f = 0; f < facets.size(); ++f) {
      const int axis = facets.axis[f];
      const auto& p = facets.pos[f];
      std::array<bool, 3> free{};
      if (spec_.dim == 2) {
        for (int a = 0; a < 2; ++a) free[a] = a != axis;
      } else {
        free[axis] = true;
      }
      if (count_adjacent(p, free) != 1) continue;
      std::vector<std::array<int, 3>> verts;
      double measure = 1.0;
      if (spec_.dim == 2) {
        measure = h_[axis];
        auto q = p;
        verts.push_back(q);
        q[axis] += 1;
        verts.push_back(q);
      } else {
        const int b = (axis + 1) % 3, c = (axis + 2) % 3;
        measure = h_[b] * h_[c];
        for (int db = 0; db <= 1; ++db)
          for (int dc = 0; dc <= 1; ++dc) {
            auto q = p;
            q[b] += db;
            q[c] += dc;
            verts.push_back(q);
          }
      }
      for (const auto& q : verts) surface_(node_at(q)) += measure / static_cast<double>(verts.size());
    }
  }

  GridSpec spec_;
  std::array<int, 3> ncell_{}, nnode_{};
  std::array<double, 3> h_{};
  std::array<int, 3> edge_offset_{0, 0, 0};
  double cell_volume_ = 1.0;
  std::vector<bool> cell_active_;
  int num_active_cells_ = 0;
  EntityTable nodes_, edges_, faces_;
  Eigen::VectorXd surface_;
  std::vector<double> masses_;
};

using GridPtr = std::shared_ptr<const Grid>;

inline GridPtr make_grid(const GridSpec& spec) { return std::make_shared<const Grid>(spec); }

}  // namespace gnh
