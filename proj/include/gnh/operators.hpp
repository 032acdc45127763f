#pragma once

/// Discrete exterior-calculus operators on a Grid: gradient, curl, weak
/// divergence, Laplacians, and boundary traces, with lumped (diagonal) mass
/// matrices as the discrete L2 inner products.

#include "gnh/grid.hpp"

#include <Eigen/Sparse>

#include <cmath>
#include <string>

namespace gnh {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

enum class ScalarBc { Dirichlet, Neumann, Robin };
enum class VectorBc { Relative, Absolute };

inline std::string to_string(ScalarBc b) {
  switch (b) {
    case ScalarBc::Dirichlet: return "dirichlet";
    case ScalarBc::Neumann: return "neumann";
    case ScalarBc::Robin: return "robin";
  }
  return "dirichlet";
}

inline std::string to_string(VectorBc b) { return b == VectorBc::Relative ? "relative" : "absolute"; }

struct BoundaryConditionSpec {
  ScalarBc scalar = ScalarBc::Dirichlet;
  /// Robin coefficient, one value per boundary node or a single broadcast value. Must be <= 0.
  std::vector<double> robin_b;
  VectorBc vector = VectorBc::Relative;
};

/// Which active entities of a kind a field lives on.
enum class Subset { All, Interior, Boundary };

/// A set of degrees of freedom: a subset of one entity kind on a grid.
class EntitySpace {
 public:
  EntitySpace() = default;
  EntitySpace(GridPtr grid, EntityKind kind, Subset subset) : grid_(std::move(grid)), kind_(kind), subset_(subset) {
    const EntityTable& t = grid_->table(kind_);
    for (int e = 0; e < t.size(); ++e) {
      const bool keep = subset_ == Subset::All || (subset_ == Subset::Interior && !t.boundary[e]) ||
                        (subset_ == Subset::Boundary && t.boundary[e]);
      if (keep) entities_.push_back(e);
    }
    mass_.resize(size());
    for (int i = 0; i < size(); ++i) mass_(i) = t.mass(entities_[i]);
  }

  const GridPtr& grid() const { return grid_; }
  EntityKind kind() const { return kind_; }
  Subset subset() const { return subset_; }
  int size() const { return static_cast<int>(entities_.size()); }
  /// Active-entity index of each degree of freedom.
  const std::vector<int>& entities() const { return entities_; }
  const Eigen::VectorXd& mass() const { return mass_; }

  /// Selection matrix: active entities of this kind -> this space.
  SparseMatrix restriction() const {
    SparseMatrix R(size(), grid_->table(kind_).size());
    std::vector<Triplet> t;
    for (int i = 0; i < size(); ++i) t.emplace_back(i, entities_[i], 1.0);
    R.setFromTriplets(t.begin(), t.end());
    return R;
  }

  /// Zero-extension of a field on this space to all active entities.
  Eigen::VectorXd extend(const Eigen::VectorXd& u) const {
    Eigen::VectorXd full = Eigen::VectorXd::Zero(grid_->table(kind_).size());
    for (int i = 0; i < size(); ++i) full(entities_[i]) = u(i);
    return full;
  }

  Eigen::VectorXd restrict(const Eigen::VectorXd& full) const {
    Eigen::VectorXd u(size());
    for (int i = 0; i < size(); ++i) u(i) = full(entities_[i]);
    return u;
  }

  bool operator==(const EntitySpace& o) const {
    return grid_ == o.grid_ && kind_ == o.kind_ && subset_ == o.subset_;
  }

 private:
  GridPtr grid_;
  EntityKind kind_ = EntityKind::Node;
  Subset subset_ = Subset::All;
  std::vector<int> entities_;
  Eigen::VectorXd mass_;
};

struct DiscreteOperator {
  EntitySpace domain;
  EntitySpace codomain;
  SparseMatrix matrix;

  Eigen::VectorXd apply(const Eigen::VectorXd& u) const {
    if (u.size() != domain.size()) throw ShapeError("operator applied to field of wrong size");
    return matrix * u;
  }
};

inline SparseMatrix diag(const Eigen::VectorXd& d) {
  SparseMatrix D(d.size(), d.size());
  std::vector<Triplet> t;
  for (Eigen::Index i = 0; i < d.size(); ++i) t.emplace_back(i, i, d(i));
  D.setFromTriplets(t.begin(), t.end());
  return D;
}

inline Eigen::VectorXd inverse(const Eigen::VectorXd& d) { return d.cwiseInverse(); }

/// Spaces fixed by a boundary condition.
inline Subset node_subset(ScalarBc bc) { return bc == ScalarBc::Dirichlet ? Subset::Interior : Subset::All; }
inline Subset node_subset(VectorBc bc) { return bc == VectorBc::Relative ? Subset::Interior : Subset::All; }
inline Subset edge_subset(VectorBc bc) { return bc == VectorBc::Relative ? Subset::Interior : Subset::All; }

namespace detail {

inline SparseMatrix grad_full(const Grid& g) {
  const auto& E = g.edges();
  SparseMatrix G(E.size(), g.nodes().size());
  std::vector<Triplet> t;
  for (int e = 0; e < E.size(); ++e) {
    const int a = E.axis[e];
    auto p = E.pos[e];
    const int n0 = g.node_at(p);
    p[a] += 1;
    const int n1 = g.node_at(p);
    t.emplace_back(e, n0, -1.0 / g.h(a));
    t.emplace_back(e, n1, 1.0 / g.h(a));
  }
  G.setFromTriplets(t.begin(), t.end());
  return G;
}

// Circulation around each two-dimensional entity divided by its area.
inline SparseMatrix curl_full(const Grid& g) {
  if (g.dim() < 2) throw std::invalid_argument("curl requires a 2-D or 3-D grid");
  const auto& F = g.faces();
  SparseMatrix C(F.size(), g.edges().size());
  std::vector<Triplet> t;
  for (int f = 0; f < F.size(); ++f) {
    const int a = F.axis[f];
    const int b = (a + 1) % 3, c = (a + 2) % 3;
    const double area = g.h(b) * g.h(c);
    const auto& p = F.pos[f];
    auto shift = [&](int axis) {
      auto q = p;
      q[axis] += 1;
      return q;
    };
    t.emplace_back(f, g.edge_at(b, p), g.h(b) / area);
    t.emplace_back(f, g.edge_at(c, shift(b)), g.h(c) / area);
    t.emplace_back(f, g.edge_at(b, shift(c)), -g.h(b) / area);
    t.emplace_back(f, g.edge_at(c, p), -g.h(c) / area);
  }
  C.setFromTriplets(t.begin(), t.end());
  return C;
}

inline DiscreteOperator restrict_operator(const SparseMatrix& full, const EntitySpace& from, const EntitySpace& to) {
  SparseMatrix M = to.restriction() * full * SparseMatrix(from.restriction().transpose());
  M.prune(0.0);
  return {from, to, M};
}

}  // namespace detail

inline EntitySpace node_space(const GridPtr& g, Subset s = Subset::All) { return {g, EntityKind::Node, s}; }
inline EntitySpace edge_space(const GridPtr& g, Subset s = Subset::All) { return {g, EntityKind::Edge, s}; }
inline EntitySpace face_space(const GridPtr& g) { return {g, EntityKind::Face, Subset::All}; }

/// Gradient from `nodes` to `edges` (both default to all active entities).
inline DiscreteOperator build_grad(const GridPtr& g, Subset nodes = Subset::All, Subset edges = Subset::All) {
  return detail::restrict_operator(detail::grad_full(*g), node_space(g, nodes), edge_space(g, edges));
}

inline DiscreteOperator build_curl(const GridPtr& g, Subset edges = Subset::All) {
  return detail::restrict_operator(detail::curl_full(*g), edge_space(g, edges), face_space(g));
}

/// Weak divergence D = -M_n^{-1} G^T M_e on the spaces fixed by the vector bc.
/// Relative: interior edges to interior nodes. Absolute: all edges to all nodes.
inline DiscreteOperator build_weak_div(const GridPtr& g, VectorBc bc) {
  const auto G = build_grad(g, node_subset(bc), edge_subset(bc));
  SparseMatrix D = -(diag(inverse(G.domain.mass())) * SparseMatrix(G.matrix.transpose()) * diag(G.codomain.mass()));
  return {G.codomain, G.domain, D};
}

/// Stiffness K = G^T M_e G (+ Robin boundary term) on the node space of the bc.
inline SparseMatrix scalar_stiffness(const GridPtr& g, const BoundaryConditionSpec& bc) {
  const auto G = build_grad(g, node_subset(bc.scalar), Subset::All);
  SparseMatrix K = SparseMatrix(G.matrix.transpose()) * diag(G.codomain.mass()) * G.matrix;
  if (bc.scalar == ScalarBc::Robin) {
    const EntitySpace nodes = G.domain;
    const Eigen::VectorXd& s = g->surface_weights();
    std::vector<int> boundary;
    for (int i = 0; i < nodes.size(); ++i)
      if (g->nodes().boundary[nodes.entities()[i]]) boundary.push_back(i);
    const auto& B = bc.robin_b;
    if (B.size() != 1 && B.size() != boundary.size())
      throw ShapeError("Robin coefficient needs one value or one per boundary node (" + std::to_string(boundary.size()) +
                       "), got " + std::to_string(B.size()));
    Eigen::VectorXd extra = Eigen::VectorXd::Zero(nodes.size());
    for (std::size_t k = 0; k < boundary.size(); ++k) {
      const double b = B.size() == 1 ? B[0] : B[k];
      if (b > 0.0) throw std::invalid_argument("Robin coefficient must be nonpositive");
      extra(boundary[k]) = -b * s(nodes.entities()[boundary[k]]);
    }
    K += diag(extra);
  }
  return K;
}

/// Scalar Laplacian -M^{-1} K on the node space of the bc.
inline DiscreteOperator build_scalar_laplacian(const GridPtr& g, const BoundaryConditionSpec& bc) {
  const EntitySpace nodes = node_space(g, node_subset(bc.scalar));
  SparseMatrix L = -(diag(inverse(nodes.mass())) * scalar_stiffness(g, bc));
  return {nodes, nodes, L};
}

/// Curl-curl stiffness C^T M_f C on the edge space of the bc.
inline SparseMatrix curl_curl_stiffness(const GridPtr& g, VectorBc bc) {
  const auto C = build_curl(g, edge_subset(bc));
  return SparseMatrix(C.matrix.transpose()) * diag(C.codomain.mass()) * C.matrix;
}

/// M_e^{-1} C^T M_f C on the edge space of the bc.
inline DiscreteOperator build_curl_curl(const GridPtr& g, VectorBc bc) {
  const EntitySpace edges = edge_space(g, edge_subset(bc));
  SparseMatrix K = diag(inverse(edges.mass())) * curl_curl_stiffness(g, bc);
  return {edges, edges, K};
}

/// Hodge-Laplacian stiffness C^T M_f C + M_e G M_n^{-1} G^T M_e on edges.
/// Its kernel is the space of discrete harmonic fields for the bc.
inline SparseMatrix vector_laplacian_stiffness(const GridPtr& g, VectorBc bc) {
  const auto G = build_grad(g, node_subset(bc), edge_subset(bc));
  const Eigen::VectorXd& me = G.codomain.mass();
  SparseMatrix MG = diag(me) * G.matrix;
  SparseMatrix K = SparseMatrix(MG * diag(inverse(G.domain.mass())) * SparseMatrix(MG.transpose()));
  if (g->dim() >= 2) K += curl_curl_stiffness(g, bc);
  return K;
}

enum class TraceKind { Nodal, Tangential, Normal };

/// Boundary traces on all active entities.
/// Nodal: restriction to boundary nodes. Tangential: restriction to boundary edges.
/// Normal: boundary flux (G^T M_e u)_i / s_i at boundary nodes, so that
/// u^T M_e G phi = -sum_{interior i} m_i (D_I u)_i phi_i + sum_{boundary i} s_i phi_i (gamma_n u)_i
/// with D_I the relative weak divergence.
inline DiscreteOperator build_trace(const GridPtr& g, TraceKind kind) {
  switch (kind) {
    case TraceKind::Nodal: {
      const auto all = node_space(g), bnd = node_space(g, Subset::Boundary);
      return {all, bnd, bnd.restriction()};
    }
    case TraceKind::Tangential: {
      const auto all = edge_space(g), bnd = edge_space(g, Subset::Boundary);
      return {all, bnd, bnd.restriction()};
    }
    case TraceKind::Normal: {
      const auto G = build_grad(g);
      const auto bnd = node_space(g, Subset::Boundary);
      Eigen::VectorXd inv_s(bnd.size());
      for (int i = 0; i < bnd.size(); ++i) inv_s(i) = 1.0 / g->surface_weights()(bnd.entities()[i]);
      SparseMatrix T = diag(inv_s) * bnd.restriction() * SparseMatrix(G.matrix.transpose()) * diag(G.codomain.mass());
      return {G.codomain, bnd, T};
    }
  }
  throw std::invalid_argument("unknown trace kind");
}

}  // namespace gnh
