#pragma once

/// Discrete Hodge decomposition of edge fields under relative or absolute
/// boundary conditions: u = grad(phi) + h + u_T, pairwise orthogonal in the
/// edge mass inner product, with h harmonic and u_T weakly divergence free.

#include "gnh/spectral.hpp"

#include <memory>

namespace gnh {

enum class PotentialGauge { ZeroMean, None };

struct HodgeOptions {
  /// Absolute bc leaves the potential defined up to a constant; ZeroMean fixes it.
  PotentialGauge gauge = PotentialGauge::ZeroMean;
  EigenOptions eigen;
};

/// M_e-orthonormal basis of discrete harmonic edge fields.
inline Matrix harmonic_basis(const GridPtr& g, VectorBc bc, const EigenOptions& opts = {}) {
  const EntitySpace edges = edge_space(g, edge_subset(bc));
  return kernel_modes(vector_laplacian_stiffness(g, bc), edges.mass(), opts).eigenvectors;
}

struct HodgeDecomposition {
  Vector longitudinal;
  Vector harmonic;
  Vector transverse;
  /// Node potential with grad(potential) = longitudinal, on the bc node space.
  Vector potential;
};

class HodgeProjector {
 public:
  HodgeProjector(GridPtr g, VectorBc bc, const HodgeOptions& opts = {})
      : grid_(std::move(g)), bc_(bc), gauge_(opts.gauge) {
    if (bc_ == VectorBc::Absolute && gauge_ == PotentialGauge::None)
      throw std::invalid_argument("singular Neumann Poisson problem: the zero-mean potential gauge is required");
    grad_ = build_grad(grid_, node_subset(bc_), edge_subset(bc_));
    const Vector& me = grad_.codomain.mass();
    weighted_div_ = SparseMatrix(grad_.matrix.transpose()) * diag(me);
    SparseMatrix L = weighted_div_ * grad_.matrix;
    if (bc_ == VectorBc::Absolute) {
      // pin the first node; the right-hand side is always compatible
      const Index n = L.rows();
      L = SparseMatrix(L.bottomRightCorner(n - 1, n - 1));
    }
    solver_ = std::make_shared<Eigen::SimplicialLDLT<SparseMatrix>>(L);
    if (solver_->info() != Eigen::Success) throw SpectralError("Poisson factorization failed");
    harmonic_ = gnh::harmonic_basis(grid_, bc_, opts.eigen);
  }

  const GridPtr& grid() const { return grid_; }
  VectorBc bc() const { return bc_; }
  const EntitySpace& edges() const { return grad_.codomain; }
  const EntitySpace& nodes() const { return grad_.domain; }
  const DiscreteOperator& grad() const { return grad_; }
  const Matrix& harmonic_basis() const { return harmonic_; }
  Index harmonic_dim() const { return harmonic_.cols(); }

  /// Potential phi minimizing ||u - grad phi||_M.
  Vector potential(const Vector& u) const {
    if (u.size() != edges().size())
      throw ShapeError("edge field has " + std::to_string(u.size()) + " entries, expected " + std::to_string(edges().size()));
    const Vector rhs = weighted_div_ * u;
    if (bc_ == VectorBc::Relative) return solver_->solve(rhs);
    const Index n = rhs.size();
    Vector phi = Vector::Zero(n);
    phi.tail(n - 1) = solver_->solve(rhs.tail(n - 1));
    const Vector& mn = nodes().mass();
    phi.array() -= phi.dot(mn) / mn.sum();
    return phi;
  }

  Vector longitudinal(const Vector& u) const { return grad_.matrix * potential(u); }

  Vector harmonic(const Vector& u) const {
    return harmonic_ * (harmonic_.transpose() * edges().mass().cwiseProduct(u));
  }

  HodgeDecomposition decompose(const Vector& u) const {
    HodgeDecomposition d;
    d.potential = potential(u);
    d.longitudinal = grad_.matrix * d.potential;
    d.harmonic = harmonic(u);
    d.transverse = u - d.longitudinal - d.harmonic;
    return d;
  }

  /// Remove the longitudinal part; the result satisfies the Gauss constraint.
  Vector project_physical(const Vector& P) const { return P - longitudinal(P); }

 private:
  GridPtr grid_;
  VectorBc bc_;
  PotentialGauge gauge_;
  DiscreteOperator grad_;
  SparseMatrix weighted_div_;
  std::shared_ptr<Eigen::SimplicialLDLT<SparseMatrix>> solver_;
  Matrix harmonic_;
};

inline HodgeDecomposition hodge_decompose(const GridPtr& g, VectorBc bc, const Vector& u, const HodgeOptions& opts = {}) {
  return HodgeProjector(g, bc, opts).decompose(u);
}

inline Vector project_physical(const GridPtr& g, VectorBc bc, const Vector& P) {
  return HodgeProjector(g, bc).project_physical(P);
}

/// Same decomposition through the dense eigenbasis of the Hodge Laplacian:
/// the longitudinal part of each mode is lambda^{-1} G M_n^{-1} G^T M_e v.
/// Kept as an independent cross-check for small grids.
inline HodgeDecomposition hodge_decompose_spectral(const GridPtr& g, VectorBc bc, const Vector& u) {
  const auto G = build_grad(g, node_subset(bc), edge_subset(bc));
  const Vector& me = G.codomain.mass();
  const auto d = eigendecompose(vector_laplacian_stiffness(g, bc), me);
  const Vector c = d.coefficients(u);
  const Matrix& V = d.eigenvectors;
  Vector inv = Vector::Zero(c.size());
  for (Index k = d.kernel_count; k < c.size(); ++k) inv(k) = c(k) / d.eigenvalues(k);
  const Vector w = V * inv;
  HodgeDecomposition out;
  out.potential = G.domain.mass().cwiseInverse().cwiseProduct(SparseMatrix(G.matrix.transpose()) * me.cwiseProduct(w));
  out.longitudinal = G.matrix * out.potential;
  out.harmonic = V.leftCols(d.kernel_count) * c.head(d.kernel_count);
  out.transverse = u - out.longitudinal - out.harmonic;
  return out;
}

/// Nonzero spectrum of curl-curl with M_e-orthonormal edge eigenvectors,
/// computed on the two-dimensional entities: for K_f w = lambda M_f w with
/// K_f = M_f C M_e^{-1} C^T M_f, the edge field M_e^{-1} C^T M_f w / sqrt(lambda)
/// is a transverse curl-curl eigenvector. The result is marked incomplete since
/// it omits the gradient and harmonic sectors.
inline SpectralDecomposition transverse_modes(const GridPtr& g, VectorBc bc, const EigenOptions& opts = {}) {
  const auto C = build_curl(g, edge_subset(bc));
  const Vector& me = C.domain.mass();
  const Vector& mf = C.codomain.mass();
  const SparseMatrix B = diag(mf) * C.matrix;  // faces x edges
  const SparseMatrix Kf = B * diag(me.cwiseInverse()) * SparseMatrix(B.transpose());
  const auto face = eigendecompose(Kf, mf, opts);
  const Index first = face.kernel_count;
  const Index m = face.modes() - first;
  SpectralDecomposition d;
  d.mass = me;
  d.eigenvalues = face.eigenvalues.tail(m);
  d.eigenvectors.resize(me.size(), m);
  const SparseMatrix lift = diag(me.cwiseInverse()) * SparseMatrix(B.transpose());
  for (Index k = 0; k < m; ++k)
    d.eigenvectors.col(k) = lift * face.eigenvectors.col(first + k) / std::sqrt(d.eigenvalues(k));
  d.kernel_count = 0;
  d.ktol = face.ktol;
  d.rtol = face.rtol;
  d.op_norm = face.op_norm;
  d.complete = false;
  return d;
}

}  // namespace gnh
