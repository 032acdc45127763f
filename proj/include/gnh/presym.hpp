#pragma once

/// Linear presymplectic systems and the constraint algorithm on affine subspaces.
///
/// Conventions: the flat map sends x to the covector x^T Omega, stored as the
/// column Omega^T x. Hamilton's equation on a subspace N reads
/// Omega^T X = A m + b for m in N and X tangent to N.

#include "gnh/errors.hpp"
#include "gnh/linalg.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace gnh {

inline double default_tolerance(Index n) { return 1e-10 * static_cast<double>(std::max<Index>(n, 1)); }

class PresymplecticForm {
 public:
  PresymplecticForm() = default;
  explicit PresymplecticForm(const Matrix& omega) {
    if (omega.rows() != omega.cols()) throw ShapeError("presymplectic form must be square");
    omega_ = 0.5 * (omega - omega.transpose());
    norm_ = spectral_norm(omega_);
  }

  const Matrix& matrix() const { return omega_; }
  Index dim() const { return omega_.rows(); }
  double norm() const { return norm_; }
  double operator()(const Vector& x, const Vector& y) const { return x.dot(omega_ * y); }
  Index rank(double tol) const { return numerical_rank(omega_, tol * norm_); }

 private:
  Matrix omega_;
  double norm_ = 0.0;
};

/// H(x) = 1/2 x^T A x + b^T x + c.
class QuadraticHamiltonian {
 public:
  QuadraticHamiltonian() = default;
  QuadraticHamiltonian(const Matrix& A, Vector b, double c = 0.0) : b_(std::move(b)), c_(c) {
    if (A.rows() != A.cols()) throw ShapeError("Hamiltonian Hessian must be square");
    if (b_.size() != A.rows()) throw ShapeError("Hamiltonian linear term has wrong length");
    A_ = 0.5 * (A + A.transpose());
    norm_ = spectral_norm(A_);
  }

  const Matrix& hessian() const { return A_; }
  const Vector& linear() const { return b_; }
  double constant() const { return c_; }
  Index dim() const { return A_.rows(); }
  double norm() const { return norm_; }

  double operator()(const Vector& x) const { return 0.5 * x.dot(A_ * x) + b_.dot(x) + c_; }
  Vector differential(const Vector& x) const { return A_ * x + b_; }

 private:
  Matrix A_;
  Vector b_;
  double c_ = 0.0;
  double norm_ = 0.0;
};

struct PresymplecticSystem {
  PresymplecticForm form;
  QuadraticHamiltonian hamiltonian;
  double tol = 0.0;

  PresymplecticSystem() = default;
  PresymplecticSystem(PresymplecticForm f, QuadraticHamiltonian h, double tolerance = -1.0)
      : form(std::move(f)), hamiltonian(std::move(h)), tol(tolerance) {
    if (form.dim() != hamiltonian.dim()) throw ShapeError("form and Hamiltonian dimensions differ");
    if (tol <= 0.0) tol = default_tolerance(form.dim());
  }

  Index dim() const { return form.dim(); }
  /// Cutoff for kernels derived from Omega.
  double form_threshold() const { return tol * form.norm(); }
  /// Cutoff for conditions derived from the Hessian.
  double hamiltonian_threshold() const { return tol * hamiltonian.norm(); }
};

/// {offset + basis * y}. Basis orthonormal, offset orthogonal to the basis.
class AffineSubspace {
 public:
  AffineSubspace() = default;

  AffineSubspace(Matrix basis, Vector offset, double tol) : basis_(std::move(basis)), offset_(std::move(offset)), tol_(tol) {
    if (basis_.rows() != offset_.size()) throw ShapeError("affine subspace: basis and offset sizes differ");
    const Index k = basis_.cols();
    if (k > 0 && (basis_.transpose() * basis_ - Matrix::Identity(k, k)).norm() > 1e-8)
      throw std::invalid_argument("affine subspace basis is not orthonormal");
    if (k > 0) offset_ -= basis_ * (basis_.transpose() * offset_);
  }

  static AffineSubspace whole(Index n, double tol) { return {Matrix::Identity(n, n), Vector::Zero(n), tol}; }

  static AffineSubspace empty(Index n, double tol) {
    AffineSubspace s(Matrix(n, 0), Vector::Zero(n), tol);
    s.empty_ = true;
    return s;
  }

  bool is_empty() const { return empty_; }
  Index ambient_dim() const { return offset_.size(); }
  /// -1 for the empty set.
  Index dim() const { return empty_ ? -1 : basis_.cols(); }
  const Matrix& basis() const { return basis_; }
  const Vector& offset() const { return offset_; }
  double tol() const { return tol_; }

  /// Threshold for geometric comparisons between subspaces.
  double compare_tol() const { return std::max(1e-8, 100.0 * tol_); }

  Vector point(const Vector& coords) const { return offset_ + basis_ * coords; }

  double distance(const Vector& x) const {
    const Vector d = x - offset_;
    return (d - basis_ * (basis_.transpose() * d)).norm();
  }

  bool contains(const Vector& x) const {
    if (empty_) return false;
    return distance(x) <= compare_tol() * std::max({1.0, x.norm(), offset_.norm()});
  }

  bool is_subspace_of(const AffineSubspace& other) const {
    if (empty_) return true;
    if (other.empty_) return false;
    return span_contains(other.basis_, basis_, compare_tol()) && other.contains(offset_);
  }

  bool equals(const AffineSubspace& other) const {
    if (empty_ || other.empty_) return empty_ == other.empty_;
    return dim() == other.dim() && is_subspace_of(other);
  }

 private:
  Matrix basis_;
  Vector offset_;
  double tol_ = 0.0;
  bool empty_ = false;
};

/// Covector of x under the form, as a column: x^T Omega.
inline Vector flat_map(const PresymplecticForm& form, const Vector& x) {
  if (x.size() != form.dim()) throw ShapeError("flat_map: vector length differs from form dimension");
  return form.matrix().transpose() * x;
}

/// Orthonormal basis of V^perp = {z : omega(v, z) = 0 for all v in V}.
inline Matrix symplectic_orthogonal(const PresymplecticForm& form, const Matrix& V, double tol) {
  if (V.rows() != form.dim()) throw ShapeError("symplectic_orthogonal: basis has wrong ambient dimension");
  return null_space(V.transpose() * form.matrix(), tol * form.norm());
}

/// Orthonormal basis of ker(omega restricted to span U) = TN ∩ TN^perp, in ambient coordinates.
inline Matrix restricted_kernel(const PresymplecticForm& form, const Matrix& U, double tol) {
  if (U.cols() == 0) return Matrix(U.rows(), 0);
  const Matrix restricted = U.transpose() * form.matrix() * U;
  Matrix basis = U * null_space(restricted, tol * form.norm());
  return basis;
}

/// The points of M where dH lies in the flat image of TM.
inline AffineSubspace solvability_subspace(const PresymplecticSystem& sys, const AffineSubspace& M) {
  if (M.ambient_dim() != sys.dim()) throw ShapeError("solvability_subspace: subspace has wrong ambient dimension");
  if (M.is_empty()) return M;
  const double tol = M.tol() > 0.0 ? M.tol() : sys.tol;
  const Matrix& U = M.basis();
  const Vector& o = M.offset();
  const Matrix& A = sys.hamiltonian.hessian();
  const Vector dh0 = sys.hamiltonian.differential(o);
  const double h_thr = tol * sys.hamiltonian.norm();
  const double res_thr =
      std::max(tol * (sys.hamiltonian.norm() * std::max(1.0, o.norm()) + sys.hamiltonian.linear().norm()),
               std::numeric_limits<double>::min());

  // covectors annihilating flat(TM): w with w^T Omega^T U = 0
  const Matrix image = sys.form.matrix().transpose() * U;
  const Matrix W = null_space(image.transpose(), tol * sys.form.norm());
  if (W.cols() == 0) return M;

  const Matrix S = W.transpose() * A * U;
  const Vector r = W.transpose() * dh0;
  if (U.cols() == 0) {
    if (r.norm() > res_thr) return AffineSubspace::empty(sys.dim(), tol);
    return M;
  }
  const Vector y0 = -pseudo_inverse(S, h_thr) * r;
  if ((S * y0 + r).norm() > res_thr) return AffineSubspace::empty(sys.dim(), tol);
  const Matrix Nk = null_space(S, h_thr);
  return AffineSubspace(U * Nk, o + U * y0, tol);
}

/// Affine solution X(m) = Xmat m + xoff of Hamilton's equation on N, plus the
/// directions along which X is undetermined (ker Omega ∩ TN).
struct HamiltonianVectorFieldSolution {
  Matrix Xmat;
  Vector xoff;
  Matrix gauge_basis;

  Vector operator()(const Vector& m) const { return Xmat * m + xoff; }
};

inline HamiltonianVectorFieldSolution hamiltonian_vector_field(const PresymplecticSystem& sys, const AffineSubspace& N) {
  if (N.is_empty()) throw std::invalid_argument("hamiltonian_vector_field: empty subspace");
  const double tol = N.tol() > 0.0 ? N.tol() : sys.tol;
  const Matrix& U = N.basis();
  const Matrix R = sys.form.matrix().transpose() * U;
  const double thr = tol * sys.form.norm();
  const Matrix Rp = pseudo_inverse(R, thr);
  HamiltonianVectorFieldSolution vf;
  vf.Xmat = U * (Rp * sys.hamiltonian.hessian());
  vf.xoff = U * (Rp * sys.hamiltonian.linear());
  vf.gauge_basis = U * null_space(R, thr);
  return vf;
}

struct ConstraintChainResult {
  std::vector<AffineSubspace> chain;
  AffineSubspace final;
  bool terminated = false;
  /// Number of subspaces M_1..M_n produced before M_{n+1} = M_n (or emptiness).
  int steps = 0;
  std::optional<HamiltonianVectorFieldSolution> vector_field;
  /// Basis of TN ∩ TN^perp on the final subspace.
  Matrix gauge_directions;

  Index gauge_count() const { return gauge_directions.cols(); }
  std::vector<Index> dims() const {
    std::vector<Index> d;
    for (const auto& m : chain) d.push_back(m.dim());
    return d;
  }
};

inline ConstraintChainResult constraint_chain(const PresymplecticSystem& sys, int max_steps = 64) {
  if (max_steps < 1) throw std::invalid_argument("constraint_chain: max_steps must be at least 1");
  const Index n = sys.dim();
  ConstraintChainResult res;
  AffineSubspace M = AffineSubspace::whole(n, sys.tol);
  res.chain.push_back(M);
  for (int step = 0; step < max_steps; ++step) {
    AffineSubspace next = solvability_subspace(sys, M);
    if (next.is_empty()) {
      res.chain.push_back(next);
      res.final = next;
      res.terminated = true;
      res.steps = static_cast<int>(res.chain.size());
      res.gauge_directions = Matrix(n, 0);
      return res;
    }
    if (next.dim() == M.dim()) {
      res.final = M;
      res.terminated = true;
      res.steps = static_cast<int>(res.chain.size());
      res.vector_field = hamiltonian_vector_field(sys, M);
      res.gauge_directions = restricted_kernel(sys.form, M.basis(), M.tol());
      return res;
    }
    res.chain.push_back(next);
    M = std::move(next);
  }
  res.final = M;
  res.terminated = false;
  res.steps = static_cast<int>(res.chain.size());
  res.gauge_directions = Matrix(n, 0);
  return res;
}

enum class SubmanifoldClass { Lagrangian, Isotropic, FirstClass, SecondClass, Mixed };

inline std::string to_string(SubmanifoldClass c) {
  switch (c) {
    case SubmanifoldClass::Lagrangian: return "Lagrangian";
    case SubmanifoldClass::Isotropic: return "Isotropic";
    case SubmanifoldClass::FirstClass: return "FirstClass";
    case SubmanifoldClass::SecondClass: return "SecondClass";
    case SubmanifoldClass::Mixed: return "Mixed";
  }
  return "Mixed";
}

struct ClassificationResult {
  SubmanifoldClass label = SubmanifoldClass::Mixed;
  bool perp_in_tangent = false;  // TN^perp ⊆ TN
  bool tangent_in_perp = false;  // TN ⊆ TN^perp
  Index tangent_dim = 0;
  Index perp_dim = 0;
  Index intersection_dim = 0;
};

/// Relation between TN and TN^perp. A trivial TN^perp counts as second class.
inline ClassificationResult classify_submanifold(const PresymplecticForm& form, const AffineSubspace& N) {
  if (N.is_empty()) throw std::invalid_argument("classify_submanifold: empty subspace");
  const double tol = N.tol() > 0.0 ? N.tol() : default_tolerance(form.dim());
  const double thr = tol * form.norm();
  const Matrix& U = N.basis();
  const Index k = U.cols();
  ClassificationResult c;
  c.tangent_dim = k;
  c.perp_dim = form.dim() - numerical_rank(U.transpose() * form.matrix(), thr);
  const Index restricted_rank = k == 0 ? 0 : numerical_rank(U.transpose() * form.matrix() * U, thr);
  c.intersection_dim = k - restricted_rank;
  c.perp_in_tangent = c.intersection_dim == c.perp_dim;
  c.tangent_in_perp = restricted_rank == 0;
  if (c.perp_in_tangent && c.tangent_in_perp)
    c.label = SubmanifoldClass::Lagrangian;
  else if (c.tangent_in_perp)
    c.label = SubmanifoldClass::Isotropic;
  else if (c.perp_dim == 0 || c.intersection_dim == 0)
    c.label = SubmanifoldClass::SecondClass;
  else if (c.perp_in_tangent)
    c.label = SubmanifoldClass::FirstClass;
  else
    c.label = SubmanifoldClass::Mixed;
  return c;
}

}  // namespace gnh
