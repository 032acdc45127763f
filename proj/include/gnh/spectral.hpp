#pragma once

/// Mass-weighted eigendecompositions of nonnegative self-adjoint operators
/// Op = M^{-1} K, functional calculus on them, and the closed-form wave
/// propagator Q'' = -Op Q.
///
/// Small problems use a dense symmetric eigensolver on M^{-1/2} K M^{-1/2}.
/// Above the dense cutoff, a shift-invert Lanczos iteration with full
/// reorthogonalization in the M inner product computes a bounded number of
/// the smallest modes; Sylvester inertia counts from an LDL^T factorization
/// confirm that no eigenvalue in the returned window was missed.

#include "gnh/errors.hpp"
#include "gnh/linalg.hpp"
#include "gnh/operators.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>

namespace gnh {

enum class ComplementPolicy { Refuse, Drop };

struct EigenOptions {
  /// Eigenvalues with |lambda| <= ktol form the kernel. Negative: 1e-9 * ||Op||.
  double ktol = -1.0;
  /// Residual tolerance for accepting a Lanczos pair, relative to ||Op||.
  double rtol = 1e-9;
  Index dense_cutoff = 4000;
  /// Number of smallest modes to compute when the dense path is not used. Zero means none requested.
  Index mode_budget = 0;
  std::uint64_t seed = 1;
};

struct SpectralDecomposition {
  Vector eigenvalues;   // ascending
  Matrix eigenvectors;  // columns M-orthonormal
  Vector mass;          // diagonal of M
  Index kernel_count = 0;
  double ktol = 0.0;
  double rtol = 0.0;
  double op_norm = 0.0;
  bool complete = true;
  /// Relative size of an input component outside the computed modes that still counts as zero.
  double complement_tol = 1e-8;

  Index size() const { return mass.size(); }
  Index modes() const { return eigenvalues.size(); }

  /// Mode coefficients <v_k, x>_M.
  Vector coefficients(const Vector& x) const {
    if (x.size() != size()) throw ShapeError("field length differs from decomposition size");
    return eigenvectors.transpose() * mass.cwiseProduct(x);
  }

  double mass_norm(const Vector& x) const { return std::sqrt(x.dot(mass.cwiseProduct(x))); }
};

namespace detail {

inline double sparse_asymmetry(const SparseMatrix& K) {
  const SparseMatrix diff = K - SparseMatrix(K.transpose());
  return diff.norm();
}

// Gershgorin bound on the spectral radius of M^{-1/2} K M^{-1/2}.
inline double gershgorin_bound(const SparseMatrix& K, const Vector& mass) {
  Vector rows = Vector::Zero(K.rows());
  for (int k = 0; k < K.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(K, k); it; ++it)
      rows(it.row()) += std::abs(it.value()) / std::sqrt(mass(it.row()) * mass(it.col()));
  return rows.size() ? rows.maxCoeff() : 0.0;
}

// Number of eigenvalues of (K, M) strictly below mu.
inline Index count_below(const SparseMatrix& K, const Vector& mass, double mu) {
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(K - mu * diag(mass));
  if (ldlt.info() != Eigen::Success) throw SpectralError("inertia factorization failed");
  return static_cast<Index>((ldlt.vectorD().array() < 0.0).count());
}

inline void check_input(const SparseMatrix& K, const Vector& mass) {
  if (K.rows() != K.cols() || K.rows() != mass.size()) throw ShapeError("stiffness and mass sizes differ");
  if ((mass.array() <= 0.0).any()) throw SpectralError("mass matrix must be positive");
  const double nk = K.norm();
  if (sparse_asymmetry(K) > 1e-12 * std::max(nk, 1e-300))
    throw SpectralError("operator is not self-adjoint in the mass inner product");
}

inline void finish(SpectralDecomposition& d, const EigenOptions& opts) {
  d.ktol = opts.ktol >= 0.0 ? opts.ktol : 1e-9 * d.op_norm;
  d.rtol = opts.rtol;
  if (d.modes() > 0 && d.eigenvalues(0) < -d.ktol) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "operator not nonnegative: eigenvalue " << d.eigenvalues(0) << " below -ktol = " << -d.ktol;
    throw SpectralError(msg.str());
  }
  d.kernel_count = static_cast<Index>((d.eigenvalues.array().abs() <= d.ktol).count());
}

inline SpectralDecomposition dense_decomposition(const SparseMatrix& K, const Vector& mass, const EigenOptions& opts) {
  const Vector is = mass.cwiseSqrt().cwiseInverse();
  Matrix S = is.asDiagonal() * Matrix(K) * is.asDiagonal();
  S = 0.5 * (S + S.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(S);
  if (es.info() != Eigen::Success) throw SpectralError("dense eigensolver failed");
  SpectralDecomposition d;
  d.mass = mass;
  d.eigenvalues = es.eigenvalues();
  d.eigenvectors = is.asDiagonal() * es.eigenvectors();
  d.op_norm = d.eigenvalues.size() ? d.eigenvalues.cwiseAbs().maxCoeff() : 0.0;
  d.complete = true;
  finish(d, opts);
  return d;
}

// M-orthogonalize w against the columns of B (twice, for stability).
inline void orthogonalize(Vector& w, const Matrix& B, const Vector& mass) {
  if (B.cols() == 0) return;
  for (int pass = 0; pass < 2; ++pass) w -= B * (B.transpose() * mass.cwiseProduct(w));
}

struct RitzBatch {
  std::vector<double> values;
  std::vector<Vector> vectors;
};

// One shift-invert Lanczos run, deflated against `locked`. Returns converged pairs, smallest first.
inline RitzBatch lanczos_run(const SparseMatrix& K, const Vector& mass, const Eigen::SimplicialLDLT<SparseMatrix>& solver,
                             const Matrix& locked, Index want, Index krylov, double op_norm, double rtol,
                             std::mt19937_64& rng) {
  const Index n = K.rows();
  std::normal_distribution<double> normal;
  auto fresh = [&](const Matrix& basis, Index cols, Vector& out) {
    for (int attempt = 0; attempt < 4; ++attempt) {
      out.resize(n);
      for (Index i = 0; i < n; ++i) out(i) = normal(rng);
      orthogonalize(out, locked, mass);
      if (cols > 0) {
        const auto B = basis.leftCols(cols);
        for (int pass = 0; pass < 2; ++pass) out -= B * (B.transpose() * mass.cwiseProduct(out));
      }
      const double nrm = std::sqrt(out.dot(mass.cwiseProduct(out)));
      if (nrm > 1e-8) {
        out /= nrm;
        return true;
      }
    }
    return false;
  };

  Matrix V(n, krylov);
  Vector alpha = Vector::Zero(krylov), beta = Vector::Zero(krylov);
  Vector v;
  if (!fresh(V, 0, v)) return {};
  V.col(0) = v;
  Index m = krylov;
  for (Index j = 0; j < krylov; ++j) {
    Vector w = solver.solve(mass.cwiseProduct(V.col(j)));
    orthogonalize(w, locked, mass);
    alpha(j) = V.col(j).dot(mass.cwiseProduct(w));
    const auto B = V.leftCols(j + 1);
    for (int pass = 0; pass < 2; ++pass) w -= B * (B.transpose() * mass.cwiseProduct(w));
    orthogonalize(w, locked, mass);
    const double b = std::sqrt(std::max(0.0, w.dot(mass.cwiseProduct(w))));
    if (j + 1 == krylov) break;
    if (b <= 1e-10 * std::max(std::abs(alpha(j)), 1e-300)) {
      beta(j) = 0.0;
      if (!fresh(V, j + 1, v)) {
        m = j + 1;
        break;
      }
      V.col(j + 1) = v;
    } else {
      beta(j) = b;
      V.col(j + 1) = w / b;
    }
  }

  Matrix T = Matrix::Zero(m, m);
  for (Index j = 0; j < m; ++j) {
    T(j, j) = alpha(j);
    if (j + 1 < m) T(j, j + 1) = T(j + 1, j) = beta(j);
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(T);
  RitzBatch out;
  // largest theta <-> smallest lambda
  for (Index k = m - 1; k >= 0 && static_cast<Index>(out.values.size()) < want; --k) {
    Vector x = V.leftCols(m) * es.eigenvectors().col(k);
    x /= std::sqrt(x.dot(mass.cwiseProduct(x)));
    const Vector Kx = K * x;
    const double lambda = x.dot(Kx);
    const Vector r = Kx - lambda * mass.cwiseProduct(x);
    const double res = std::sqrt(r.dot(mass.cwiseInverse().cwiseProduct(r)));
    if (res > rtol * op_norm) break;
    out.values.push_back(lambda);
    out.vectors.push_back(std::move(x));
  }
  return out;
}

inline SpectralDecomposition lanczos_decomposition(const SparseMatrix& K, const Vector& mass, Index nev,
                                                   const EigenOptions& opts) {
  const Index n = K.rows();
  const double op_norm = gershgorin_bound(K, mass);
  const double ktol = opts.ktol >= 0.0 ? opts.ktol : 1e-9 * op_norm;
  const double shift = -std::max(1e-6 * op_norm, 10.0 * ktol);
  if (count_below(K, mass, -ktol) > 0) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "operator not nonnegative: an eigenvalue lies below -ktol = " << -ktol;
    throw SpectralError(msg.str());
  }
  Eigen::SimplicialLDLT<SparseMatrix> solver(K - shift * diag(mass));
  if (solver.info() != Eigen::Success) throw SpectralError("shifted factorization failed");

  std::mt19937_64 rng(opts.seed);
  std::vector<double> values;
  Matrix locked(n, 0);
  Index need = std::min(nev, n);
  for (int round = 0; round < 64 && need > 0; ++round) {
    Index krylov = std::min(n - locked.cols(), std::max<Index>(2 * need + 20, 40));
    RitzBatch batch;
    while (true) {
      batch = lanczos_run(K, mass, solver, locked, need, krylov, op_norm, opts.rtol, rng);
      if (!batch.values.empty() || krylov >= n - locked.cols()) break;
      krylov = std::min(n - locked.cols(), 2 * krylov);
    }
    if (batch.values.empty()) break;
    Matrix grown(n, locked.cols() + static_cast<Index>(batch.vectors.size()));
    grown.leftCols(locked.cols()) = locked;
    for (std::size_t k = 0; k < batch.vectors.size(); ++k) {
      Vector x = batch.vectors[k];
      orthogonalize(x, grown.leftCols(locked.cols() + static_cast<Index>(k)), mass);
      x /= std::sqrt(x.dot(mass.cwiseProduct(x)));
      grown.col(locked.cols() + static_cast<Index>(k)) = x;
      values.push_back(batch.values[k]);
    }
    locked = std::move(grown);

    // keep the nev smallest, then make sure none below the window edge was skipped
    std::vector<Index> order(values.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Index>(i);
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return values[a] < values[b]; });
    const Index have = std::min<Index>(nev, static_cast<Index>(order.size()));
    const double edge = values[order[have - 1]];
    const double slack = std::max(ktol, 1e-8 * std::abs(edge));
    const Index below = count_below(K, mass, edge + slack);
    Index found_below = 0;
    for (double v : values)
      if (v < edge + slack) ++found_below;
    need = std::max<Index>(nev - static_cast<Index>(values.size()), below - found_below);
    if (locked.cols() >= n) need = 0;
  }

  std::vector<Index> order(values.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Index>(i);
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return values[a] < values[b]; });
  const Index keep = std::min<Index>(nev, static_cast<Index>(order.size()));
  SpectralDecomposition d;
  d.mass = mass;
  d.eigenvalues.resize(keep);
  d.eigenvectors.resize(n, keep);
  for (Index k = 0; k < keep; ++k) {
    d.eigenvalues(k) = values[order[k]];
    d.eigenvectors.col(k) = locked.col(order[k]);
  }
  d.op_norm = op_norm;
  d.complete = keep == n;
  EigenOptions o = opts;
  o.ktol = ktol;
  finish(d, o);
  return d;
}

}  // namespace detail

/// Eigendecomposition of M^{-1} K. Dense up to opts.dense_cutoff, otherwise the
/// opts.mode_budget smallest modes by shift-invert Lanczos.
inline SpectralDecomposition eigendecompose(const SparseMatrix& K, const Vector& mass, const EigenOptions& opts = {}) {
  detail::check_input(K, mass);
  const Index n = K.rows();
  if (n <= opts.dense_cutoff || opts.mode_budget >= n) return detail::dense_decomposition(K, mass, opts);
  if (opts.mode_budget <= 0)
    throw std::invalid_argument("operator size " + std::to_string(n) + " exceeds the dense cutoff " +
                                std::to_string(opts.dense_cutoff) + "; a mode budget is required");
  return detail::lanczos_decomposition(K, mass, opts.mode_budget, opts);
}

/// Decomposition of a square operator Op = M^{-1} K given on a single entity space.
inline SpectralDecomposition eigendecompose(const DiscreteOperator& op, const EigenOptions& opts = {}) {
  if (!(op.domain == op.codomain)) throw ShapeError("eigendecompose needs an operator from a space to itself");
  const Vector& m = op.domain.mass();
  return eigendecompose(SparseMatrix(diag(m) * op.matrix), m, opts);
}

/// Basis of {x : K x = 0} from the pencil (K, M) using inertia to size it.
/// Works at any size: the kernel dimension comes from an LDL^T count, then
/// deflated Lanczos collects that many vectors.
inline SpectralDecomposition kernel_modes(const SparseMatrix& K, const Vector& mass, EigenOptions opts = {}) {
  detail::check_input(K, mass);
  const Index n = K.rows();
  if (n <= std::min<Index>(opts.dense_cutoff, 1000)) {
    auto full = detail::dense_decomposition(K, mass, opts);
    SpectralDecomposition d = full;
    d.eigenvalues = full.eigenvalues.head(full.kernel_count);
    d.eigenvectors = full.eigenvectors.leftCols(full.kernel_count);
    d.complete = full.kernel_count == n;
    return d;
  }
  const double op_norm = detail::gershgorin_bound(K, mass);
  const double ktol = opts.ktol >= 0.0 ? opts.ktol : 1e-9 * op_norm;
  const Index dim = detail::count_below(K, mass, ktol);
  if (dim == 0) {
    SpectralDecomposition d;
    d.mass = mass;
    d.eigenvalues.resize(0);
    d.eigenvectors.resize(n, 0);
    d.op_norm = op_norm;
    d.ktol = ktol;
    d.rtol = opts.rtol;
    d.complete = false;
    return d;
  }
  opts.ktol = ktol;
  return detail::lanczos_decomposition(K, mass, dim, opts);
}

struct KernelRangeSplit {
  Vector kernel;
  Vector range;
};

/// M-orthogonal split of x into the kernel sector and its complement.
inline KernelRangeSplit kernel_range_split(const SpectralDecomposition& d, const Vector& x) {
  const auto Vk = d.eigenvectors.leftCols(d.kernel_count);
  KernelRangeSplit s;
  s.kernel = Vk * (Vk.transpose() * d.mass.cwiseProduct(x));
  s.range = x - s.kernel;
  return s;
}

namespace detail {

// Coefficients of x, checking the component outside the computed modes.
inline Vector checked_coefficients(const SpectralDecomposition& d, const Vector& x, ComplementPolicy policy) {
  const Vector c = d.coefficients(x);
  if (!d.complete && policy == ComplementPolicy::Refuse) {
    const Vector rest = x - d.eigenvectors * c;
    const double nx = d.mass_norm(x);
    if (d.mass_norm(rest) > d.complement_tol * std::max(nx, 1e-300)) {
      std::ostringstream msg;
      msg << "input has a component of relative size " << d.mass_norm(rest) / nx
          << " outside the " << d.modes() << " computed modes; pass ComplementPolicy::Drop to discard it";
      throw SpectralError(msg.str());
    }
  }
  return c;
}

}  // namespace detail

/// f(Op) x on the computed modes.
inline Vector apply_function(const SpectralDecomposition& d, const std::function<double(double)>& f, const Vector& x,
                             ComplementPolicy policy = ComplementPolicy::Refuse) {
  Vector c = detail::checked_coefficients(d, x, policy);
  for (Index k = 0; k < c.size(); ++k) {
    const double lambda = k < d.kernel_count ? 0.0 : d.eigenvalues(k);
    const double fv = f(lambda);
    if (!std::isfinite(fv)) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "function undefined at eigenvalue " << lambda << " (mode " << k << ")";
      throw SpectralError(msg.str());
    }
    c(k) *= fv;
  }
  return d.eigenvectors * c;
}

/// Field Q and its velocity V = dQ/dt at time t.
struct WaveState {
  Vector Q;
  Vector V;
  double t = 0.0;
};

/// Exact solution of Q'' = -Op Q: free drift on the kernel, rotation with
/// frequency sqrt(lambda) on each positive mode.
inline WaveState propagate(const SpectralDecomposition& d, const WaveState& s0, double t,
                           ComplementPolicy policy = ComplementPolicy::Refuse) {
  if (s0.Q.size() != d.size() || s0.V.size() != d.size()) throw ShapeError("state length differs from decomposition size");
  if (t == 0.0) return s0;
  const Vector cq = detail::checked_coefficients(d, s0.Q, policy);
  const Vector cv = detail::checked_coefficients(d, s0.V, policy);
  Vector q(cq.size()), v(cv.size());
  for (Index k = 0; k < cq.size(); ++k) {
    if (k < d.kernel_count) {
      q(k) = cq(k) + t * cv(k);
      v(k) = cv(k);
      continue;
    }
    const double w = std::sqrt(d.eigenvalues(k));
    const double c = std::cos(w * t), s = std::sin(w * t);
    q(k) = c * cq(k) + s / w * cv(k);
    v(k) = -w * s * cq(k) + c * cv(k);
  }
  return {d.eigenvectors * q, d.eigenvectors * v, s0.t + t};
}

/// Stormer-Verlet integration of Q'' = -M^{-1} K Q, for cross-checks.
inline WaveState leapfrog(const SparseMatrix& K, const Vector& mass, const WaveState& s0, double t, int steps) {
  if (steps < 1) throw std::invalid_argument("leapfrog needs at least one step");
  const double dt = t / steps;
  const Vector minv = mass.cwiseInverse();
  Vector q = s0.Q, v = s0.V;
  Vector a = -minv.cwiseProduct(K * q);
  for (int i = 0; i < steps; ++i) {
    v += 0.5 * dt * a;
    q += dt * v;
    a = -minv.cwiseProduct(K * q);
    v += 0.5 * dt * a;
  }
  return {q, v, s0.t + t};
}

/// 1/2 (V^T M V + Q^T K Q).
inline double wave_energy(const SparseMatrix& K, const Vector& mass, const WaveState& s) {
  return 0.5 * (s.V.dot(mass.cwiseProduct(s.V)) + s.Q.dot(K * s.Q));
}

/// <Q1, V2>_M - <Q2, V1>_M.
inline double wave_symplectic(const Vector& mass, const WaveState& a, const WaveState& b) {
  return a.Q.dot(mass.cwiseProduct(b.V)) - b.Q.dot(mass.cwiseProduct(a.V));
}

}  // namespace gnh
