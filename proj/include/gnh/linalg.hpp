#pragma once

#include <Eigen/Dense>
#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace gnh {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Singular value decomposition through LAPACK. Eigen 3.4.0's BDCSVD reads out
/// of bounds on matrices with many exactly repeated singular values, which the
/// block-structured forms here produce routinely.
struct Svd {
  Vector s;
  Matrix U;  // thin or full, per request
  Matrix V;

  enum Vectors { None, Thin, Full };

  explicit Svd(const Matrix& B, Vectors u = None, Vectors v = None) {
    const lapack_int m = static_cast<lapack_int>(B.rows()), n = static_cast<lapack_int>(B.cols());
    const lapack_int k = std::min(m, n);
    s.resize(k);
    if (k == 0) {
      U = u == Full ? Matrix::Identity(m, m) : Matrix(m, 0);
      V = v == Full ? Matrix::Identity(n, n) : Matrix(n, 0);
      return;
    }
    // gesdd computes both factors or neither; ask for the larger of the two requests
    const Vectors want = std::max(u, v);
    const char job = want == Full ? 'A' : want == Thin ? 'S' : 'N';
    Matrix a = B;
    Matrix uu(m, want == Full ? m : want == Thin ? k : 1);
    Matrix vt(want == Full ? n : want == Thin ? k : 1, n);
    lapack_int info = LAPACKE_dgesdd(LAPACK_COL_MAJOR, job, m, n, a.data(), m, s.data(), uu.data(), m, vt.data(),
                                     static_cast<lapack_int>(vt.rows()));
    if (info > 0) {
      // divide and conquer did not converge; the QR iteration is slower but sturdier
      a = B;
      Vector superb(k);
      info = LAPACKE_dgesvd(LAPACK_COL_MAJOR, job, job, m, n, a.data(), m, s.data(), uu.data(), m, vt.data(),
                            static_cast<lapack_int>(vt.rows()), superb.data());
    }
    if (info != 0) throw std::runtime_error("LAPACK SVD failed with info " + std::to_string(info));
    if (u != None) U = u == Thin ? Matrix(uu.leftCols(k)) : uu;
    if (v != None) V = v == Thin ? Matrix(vt.topRows(k).transpose()) : Matrix(vt.transpose());
  }

  Index rank(double threshold) const { return static_cast<Index>((s.array() > threshold).count()); }
};

/// Estimate of the largest singular value by power iteration on B^T B.
/// Deterministic start vector, so repeated calls agree bit for bit.
inline double spectral_norm(const Matrix& B, int iterations = 60) {
  if (B.size() == 0) return 0.0;
  Vector v(B.cols());
  for (Index i = 0; i < v.size(); ++i) v(i) = 1.0 + 0.1 * std::sin(1.0 + static_cast<double>(i));
  v.normalize();
  double sigma = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Vector w = B.transpose() * (B * v);
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    const double next = std::sqrt(nw);
    v = w / nw;
    if (it > 4 && std::abs(next - sigma) <= 1e-12 * next) {
      sigma = next;
      break;
    }
    sigma = next;
  }
  return sigma;
}

inline Index numerical_rank(const Matrix& B, double threshold) {
  if (B.size() == 0) return 0;
  return Svd(B).rank(threshold);
}

/// Orthonormal basis of {x : B x = 0}. Singular values at or below threshold count as zero.
inline Matrix null_space(const Matrix& B, double threshold) {
  const Index n = B.cols();
  if (B.rows() == 0) return Matrix::Identity(n, n);
  if (n == 0) return Matrix(0, 0);
  const Svd svd(B, Svd::None, Svd::Full);
  return svd.V.rightCols(n - svd.rank(threshold));
}

/// Orthonormal basis of the column span of B.
inline Matrix range_basis(const Matrix& B, double threshold) {
  if (B.cols() == 0 || B.rows() == 0) return Matrix(B.rows(), 0);
  const Svd svd(B, Svd::Thin);
  return svd.U.leftCols(svd.rank(threshold));
}

/// Moore-Penrose pseudo-inverse with an absolute cutoff on singular values.
inline Matrix pseudo_inverse(const Matrix& B, double threshold) {
  if (B.size() == 0) return Matrix::Zero(B.cols(), B.rows());
  const Svd svd(B, Svd::Thin, Svd::Thin);
  const Vector& s = svd.s;
  Vector inv = Vector::Zero(s.size());
  for (Index i = 0; i < s.size(); ++i)
    if (s(i) > threshold) inv(i) = 1.0 / s(i);
  return svd.V * inv.asDiagonal() * svd.U.transpose();
}

/// Sine of the largest principal angle between span(U) and span(V).
/// Both bases orthonormal. Unequal dimensions give 1.
inline double max_principal_sine(const Matrix& U, const Matrix& V) {
  if (U.rows() != V.rows()) throw std::invalid_argument("principal angles: ambient dimensions differ");
  if (U.cols() != V.cols()) return 1.0;
  if (U.cols() == 0) return 0.0;
  const Matrix residual = V - U * (U.transpose() * V);
  return std::min(1.0, Svd(residual).s(0));
}

/// Largest principal angle in radians.
inline double max_principal_angle(const Matrix& U, const Matrix& V) {
  return std::asin(max_principal_sine(U, V));
}

/// True when every column of inner lies in span(outer) up to `threshold` (outer orthonormal).
inline bool span_contains(const Matrix& outer, const Matrix& inner, double threshold) {
  if (inner.cols() == 0) return true;
  if (outer.cols() == 0) return inner.norm() <= threshold;
  const Matrix residual = inner - outer * (outer.transpose() * inner);
  return residual.norm() <= threshold * std::max(1.0, inner.norm());
}

}  // namespace gnh
