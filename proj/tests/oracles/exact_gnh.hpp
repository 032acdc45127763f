#pragma once

// Exact-arithmetic reference for the constraint algorithm.
// Subspaces are kept implicitly as {x : C x = d}; each step projects the
// solution set of the joint (X, x) linear system onto x by row reduction
// with X columns first. No floating point, no orthonormal bases.

#include <boost/multiprecision/cpp_int.hpp>

#include <optional>
#include <vector>

namespace oracle {

using Rational = boost::multiprecision::cpp_rational;
using RMatrix = std::vector<std::vector<Rational>>;

struct Reduced {
  RMatrix rows;                // reduced row echelon form, zero rows dropped
  std::vector<int> pivots;     // pivot column per row
  bool inconsistent = false;   // a row 0 = c with c != 0 in the augmented column
};

// Row reduce an augmented matrix whose last column is the right-hand side.
inline Reduced rref(RMatrix m, int ncols) {
  Reduced out;
  int r = 0;
  const int nrows = static_cast<int>(m.size());
  for (int c = 0; c < ncols && r < nrows; ++c) {
    int p = -1;
    for (int i = r; i < nrows; ++i)
      if (m[i][c] != 0) { p = i; break; }
    if (p < 0) continue;
    std::swap(m[p], m[r]);
    const Rational piv = m[r][c];
    for (auto& v : m[r]) v /= piv;
    for (int i = 0; i < nrows; ++i) {
      if (i == r || m[i][c] == 0) continue;
      const Rational f = m[i][c];
      for (std::size_t j = 0; j < m[i].size(); ++j) m[i][j] -= f * m[r][j];
    }
    out.pivots.push_back(c);
    ++r;
  }
  for (int i = r; i < nrows; ++i)
    if (m[i].size() > static_cast<std::size_t>(ncols) && m[i][ncols] != 0) out.inconsistent = true;
  m.resize(r);
  out.rows = std::move(m);
  return out;
}

inline int rank(const RMatrix& a, int ncols) {
  if (a.empty()) return 0;
  return static_cast<int>(rref(a, ncols).pivots.size());
}

struct Result {
  std::vector<int> dims;  // -1 marks the empty set
  int final_dim = 0;
  int steps = 0;
  int gauge_count = 0;     // dim ker(omega restricted to N)
  int vf_gauge_dim = 0;    // dim(ker Omega ∩ TN)
};

// Basis of null(C) as columns, from the reduced form.
inline RMatrix null_basis(const RMatrix& C, int n) {
  RMatrix basis;  // each entry is a vector of length n
  Reduced red = rref(C, n);
  std::vector<bool> is_pivot(n, false);
  for (int p : red.pivots) is_pivot[p] = true;
  for (int f = 0; f < n; ++f) {
    if (is_pivot[f]) continue;
    std::vector<Rational> v(n, Rational(0));
    v[f] = 1;
    for (std::size_t i = 0; i < red.rows.size(); ++i) v[red.pivots[i]] = -red.rows[i][f];
    basis.push_back(v);
  }
  return basis;
}

inline Result run(const RMatrix& omega, const RMatrix& A, const std::vector<Rational>& b, int max_steps = 64) {
  const int n = static_cast<int>(omega.size());
  Result res;
  RMatrix C;  // rows of length n + 1
  int dim = n;
  res.dims.push_back(dim);
  for (int step = 0; step < max_steps; ++step) {
    RMatrix sys;
    // columns: X (n), x (n), rhs
    for (const auto& row : C) {
      std::vector<Rational> r(2 * n + 1, Rational(0));
      for (int j = 0; j < n; ++j) r[n + j] = row[j];
      r[2 * n] = row[n];
      sys.push_back(r);
      std::vector<Rational> t(2 * n + 1, Rational(0));
      for (int j = 0; j < n; ++j) t[j] = row[j];
      sys.push_back(t);
    }
    for (int i = 0; i < n; ++i) {
      // (Omega^T X)_i - (A x)_i = b_i
      std::vector<Rational> r(2 * n + 1, Rational(0));
      for (int j = 0; j < n; ++j) r[j] = omega[j][i];
      for (int j = 0; j < n; ++j) r[n + j] = -A[i][j];
      r[2 * n] = b[i];
      sys.push_back(r);
    }
    Reduced red = rref(sys, 2 * n);
    if (red.inconsistent) {
      res.dims.push_back(-1);
      res.final_dim = -1;
      res.steps = static_cast<int>(res.dims.size());
      return res;
    }
    RMatrix next;
    for (std::size_t i = 0; i < red.rows.size(); ++i) {
      if (red.pivots[i] < n) continue;
      std::vector<Rational> r(n + 1);
      for (int j = 0; j < n; ++j) r[j] = red.rows[i][n + j];
      r[n] = red.rows[i][2 * n];
      next.push_back(r);
    }
    const int next_dim = n - static_cast<int>(next.size());
    if (next_dim == dim) break;
    res.dims.push_back(next_dim);
    dim = next_dim;
    C = std::move(next);
  }
  res.final_dim = dim;
  res.steps = static_cast<int>(res.dims.size());

  // gauge counts on the final subspace
  RMatrix Cx;
  for (const auto& row : C) Cx.emplace_back(row.begin(), row.begin() + n);
  const RMatrix T = null_basis(Cx, n);
  const int k = static_cast<int>(T.size());
  RMatrix restricted(k, std::vector<Rational>(k, Rational(0)));
  for (int a = 0; a < k; ++a)
    for (int c = 0; c < k; ++c) {
      Rational s = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          if (omega[i][j] != 0) s += T[a][i] * omega[i][j] * T[c][j];
      restricted[a][c] = s;
    }
  res.gauge_count = k - rank(restricted, k);
  RMatrix stacked = Cx;
  for (const auto& row : omega) stacked.push_back(row);
  res.vf_gauge_dim = n - rank(stacked, n);
  return res;
}

}  // namespace oracle
