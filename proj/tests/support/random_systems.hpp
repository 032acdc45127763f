#pragma once

// Random small-integer presymplectic systems with varied ranks, shared by the
// property tests and the acceptance runner.

#include "../oracles/exact_gnh.hpp"
#include "gnh/presym.hpp"

#include <random>

namespace testsupport {

struct IntSystem {
  std::vector<std::vector<int>> omega, A;
  std::vector<int> b;

  gnh::PresymplecticSystem to_system() const {
    const int n = static_cast<int>(b.size());
    gnh::Matrix O(n, n), H(n, n);
    gnh::Vector bv(n);
    for (int i = 0; i < n; ++i) {
      bv(i) = b[i];
      for (int j = 0; j < n; ++j) {
        O(i, j) = omega[i][j];
        H(i, j) = A[i][j];
      }
    }
    return {gnh::PresymplecticForm(O), gnh::QuadraticHamiltonian(H, bv)};
  }

  oracle::Result exact(int max_steps = 64) const {
    const int n = static_cast<int>(b.size());
    oracle::RMatrix O(n, std::vector<oracle::Rational>(n)), H(n, std::vector<oracle::Rational>(n));
    std::vector<oracle::Rational> bv(n);
    for (int i = 0; i < n; ++i) {
      bv[i] = b[i];
      for (int j = 0; j < n; ++j) {
        O[i][j] = omega[i][j];
        H[i][j] = A[i][j];
      }
    }
    return oracle::run(O, H, bv, max_steps);
  }
};

// Omega = P^T J P with P of 2m rows, A = F^T D F with q rows; b zero, in range(A), or generic.
inline IntSystem random_int_system(std::mt19937_64& rng, int n) {
  std::uniform_int_distribution<int> small(-2, 2);
  std::uniform_int_distribution<int> pairs(0, n / 2);
  std::uniform_int_distribution<int> hrank(0, n);
  std::uniform_int_distribution<int> which(0, 2);
  const int m = pairs(rng);
  const int q = hrank(rng);
  std::vector<std::vector<int>> P(2 * m, std::vector<int>(n)), F(q, std::vector<int>(n));
  for (auto& r : P)
    for (auto& v : r) v = small(rng);
  for (auto& r : F)
    for (auto& v : r) v = small(rng);
  std::vector<int> D(q);
  for (auto& d : D) d = (small(rng) >= 0) ? 1 : -1;

  IntSystem s;
  s.omega.assign(n, std::vector<int>(n, 0));
  s.A.assign(n, std::vector<int>(n, 0));
  s.b.assign(n, 0);
  for (int k = 0; k < m; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        s.omega[i][j] += P[2 * k][i] * P[2 * k + 1][j] - P[2 * k + 1][i] * P[2 * k][j];
  for (int k = 0; k < q; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) s.A[i][j] += D[k] * F[k][i] * F[k][j];
  switch (which(rng)) {
    case 0: break;
    case 1: {
      std::vector<int> u(n);
      for (auto& v : u) v = small(rng);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) s.b[i] += s.A[i][j] * u[j];
      break;
    }
    default:
      for (auto& v : s.b) v = small(rng);
  }
  return s;
}

}  // namespace testsupport
