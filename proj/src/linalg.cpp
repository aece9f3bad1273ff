#include "divnet/linalg.hpp"

#include <algorithm>
#include <cmath>

#include "divnet/errors.hpp"

namespace divnet::linalg {

LuFactors lu_factor(std::span<const double> a, std::size_t n) {
  if (a.size() != n * n) throw ShapeError("lu_factor: expected a square matrix");
  LuFactors f;
  f.n = n;
  f.lu.assign(a.begin(), a.end());
  f.pivots.resize(n);
  for (std::size_t i = 0; i < n; ++i) f.pivots[i] = i;
  auto& m = f.lu;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    double best = std::abs(m[k * n + k]);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double v = std::abs(m[i * n + k]);
      if (v > best) {
        best = v;
        p = i;
      }
    }
    if (p != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(m[k * n + j], m[p * n + j]);
      std::swap(f.pivots[k], f.pivots[p]);
      f.sign = -f.sign;
    }
    const double pivot = m[k * n + k];
    if (pivot == 0.0) continue;
    for (std::size_t i = k + 1; i < n; ++i) {
      const double factor = m[i * n + k] / pivot;
      m[i * n + k] = factor;
      if (factor == 0.0) continue;
      for (std::size_t j = k + 1; j < n; ++j) m[i * n + j] -= factor * m[k * n + j];
    }
  }
  return f;
}

double LuFactors::determinant() const {
  double det = sign;
  for (std::size_t i = 0; i < n; ++i) det *= lu[i * n + i];
  return det;
}

double LuFactors::pivot_ratio() const {
  if (n == 0) return 1.0;
  double lo = std::abs(lu[0]);
  double hi = lo;
  for (std::size_t i = 1; i < n; ++i) {
    const double v = std::abs(lu[i * n + i]);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return hi == 0.0 ? 0.0 : lo / hi;
}

std::vector<double> LuFactors::inverse() const {
  std::vector<double> inv(n * n, 0.0);
  std::vector<double> col(n);
  for (std::size_t c = 0; c < n; ++c) {
    // Solve A x = e_c, i.e. L U x = P e_c.
    for (std::size_t i = 0; i < n; ++i) col[i] = pivots[i] == c ? 1.0 : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = col[i];
      for (std::size_t j = 0; j < i; ++j) s -= lu[i * n + j] * col[j];
      col[i] = s;
    }
    for (std::size_t i = n; i-- > 0;) {
      double s = col[i];
      for (std::size_t j = i + 1; j < n; ++j) s -= lu[i * n + j] * col[j];
      col[i] = s / lu[i * n + i];
    }
    for (std::size_t i = 0; i < n; ++i) inv[i * n + c] = col[i];
  }
  return inv;
}

double lu_determinant(std::span<const double> a, std::size_t n) {
  if (n == 0) return 1.0;
  return lu_factor(a, n).determinant();
}

}  // namespace divnet::linalg
