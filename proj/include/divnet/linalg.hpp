#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace divnet::linalg {

// Row-major LU factorization with partial pivoting, PA = LU. L has a unit
// diagonal and shares storage with U.
struct LuFactors {
  std::size_t n = 0;
  std::vector<double> lu;
  std::vector<std::size_t> pivots;  // row i of PA is row pivots[i] of A
  int sign = 1;                     // det(P)

  double determinant() const;
  // Smallest |U_ii| relative to the largest; 0 for an exactly singular matrix.
  double pivot_ratio() const;
  // A⁻¹ in row-major order. Undefined for singular input.
  std::vector<double> inverse() const;
};

LuFactors lu_factor(std::span<const double> a, std::size_t n);

double lu_determinant(std::span<const double> a, std::size_t n);

}  // namespace divnet::linalg
