#pragma once

#include <cstddef>
#include <vector>

namespace mbolab {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Gauss-Legendre rule on [-1, 1] with n nodes (Newton on the three-term recurrence).
QuadratureRule gauss_legendre(std::size_t n);

inline std::size_t legendre_index(int l, int m) { return static_cast<std::size_t>(l) * (l + 1) / 2 + m; }

/// Fully normalized associated Legendre values Pbar_l^m(z), 0 <= m <= l <= lmax, so that
/// Pbar_l^m(cos theta) cos(m phi) * sqrt(2) (m > 0) is L^2-orthonormal on the unit sphere.
std::vector<double> normalized_legendre_table(int lmax, double z);

/// Ordinary Legendre polynomials P_0..P_lmax at z.
std::vector<double> legendre_polynomials(int lmax, double z);

}  // namespace mbolab
