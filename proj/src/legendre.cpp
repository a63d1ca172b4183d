#include "mbolab/legendre.hpp"

#include <cmath>

#include "mbolab/common.hpp"

namespace mbolab {

QuadratureRule gauss_legendre(std::size_t n) {
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = z;
      for (std::size_t k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    rule.nodes[i] = -z;
    rule.nodes[n - 1 - i] = z;
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  return rule;
}

std::vector<double> normalized_legendre_table(int lmax, double z) {
  std::vector<double> p(legendre_index(lmax, lmax) + 1, 0.0);
  const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
  p[0] = 1.0 / std::sqrt(4.0 * kPi);
  for (int m = 1; m <= lmax; ++m)
    p[legendre_index(m, m)] = std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * p[legendre_index(m - 1, m - 1)];
  for (int m = 0; m < lmax; ++m) p[legendre_index(m + 1, m)] = std::sqrt(2.0 * m + 3.0) * z * p[legendre_index(m, m)];
  for (int m = 0; m <= lmax; ++m) {
    for (int l = m + 2; l <= lmax; ++l) {
      const double a = std::sqrt((4.0 * l * l - 1.0) / (double(l) * l - double(m) * m));
      const double b = std::sqrt((double(l - 1) * (l - 1) - double(m) * m) / (4.0 * (l - 1) * (l - 1) - 1.0));
      p[legendre_index(l, m)] = a * (z * p[legendre_index(l - 1, m)] - b * p[legendre_index(l - 2, m)]);
    }
  }
  return p;
}

std::vector<double> legendre_polynomials(int lmax, double z) {
  std::vector<double> p(lmax + 1);
  p[0] = 1.0;
  if (lmax >= 1) p[1] = z;
  for (int l = 1; l < lmax; ++l) p[l + 1] = ((2.0 * l + 1.0) * z * p[l] - l * p[l - 1]) / (l + 1.0);
  return p;
}

}  // namespace mbolab
