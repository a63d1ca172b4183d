#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include <json.hpp>

#include "mbolab/harness.hpp"
#include "mbolab/legendre.hpp"

namespace testing {

using namespace mbolab;

inline std::shared_ptr<const WeightedGraph> make_graph(const Manifold& m, const Density& d, std::size_t n,
                                                       std::uint64_t seed, double eps,
                                                       KernelForm k = KernelForm::Indicator) {
  return std::make_shared<const WeightedGraph>(build_graph(sample_points(m, d, n, seed), eps, KernelProfile{k}));
}

inline std::shared_ptr<const WeightedGraph> torus_graph(std::size_t n, std::uint64_t seed, double eps) {
  const Manifold m = Manifold::torus(1.0);
  return make_graph(m, Density::uniform(m), n, seed, eps);
}

/// Dense W with the zero diagonal.
inline Eigen::MatrixXd dense_weights(const WeightedGraph& g) {
  const std::size_t n = g.size();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) w(i, j) = g.weight(i, j);
  return w;
}

/// eps^-2 (I - D^-1 W / n) from the weights alone.
inline Eigen::MatrixXd dense_laplacian(const WeightedGraph& g) {
  const std::size_t n = g.size();
  const Eigen::MatrixXd w = dense_weights(g);
  Eigen::MatrixXd lap = Eigen::MatrixXd::Identity(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = w.row(i).sum() / n;
    lap.row(i) -= w.row(i) / (n * d);
  }
  return lap / (g.epsilon() * g.epsilon());
}

inline Eigen::MatrixXd dense_heat(const WeightedGraph& g, double t) { return (-t * dense_laplacian(g)).exp(); }

inline Eigen::VectorXd as_eigen(const Vector& v) { return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()); }

inline double sup_diff(const Vector& a, const Vector& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline Vector random_vector(std::size_t n, std::uint64_t seed, double lo = -1, double hi = 1) {
  Rng r(seed);
  Vector v(n);
  for (auto& x : v) x = r.uniform(lo, hi);
  return v;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline std::string first_line(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

/// Fresh scratch directory under the build tree's temp area.
inline std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("mbolab_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

template <typename F>
ErrorCode error_code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return static_cast<ErrorCode>(0);
}

}  // namespace testing
