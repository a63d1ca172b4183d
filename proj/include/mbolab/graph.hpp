#pragma once

#include <string>
#include <vector>

#include "mbolab/manifold.hpp"

namespace mbolab {

enum class KernelForm { Indicator, Triangular, Quadratic };

/// Radial profile eta with support [0, 1].
struct KernelProfile {
  KernelForm form = KernelForm::Indicator;

  double operator()(double r) const;
  std::string name() const;
  static KernelProfile parse(const std::string& name);
};

struct KernelConstants {
  double c1 = 0;
  double c2 = 0;
  double kappa = 0;  // c2 / (2 c1)
};

/// C1 = int eta(|y|) dy and C2 = int eta(|y|) y_1^2 dy over R^k, k in {1, 2, 3}.
KernelConstants kernel_constants(KernelProfile kernel, int k);

/// Sparse epsilon-graph with w_ij = eps^{-k} eta(dist / eps), stored once per pair (strict upper triangle, CSR).
class WeightedGraph {
 public:
  WeightedGraph(PointCloud cloud, double epsilon, KernelProfile kernel, std::vector<std::size_t> row_ptr,
                std::vector<std::uint32_t> cols, Vector weights);

  std::size_t size() const { return cloud_.size(); }
  const PointCloud& cloud() const { return cloud_; }
  double epsilon() const { return epsilon_; }
  KernelProfile kernel() const { return kernel_; }
  int intrinsic_dim() const { return cloud_.manifold.intrinsic_dim(); }

  /// d_n(x_i) = (1/n) sum_j w_ij.
  const Vector& degrees() const { return degrees_; }
  bool connected() const { return components_ == 1; }
  std::size_t component_count() const { return components_; }
  std::size_t edge_count() const { return cols_.size(); }
  /// First zero-degree node, or size() if none.
  std::size_t first_isolated() const;

  const std::vector<std::size_t>& row_ptr() const { return row_ptr_; }
  const std::vector<std::uint32_t>& cols() const { return cols_; }
  const Vector& weights() const { return weights_; }

  double weight(std::size_t i, std::size_t j) const;

  /// y = W x using the mirrored upper triangle.
  void multiply(std::span<const double> x, std::span<double> y) const;

  /// Content hash of (points, epsilon, kernel form, n).
  std::uint64_t content_hash() const { return hash_; }

 private:
  PointCloud cloud_;
  double epsilon_;
  KernelProfile kernel_;
  std::vector<std::size_t> row_ptr_;
  std::vector<std::uint32_t> cols_;
  Vector weights_;
  Vector degrees_;
  std::size_t components_ = 0;
  std::uint64_t hash_ = 0;
};

/// Cell-list construction (bucket side >= epsilon). Requires 0 < eps < L/2 on the torus.
WeightedGraph build_graph(const PointCloud& cloud, double epsilon, KernelProfile kernel);

/// All-pairs reference construction for small n.
WeightedGraph build_graph_bruteforce(const PointCloud& cloud, double epsilon, KernelProfile kernel);

/// <u, v>_V = (1/n) sum_i d_i u_i v_i.
double inner_product(const WeightedGraph& g, std::span<const double> u, std::span<const double> v);

/// (Delta_n u)_i = eps^{-2} (u_i - (1/(n d_i)) sum_j w_ij u_j). Throws Numerical naming the first isolated node.
Vector laplacian_apply(const WeightedGraph& g, std::span<const double> u);

/// `i,j,w` upper-triangle CSV, `i,d` degrees CSV and a JSON metadata sidecar.
void write_graph_csv(const WeightedGraph& g, const std::string& edges_path, const std::string& degrees_path,
                     const std::string& meta_path);

}  // namespace mbolab
