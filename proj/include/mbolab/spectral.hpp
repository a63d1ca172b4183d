#pragma once

#include <memory>
#include <string>

#include "mbolab/graph.hpp"

namespace mbolab {

/// First K eigenpairs of Delta_n, ascending, V-orthonormal.
struct SpectralDecomposition {
  std::size_t n = 0;
  std::size_t K = 0;
  Vector eigenvalues;
  Vector eigenvectors;  // node-major: eigenvectors[i * K + l]
  Vector residuals;     // ||Delta v - lambda v||_V per pair; empty when loaded without a graph
  double tolerance = 0.0;
  std::uint64_t graph_hash = 0;

  double vec(std::size_t node, std::size_t l) const { return eigenvectors[node * K + l]; }
  double& vec(std::size_t node, std::size_t l) { return eigenvectors[node * K + l]; }
};

struct EigenSolverOptions {
  double tol = 1e-10;
  std::size_t max_restarts = 400;
  std::size_t subspace = 0;       // 0: max(2K + 20, K + 40), capped at n
  std::size_t dense_below = 300;  // dense solve for n below this (or when the subspace would be all of R^n)
};

/// Thick-restart Lanczos on D^{-1/2} W D^{-1/2} / n with full reorthogonalization.
/// Converged when every residual is <= tol * (lambda_K + eps^{-2}); otherwise throws Numerical with the residuals.
SpectralDecomposition partial_eigendecomposition(const WeightedGraph& g, std::size_t K, EigenSolverOptions opt = {});
inline SpectralDecomposition partial_eigendecomposition(const WeightedGraph& g, std::size_t K, double tol) {
  EigenSolverOptions o;
  o.tol = tol;
  return partial_eigendecomposition(g, K, o);
}

/// ||Delta v_l - lambda_l v_l||_V for every stored pair.
Vector eigen_residuals(const SpectralDecomposition& dec, const WeightedGraph& g);

/// H^K(t, x_i, x_j) = sum_l e^{-t lambda_l} v_l(i) v_l(j) d(j) / n.
double truncated_kernel_entry(const SpectralDecomposition& dec, const WeightedGraph& g, double t, std::size_t i,
                              std::size_t j);

enum class HeatMethod { Automatic, Dense, Krylov };

inline constexpr std::size_t kDenseCap = 2048;

struct KrylovStats {
  std::size_t substeps = 0;
  std::size_t halvings = 0;
  std::size_t max_dim = 0;
};

/// e^{-t Delta_n} (full) or the K-term projection P_n (truncated).
class HeatOperator {
 public:
  static HeatOperator full(std::shared_ptr<const WeightedGraph> g, HeatMethod method = HeatMethod::Automatic,
                           double krylov_tol = 1e-12);
  static HeatOperator truncated(std::shared_ptr<const WeightedGraph> g,
                                std::shared_ptr<const SpectralDecomposition> dec);

  bool is_full() const { return !dec_; }
  HeatMethod method() const { return method_; }
  const WeightedGraph& graph() const { return *graph_; }
  const std::shared_ptr<const WeightedGraph>& graph_ptr() const { return graph_; }
  const SpectralDecomposition* decomposition() const { return dec_.get(); }
  std::string describe() const;

  Vector apply(double t, std::span<const double> u, KrylovStats* stats = nullptr) const;

 private:
  struct Dense;
  std::shared_ptr<const WeightedGraph> graph_;
  std::shared_ptr<const SpectralDecomposition> dec_;
  std::shared_ptr<const Dense> dense_;
  Vector scale_;  // 1 / sqrt(n d_i)
  HeatMethod method_ = HeatMethod::Automatic;
  double krylov_tol_ = 1e-12;
};

/// max_i |S(t, 1)(x_i) - 1|.
double mass_defect(const HeatOperator& op, double t);

/// Binary cache (magic MBOSPEC1, little-endian, CRC32 trailer). Writes go through a temporary file and rename.
void spectrum_cache_save(const SpectralDecomposition& dec, const std::string& path);
/// Loads and verifies the checksum. The graph overload also checks the content hash and recomputes residuals.
SpectralDecomposition spectrum_cache_load(const std::string& path);
SpectralDecomposition spectrum_cache_load(const std::string& path, const WeightedGraph& g);

}  // namespace mbolab
