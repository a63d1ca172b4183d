#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mbolab/common.hpp"

namespace mbolab {

enum class ManifoldKind { FlatTorus, Sphere };

/// The two supported closed surfaces: the flat torus [0, L)^2 in fundamental-domain
/// coordinates and the unit sphere embedded in R^3.
struct Manifold {
  ManifoldKind kind = ManifoldKind::FlatTorus;
  double side = 1.0;  // torus side length; ignored for the sphere

  static Manifold torus(double side = 1.0);
  static Manifold sphere();

  int intrinsic_dim() const { return 2; }
  int embedding_dim() const { return kind == ManifoldKind::FlatTorus ? 2 : 3; }
  double volume() const;
  std::string name() const;
};

enum class DensityForm { Uniform, CosinePerturbed };

/// Sampling density rho with respect to the volume measure.
///
/// Cosine-perturbed densities are rho = c (1 + a cos(2 pi x_axis / L)) on the torus and
/// rho = c (1 + a x_axis) on the sphere, with |a| < 1 and c fixed so that rho integrates to 1.
struct Density {
  DensityForm form = DensityForm::Uniform;
  int axis = 0;
  double amplitude = 0.0;
  double normalization = 1.0;

  static Density uniform(const Manifold& m);
  static Density cosine(const Manifold& m, int axis, double amplitude);

  bool is_uniform() const { return form == DensityForm::Uniform; }
  double rho(const Manifold& m, const Point& x) const;
  /// xi = rho^2, the weight of the limiting flow.
  double xi(const Manifold& m, const Point& x) const;
  /// Gradient of log(xi) in embedding coordinates (tangent for the sphere).
  Point grad_log_xi(const Manifold& m, const Point& x) const;
  double max_rho(const Manifold& m) const;
  std::string name() const;
};

struct PointCloud {
  Manifold manifold;
  Density density;
  std::vector<Point> points;
  std::uint64_t seed = 0;

  std::size_t size() const { return points.size(); }
};

/// Rejection sampling against the uniform volume measure.
/// Throws ErrorCode::Numerical if the attempt budget is exhausted.
PointCloud sample_points(const Manifold& m, const Density& density, std::size_t n, std::uint64_t seed);

double geodesic_distance(const Manifold& m, const Point& x, const Point& y);

/// Distance used inside graph kernels: quotient distance on the torus, chordal on the sphere.
double kernel_distance(const Manifold& m, const Point& x, const Point& y);

/// Torus coordinate difference reduced to [-L/2, L/2).
double wrap_delta(double delta, double side);

/// Exact check of the defining equation within the stated tolerances.
bool on_manifold(const Manifold& m, const Point& x);

/// Numerical integral of rho over the manifold (tensor quadrature; exact for the supported forms).
double integrate_density(const Manifold& m, const Density& density);

/// CSV `x0,x1[,x2]` plus a JSON sidecar at `path + ".meta.json"`.
void write_cloud_csv(const PointCloud& cloud, const std::string& path);
PointCloud read_cloud_csv(const std::string& path);

/// Closed-form Laplace-Beltrami eigensystem for uniform density, orthonormal in L^2(xi Vol).
class ContinuumEigensystem {
 public:
  /// Builds the first `count` eigenpairs sorted ascending. Throws Unsupported for non-uniform density.
  ContinuumEigensystem(const Manifold& m, const Density& density, std::size_t count);

  const Manifold& manifold() const { return manifold_; }
  const Density& density() const { return density_; }
  std::size_t size() const { return eigenvalues_.size(); }
  const Vector& eigenvalues() const { return eigenvalues_; }
  double eigenvalue(std::size_t l) const { return eigenvalues_.at(l); }
  /// Largest eigenvalue whose whole multiplicity group is present.
  double complete_through() const { return complete_through_; }

  double evaluate(std::size_t l, const Point& x) const;
  /// All eigenfunctions at x, written to out[0..size()).
  void evaluate_all(const Point& x, std::span<double> out) const;

  /// Multiplicity groups as [begin, end) index ranges.
  std::vector<std::pair<std::size_t, std::size_t>> groups() const;

  /// Heat kernel of Delta_xi with respect to xi Vol, by the spectral expansion truncated at e^{-t lambda} <= 1e-14.
  double heat_kernel(double t, const Point& x, const Point& y) const;

  /// Projection coefficients <f, f_l>_{L^2(xi Vol)} by tensor quadrature with `resolution` points per
  /// direction (0 picks a default adequate for the eigensystem's band limit).
  Vector project(const std::function<double(const Point&)>& f, std::size_t resolution = 0) const;

  // Torus: wave vector and parity of each mode. Sphere: degree l and order m.
  struct Mode {
    int a = 0;
    int b = 0;
    int parity = 0;  // torus: 0 cos, 1 sin
  };
  const std::vector<Mode>& modes() const { return modes_; }

 private:
  Manifold manifold_;
  Density density_;
  Vector eigenvalues_;
  std::vector<Mode> modes_;
  double complete_through_ = 0.0;
  int max_degree_ = 0;  // sphere: highest l; torus: highest |m_i|
};

/// Smallest mode count needed for e^{-t lambda_L} <= 1e-14 truncation.
double heat_truncation_eigenvalue(double t);

ContinuumEigensystem continuum_eigensystem(const Manifold& m, const Density& density, std::size_t count);

/// e^{-t Delta_xi} f at the query points by spectral projection.
/// Throws InvalidArgument if the eigensystem is too small for the 1e-14 truncation rule.
Vector continuum_heat_apply(const ContinuumEigensystem& eig, double t,
                            const std::function<double(const Point&)>& f, std::span<const Point> query,
                            std::size_t resolution = 0);

/// Same, with precomputed projection coefficients.
Vector continuum_heat_apply_coefficients(const ContinuumEigensystem& eig, double t, std::span<const double> coeffs,
                                         std::span<const Point> query);

}  // namespace mbolab
