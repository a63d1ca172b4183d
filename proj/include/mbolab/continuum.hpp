#pragma once

#include <functional>
#include <optional>
#include <string>

#include "mbolab/front.hpp"
#include "mbolab/mbo.hpp"

namespace mbolab {

/// Periodic N x N cell-centred lattice on [0, L)^2; value(i, j) sits at ((i + 1/2) L/N, (j + 1/2) L/N).
struct GridField {
  std::size_t n = 0;
  double side = 1.0;
  Vector values;  // values[i * n + j], i along axis 0

  GridField() = default;
  GridField(std::size_t n, double side);  // throws unless n is a power of two >= 4

  double cell() const { return side / n; }
  double& at(std::size_t i, std::size_t j) { return values[i * n + j]; }
  double at(std::size_t i, std::size_t j) const { return values[i * n + j]; }
  Point center(std::size_t i, std::size_t j) const;
  Manifold manifold() const { return Manifold::torus(side); }

  static GridField sample(std::size_t n, double side, const std::function<double(const Point&)>& f);
  /// 1 where the signed distance at the cell centre is > 0.
  static GridField indicator(std::size_t n, const FrontDescriptor& region);

  /// Periodic bilinear interpolation.
  double interpolate(const Point& x) const;
  /// Periodic 4-point Lagrange (bicubic) interpolation.
  double interpolate_cubic(const Point& x) const;
  /// sum of values times cell area.
  double integral() const;
  /// sum of xi * values * cell area.
  double weighted_mass(const Density& density) const;
};

struct GridHeatOptions {
  std::size_t min_substeps = 16;  // Crank-Nicolson substep <= t / min_substeps
};

/// e^{-t Delta_xi} on the grid: exact Fourier multiplier for uniform density, Crank-Nicolson with a
/// backward-Euler start (two half steps) for the cosine family.
GridField grid_heat_step(const GridField& field, double t, const Density& density, GridHeatOptions opt = {});

struct ContinuumMBOConfig {
  double kappa = 1.0;
  double h = 0.0;
  std::function<double(const Point&)> drift;  // empty means f = 0

  void validate() const;
};

struct ContinuumStep {
  GridField labels;    // values in {0, 1}
  GridField diffused;  // u before thresholding
  GridField threshold;
};

/// Diffuse for time kappa*h, then label 1 where u >= 1/2 + f sqrt(h).
GridField continuum_mbo_step(const GridField& field, const ContinuumMBOConfig& config, const Density& density,
                             GridHeatOptions opt = {});
ContinuumStep continuum_mbo_step_detailed(const GridField& field, const ContinuumMBOConfig& config,
                                          const Density& density, GridHeatOptions opt = {});

enum class FrontStatus { Alive, Extinct, Filled };

struct FrontState {
  FrontStatus status = FrontStatus::Alive;
  FrontDescriptor front;
};

/// Closed-form curvature flow with normal speed kappa * H (uniform density only).
FrontState analytic_front(const FrontDescriptor& front, double kappa, double t, const Density& density);
FrontState analytic_front(const FrontDescriptor& front, double kappa, double t);

/// da/dt = -kappa (d_axis xi / xi)(a) for a straight front {x_axis = a} on the torus; dopri5 at 1e-10.
double drift_front_ode(double a0, const Manifold& m, const Density& density, double kappa, double t,
                       double tol = 1e-10);

struct Displacement {
  double max_z = 0.0;
  double mean_z = 0.0;
  std::size_t samples = 0;
  bool unbounded = false;
};

/// Walks the outer normal from boundary samples of `before` to the first label change of an indicator grid.
Displacement normal_displacement(const FrontDescriptor& before, const GridField& after, std::size_t samples = 256);
/// Same, on the continuous level set {u >= threshold} of a grid field (bilinear interpolation, bisection).
Displacement normal_displacement(const FrontDescriptor& before, const GridField& u, const GridField& threshold,
                                 std::size_t samples = 256);
/// Same, on node labels: the label at a point is that of its nearest node.
Displacement normal_displacement(const FrontDescriptor& before, const ClusterState& after, const PointCloud& cloud,
                                 std::size_t samples = 256);

/// Rotationally symmetric sets on the unit sphere: unions of intervals in z = cos(colatitude).
struct ZonalSet {
  std::vector<std::pair<double, double>> intervals;  // [z_lo, z_hi] sorted, disjoint

  static ZonalSet cap(double theta0);
  double area() const;
  /// Colatitudes of all interval endpoints strictly inside (-1, 1).
  std::vector<double> boundaries() const;
};

/// Legendre coefficients of e^{-t Delta} 1_set, complete to the 1e-14 truncation rule.
Vector zonal_heat_coefficients(const ZonalSet& set, double t);
double zonal_evaluate(std::span<const double> coeffs, double z);
/// One continuum MBO step (drift-free) for a zonal set on the sphere.
ZonalSet zonal_mbo_step(const ZonalSet& set, double kappa, double h);

/// Level-set function with analytic derivatives (torus coordinates).
struct LevelSet {
  std::function<double(const Point&)> value;
  std::function<std::array<double, 2>(const Point&)> gradient;
  std::function<std::array<double, 4>(const Point&)> hessian;  // row-major 2x2

  static LevelSet circle(Point center, double radius, double side = 1.0);
  static LevelSet vertical_line(double a);  // psi = a - x_0
};

struct ProbeRow {
  double h = 0;
  double lhs = 0;
  double rhs = 0;
  double abs_gap = 0;
};

struct ProbeOptions {
  std::size_t grid = 1024;
  double side = 1.0;
  double psi_t = 0.0;  // d/dt psi at z supplied by the caller
};

/// lhs(h) = (1/2 - e^{-kappa h Delta_xi} 1_{psi >= 0}(z)) / sqrt(kappa h), rhs from the derivatives of psi at z.
/// Refuses (InvalidArgument) when the cell exceeds 0.25 sqrt(kappa h).
std::vector<ProbeRow> consistency_probe(const LevelSet& psi, const Point& z, double kappa,
                                        const std::vector<double>& h_sequence, const Density& density,
                                        ProbeOptions opt = {});

void write_probe_csv(const std::vector<ProbeRow>& rows, const std::string& path);
struct DisplacementRow {
  double h = 0;
  Displacement d;
};
void write_displacement_csv(const std::vector<DisplacementRow>& rows, const std::string& path);

}  // namespace mbolab
