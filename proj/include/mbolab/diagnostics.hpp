#pragma once

#include <functional>
#include <optional>
#include <string>

#include "mbolab/continuum.hpp"
#include "mbolab/mbo.hpp"
#include "mbolab/spectral.hpp"

namespace mbolab {

struct MaxPrincipleResult {
  double raw = 0.0;    // max over trials and nodes of (S(h,u) - S(h,v))_+
  double ratio = 0.0;  // max over trials of raw / (h^{3/2} (max|u| + max|v|))
};

/// Random pairs u <= v with |u|, |v| <= 1: v = clip(u + p) with dense p >= 0 on even trials,
/// v = u raised to 1 at one random node on odd trials.
MaxPrincipleResult max_principle_error(const HeatOperator& op, double h, std::size_t trials, std::uint64_t seed);

struct TestFunction {
  std::string name;
  std::function<double(const Point&)> f;
  double sup = 0.0;
  double lipschitz = 0.0;
};

/// Constant, low Fourier / harmonic modes and a smooth bump, with exact sup norms and Lipschitz constants.
std::vector<TestFunction> default_test_functions(const Manifold& m);

/// Reference semigroup e^{-t Delta_xi} evaluated at given points.
struct HeatOracle {
  std::function<Vector(const TestFunction&, double, std::span<const Point>)> apply;

  /// Spectral oracle (uniform density).
  static HeatOracle spectral(std::shared_ptr<const ContinuumEigensystem> eig);
  /// Crank-Nicolson grid oracle (torus, any supported density), cubic interpolation at the points.
  static HeatOracle grid(const Manifold& m, const Density& density, std::size_t n);
  /// Picks the spectral oracle for uniform density and the grid oracle on the torus; throws Unsupported otherwise.
  static HeatOracle for_density(const Manifold& m, const Density& density, double t);
};

struct HeatApproxRow {
  std::string name;
  double sup_error = 0.0;
  double sup_f = 0.0;
  double lip_f = 0.0;
};

struct HeatApproxReport {
  std::vector<HeatApproxRow> rows;
  double sqrt_h = 0.0;
  double h32 = 0.0;
  // least squares sup_error ~ a sup|f| + b Lip(f)
  double coef_sup = 0.0;
  double coef_lip = 0.0;
  double condition = 0.0;
  bool well_conditioned = false;
};

/// max over nodes of |S_n(h, f) - e^{-kappa h Delta_xi} f| for each test function.
HeatApproxReport heat_approx_error(const HeatOperator& op, const HeatOracle& oracle, double h, double kappa,
                                   const std::vector<TestFunction>& tests);

enum class PairMode { Auto, Exhaustive, Sampled };

inline constexpr std::size_t kExhaustiveCap = 3000;

struct KernelErrorReport {
  double sup_error = 0.0;
  double normalized = 0.0;  // sup_error * n / sqrt(h)
  std::size_t pairs = 0;
  bool exhaustive = false;
};

/// max over node pairs of |H^K(h, x, y) - (rho(y)/n) H(kappa h, x, y)|. Uniform density only.
/// Sampled mode checks all columns of `sample_rows` random rows.
KernelErrorReport kernel_sup_error(const SpectralDecomposition& dec, const WeightedGraph& g,
                                   const ContinuumEigensystem& eig, double h, double kappa, PairMode mode = PairMode::Auto,
                                   std::size_t sample_rows = 400, std::uint64_t seed = 1);

struct SpectralRow {
  std::size_t l = 0;  // 1-based index
  double graph = 0.0;
  double continuum = 0.0;  // kappa * lambda_l
  double abs_error = 0.0;
};

struct EigenspaceAngle {
  std::size_t begin = 0;  // 1-based, inclusive
  std::size_t end = 0;    // 1-based, inclusive
  double continuum = 0.0;
  double max_angle_deg = 0.0;
};

struct SpectralReport {
  std::vector<SpectralRow> rows;
  std::vector<EigenspaceAngle> angles;  // complete multiplicity groups within the first L
};

SpectralReport spectral_convergence_report(const SpectralDecomposition& dec, const WeightedGraph& g,
                                           const ContinuumEigensystem& eig, double kappa, std::size_t L);

/// d_n(x_i) - C1 rho(x_i) per node, and its max absolute value.
Vector degree_density_profile(const WeightedGraph& g, const Density& density);
double degree_density_error(const WeightedGraph& g, const Density& density);

struct FrontErrorRow {
  double t = 0.0;
  double fraction = 0.0;      // wrong labels outside the collar, over all nodes
  double max_distance = 0.0;  // over all wrong labels; infinite if the reference region has no boundary
  FrontStatus status = FrontStatus::Alive;
};

struct FrontError {
  std::vector<FrontErrorRow> rows;
  std::optional<double> extinction_time;  // first step time with no ones
};

using FrontFlow = std::function<FrontState(double)>;

FrontError front_error(const MBOTrace& trace, const PointCloud& cloud, const FrontFlow& flow,
                       const std::vector<double>& times, double collar);

void write_front_error_csv(const FrontError& fe, const std::string& path);
void write_spectral_report_csv(const SpectralReport& r, const std::string& path, const std::string& angles_path);
void write_heat_approx_csv(const HeatApproxReport& r, const std::string& path);

// ---------------------------------------------------------------------------
// Convergence studies

struct StudyJob {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  double eps = 0.0;
  double h = 0.0;
  std::size_t K = 0;
};

struct StudySettings {
  Manifold manifold;
  Density density;
  KernelForm kernel = KernelForm::Indicator;
  std::size_t trials = 4;
  std::size_t spectral_L = 5;
  std::size_t kernel_sample_rows = 400;
  double solver_tol = 1e-10;
};

struct StudyRow {
  StudyJob job;
  bool ok = false;
  std::string error;
  std::vector<std::pair<std::string, double>> metrics;
  double seconds = 0.0;
};

/// Runs every diagnostic per job with `workers` threads; a failing job is recorded and the rest continue.
std::vector<StudyRow> convergence_study(const std::vector<StudyJob>& jobs, const StudySettings& settings,
                                        std::size_t workers = 1);

std::vector<std::string> study_metric_names();
/// Wide table (one row per job), long table `metric,n,eps,h,K,seed,value`, and wall times kept apart.
void write_study(const std::vector<StudyRow>& rows, const std::string& wide_path, const std::string& long_path,
                 const std::string& timings_path);

}  // namespace mbolab
