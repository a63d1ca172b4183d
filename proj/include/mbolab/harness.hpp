#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mbolab/diagnostics.hpp"
#include "mbolab/schedule.hpp"

namespace mbolab {

inline constexpr const char* kVersion = "0.3.0";

/// One value of a key/value config: string, number, boolean or a flat list of those.
struct ConfigValue {
  enum class Type { String, Number, Bool, List };
  Type type = Type::String;
  std::string str;
  double num = 0.0;
  bool flag = false;
  std::vector<ConfigValue> items;

  std::string canonical() const;
};

/// TOML-style `key = value` file with `[section]` headers (keys become `section.key`) and `#` comments.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValueConfig load(const std::string& path);

  /// `key=value` override, value parsed like a file value (bare words are strings).
  void set(const std::string& assignment);
  void set(const std::string& key, const ConfigValue& value) { values_[key] = value; }
  void erase(const std::string& key) { values_.erase(key); }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, ConfigValue>& values() const { return values_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// A scalar is promoted to a one-element list.
  std::vector<double> get_list(const std::string& key) const;

  /// Sorted `key = value` lines, excluding keys that only place outputs (output, cache, jobs).
  std::string canonical() const;
  std::string hash() const;

 private:
  const ConfigValue& require(const std::string& key, ConfigValue::Type type) const;
  std::map<std::string, ConfigValue> values_;
};

ConfigValue parse_config_value(const std::string& text, const std::string& where);

enum class Scenario { ShrinkingCircle, StationaryBand, SphereCap, DensityDrift, HeatError, KernelError, SpectralReport };

std::string scenario_name(Scenario s);
Scenario parse_scenario(const std::string& s);

struct ExperimentConfig {
  Scenario scenario = Scenario::ShrinkingCircle;
  Manifold manifold;
  Density density;
  KernelForm kernel = KernelForm::Indicator;
  std::size_t n = 0;
  std::vector<std::uint64_t> seeds{1};
  double eps = 0.0;
  double h = 0.0;
  std::size_t K = 0;  // 0 means the full operator
  bool truncated = false;
  std::size_t steps = 0;  // 0 picks a scenario default
  bool stop_on_fixpoint = true;
  double collar = -1.0;  // negative means 2 (eps + h)
  bool dump_labels = false;
  double solver_tol = 1e-10;
  std::string output = "mbolab-out";
  std::string cache;
  std::size_t jobs = 1;

  // fronts
  double radius = 0.25;
  Point center{0.5, 0.5, 0.0};
  int band_axis = 0;
  double band_lo = 0.25;
  double band_hi = 0.75;
  double cap_theta = 1.0;

  // diagnostics
  std::size_t trials = 4;
  std::size_t spectral_L = 5;
  PairMode kernel_mode = PairMode::Auto;
  std::size_t kernel_sample_rows = 400;
  std::size_t continuum_grid = 256;

  std::string config_hash;
  std::string canonical_config;

  double kappa() const { return kernel_constants(KernelProfile{kernel}, 2).kappa; }
  double effective_collar() const { return collar >= 0 ? collar : 2 * (eps + h); }
  FrontDescriptor initial_front() const;
};

/// Builds and validates a run config. Every problem (unknown key, bad value, K > n, ...) throws Config,
/// before any sampling or compute happens. `cache` falls back to MBOLAB_CACHE, then `<output>/cache`.
ExperimentConfig experiment_from_config(const KeyValueConfig& cfg);

struct CacheStats {
  std::size_t hits = 0;
  std::size_t misses = 0;
};

/// Cache file name from (graph content hash, K, tol); the graph hash covers points, eps and kernel.
std::string spectrum_cache_path(const std::string& dir, const WeightedGraph& g, std::size_t K, double tol);
/// Loads a matching cache entry or computes and stores one (atomic rename). Corrupt entries are recomputed.
SpectralDecomposition cached_spectrum(const WeightedGraph& g, std::size_t K, double tol, const std::string& dir,
                                      CacheStats* stats = nullptr);

// Scenario summaries, reused by the acceptance suite.

struct CircleSummary {
  std::vector<double> times;
  std::vector<double> radius_sq;  // from the area fraction of label-1 nodes
  double slope = 0.0;             // least squares of r^2(t) over the first half-life
  double slope_reference = 0.0;   // -2 kappa
  std::optional<double> extinction;
  double extinction_reference = 0.0;  // r0^2 / (2 kappa)
  bool energy_monotone = true;
  double energy_max_increase = 0.0;
};

/// r^2 = (ones / n) vol / pi. The fit uses the steps with r^2 >= r0^2 / 2.
CircleSummary summarize_circle(const MBOTrace& trace, std::size_t n, const Manifold& m, double r0, double kappa);

/// Largest E(l+1) - E(l) over the trace (negative or zero for a monotone trace).
double max_energy_increase(const MBOTrace& trace);

struct BandEdges {
  double left = 0.0;
  double right = 0.0;
};

/// Edges of a label-1 band [a, b] around x_axis = L/2 from the per-half label counts, inverting the
/// density's marginal CDF along the axis.
BandEdges estimate_band_edges(const ClusterState& s, const PointCloud& cloud, int axis);

struct RunOutcome {
  std::vector<std::string> artifacts;  // relative to the output directory
  CacheStats cache;
  double seconds = 0.0;
};

/// Runs the scenario, writes artifacts, manifest.json and timings.json into cfg.output.
RunOutcome run_experiment(const ExperimentConfig& cfg);

/// Exit code for an error: 2 config/unsupported, 3 numerical/io/cache, 4 infeasible.
int exit_code_for(ErrorCode code);
std::string error_code_name(ErrorCode code);

/// Loads the config, applies overrides, runs. Returns 0, or the ErrorCode value of the failure after
/// writing `<output>/error.json` when possible; `message` receives the error text.
int run_config_file(const std::string& path, const std::vector<std::string>& overrides, std::string* message);

struct StudyConfig {
  StudySettings settings;
  std::vector<StudyJob> jobs;
  std::string output = "mbolab-study";
  std::size_t jobs_workers = 1;
  std::string config_hash;
  std::string canonical_config;
};

/// Sweep: lists n, eps, h, K (parallel, scalars broadcast) or `schedule.*` keys, crossed with `seeds`.
StudyConfig study_from_config(const KeyValueConfig& cfg);
int run_study_file(const std::string& path, const std::vector<std::string>& overrides, std::string* message);

/// Reads study_long.csv and radius*.csv files (or directories holding them) and writes figure data plus
/// one matplotlib script per figure. A missing column throws Config naming it.
std::vector<std::string> make_report(const std::vector<std::string>& inputs, const std::string& output);

}  // namespace mbolab
