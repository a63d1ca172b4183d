#include "mbolab/harness.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <boost/version.hpp>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace mbolab {

// ---------------------------------------------------------------------------
// key/value config

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Strips a trailing comment that is not inside quotes.
std::string strip_comment(const std::string& line) {
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quote) {
      if (c == '\\') ++i;
      else if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

std::vector<std::string> split_list(const std::string& body, const std::string& where) {
  std::vector<std::string> out;
  std::string cur;
  char quote = 0;
  for (std::size_t i = 0; i < body.size(); ++i) {
    const char c = body[i];
    if (quote) {
      cur += c;
      if (c == '\\' && i + 1 < body.size()) cur += body[++i];
      else if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
      cur += c;
    } else if (c == '[' || c == ']') {
      throw Error(ErrorCode::Config, where + ": nested lists are not supported");
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quote) throw Error(ErrorCode::Config, where + ": unterminated string");
  const std::string last = trim(cur);
  if (!last.empty()) out.push_back(last);
  else if (!out.empty()) throw Error(ErrorCode::Config, where + ": empty list element");
  for (const auto& s : out)
    if (s.empty()) throw Error(ErrorCode::Config, where + ": empty list element");
  return out;
}

}  // namespace

ConfigValue parse_config_value(const std::string& raw, const std::string& where) {
  const std::string text = trim(raw);
  ConfigValue v;
  if (text.empty()) throw Error(ErrorCode::Config, where + ": missing value");
  if (text.front() == '[') {
    if (text.back() != ']') throw Error(ErrorCode::Config, where + ": unterminated list");
    v.type = ConfigValue::Type::List;
    for (const auto& item : split_list(text.substr(1, text.size() - 2), where))
      v.items.push_back(parse_config_value(item, where));
    return v;
  }
  if (text.front() == '"' || text.front() == '\'') {
    const char q = text.front();
    if (text.size() < 2 || text.back() != q) throw Error(ErrorCode::Config, where + ": unterminated string");
    v.type = ConfigValue::Type::String;
    for (std::size_t i = 1; i + 1 < text.size(); ++i) {
      if (text[i] == '\\' && q == '"' && i + 2 < text.size()) ++i;
      v.str += text[i];
    }
    return v;
  }
  if (text == "true" || text == "false") {
    v.type = ConfigValue::Type::Bool;
    v.flag = text == "true";
    return v;
  }
  std::string digits;
  for (char c : text)
    if (c != '_') digits += c;
  char* end = nullptr;
  const double d = std::strtod(digits.c_str(), &end);
  if (end && *end == '\0' && !digits.empty() && std::isfinite(d)) {
    v.type = ConfigValue::Type::Number;
    v.num = d;
    return v;
  }
  // bare word
  v.type = ConfigValue::Type::String;
  v.str = text;
  return v;
}

std::string ConfigValue::canonical() const {
  switch (type) {
    case Type::String: {
      std::string out = "\"";
      for (char c : str) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
      }
      return out + "\"";
    }
    case Type::Number:
      return format_double(num);
    case Type::Bool:
      return flag ? "true" : "false";
    case Type::List: {
      std::string out = "[";
      for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + items[i].canonical();
      return out + "]";
    }
  }
  return "";
}

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& origin) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    const std::string body = trim(strip_comment(line));
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') throw Error(ErrorCode::Config, where + ": malformed section header");
      section = trim(body.substr(1, body.size() - 2));
      if (section.empty()) throw Error(ErrorCode::Config, where + ": empty section name");
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::Config, where + ": expected key = value");
    std::string key = trim(body.substr(0, eq));
    if (key.empty()) throw Error(ErrorCode::Config, where + ": empty key");
    if (!section.empty()) key = section + "." + key;
    if (cfg.has(key)) throw Error(ErrorCode::Config, where + ": duplicate key '" + key + "'");
    cfg.values_[key] = parse_config_value(body.substr(eq + 1), where);
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Config, "cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

void KeyValueConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw Error(ErrorCode::Config, "override '" + assignment + "' is not key=value");
  const std::string key = trim(assignment.substr(0, eq));
  if (key.empty()) throw Error(ErrorCode::Config, "override '" + assignment + "' has an empty key");
  values_[key] = parse_config_value(assignment.substr(eq + 1), "override " + key);
}

const ConfigValue& KeyValueConfig::require(const std::string& key, ConfigValue::Type type) const {
  const ConfigValue& v = values_.at(key);
  if (v.type != type) {
    static const char* names[] = {"a string", "a number", "a boolean", "a list"};
    throw Error(ErrorCode::Config, "config key '" + key + "' must be " + names[static_cast<int>(type)]);
  }
  return v;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? require(key, ConfigValue::Type::String).str : fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  return has(key) ? require(key, ConfigValue::Type::Number).num : fallback;
}

std::size_t KeyValueConfig::get_size(const std::string& key, std::size_t fallback) const {
  if (!has(key)) return fallback;
  const double d = require(key, ConfigValue::Type::Number).num;
  if (d < 0 || d != std::floor(d) || d > 9.0e15)
    throw Error(ErrorCode::Config, "config key '" + key + "' must be a nonnegative integer");
  return static_cast<std::size_t>(d);
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  return has(key) ? require(key, ConfigValue::Type::Bool).flag : fallback;
}

std::vector<double> KeyValueConfig::get_list(const std::string& key) const {
  if (!has(key)) return {};
  const ConfigValue& v = values_.at(key);
  if (v.type == ConfigValue::Type::Number) return {v.num};
  const ConfigValue& l = require(key, ConfigValue::Type::List);
  std::vector<double> out;
  for (const auto& it : l.items) {
    if (it.type != ConfigValue::Type::Number)
      throw Error(ErrorCode::Config, "config key '" + key + "' must be a list of numbers");
    out.push_back(it.num);
  }
  return out;
}

std::string KeyValueConfig::canonical() const {
  static const std::set<std::string> placement{"output", "cache", "jobs"};
  std::string out;
  for (const auto& [k, v] : values_) {
    if (placement.count(k)) continue;
    out += k + " = " + v.canonical() + "\n";
  }
  return out;
}

std::string KeyValueConfig::hash() const {
  Fnv1a h;
  const std::string c = canonical();
  h.update(c.data(), c.size());
  return hex64(h.digest());
}

// ---------------------------------------------------------------------------
// experiment config

std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::ShrinkingCircle: return "shrinking-circle";
    case Scenario::StationaryBand: return "stationary-band";
    case Scenario::SphereCap: return "sphere-cap";
    case Scenario::DensityDrift: return "density-drift";
    case Scenario::HeatError: return "heat-error";
    case Scenario::KernelError: return "kernel-error";
    case Scenario::SpectralReport: return "spectral-report";
  }
  return "";
}

Scenario parse_scenario(const std::string& s) {
  for (Scenario x : {Scenario::ShrinkingCircle, Scenario::StationaryBand, Scenario::SphereCap, Scenario::DensityDrift,
                     Scenario::HeatError, Scenario::KernelError, Scenario::SpectralReport})
    if (scenario_name(x) == s) return x;
  throw Error(ErrorCode::Config,
              "unknown scenario '" + s +
                  "' (expected shrinking-circle, stationary-band, sphere-cap, density-drift, heat-error, "
                  "kernel-error or spectral-report)");
}

FrontDescriptor ExperimentConfig::initial_front() const {
  switch (scenario) {
    case Scenario::ShrinkingCircle: return FrontDescriptor::circle(manifold, center, radius);
    case Scenario::StationaryBand:
    case Scenario::DensityDrift: return FrontDescriptor::band(manifold, band_axis, band_lo, band_hi);
    case Scenario::SphereCap: return FrontDescriptor::cap(cap_theta);
    default: return FrontDescriptor::empty(manifold);
  }
}

namespace {

void check_keys(const KeyValueConfig& cfg, const std::set<std::string>& allowed) {
  for (const auto& [k, v] : cfg.values())
    if (!allowed.count(k)) throw Error(ErrorCode::Config, "unknown config key '" + k + "'");
}

const std::set<std::string> kCommonKeys{
    "manifold", "side", "density", "density_amplitude", "density_axis", "kernel", "seeds", "seed",
    "solver_tol", "output", "jobs", "trials", "spectral_L", "kernel_sample_rows", "schedule.k", "schedule.s",
    "schedule.q", "schedule.c_h", "schedule.c_eps", "schedule.delta", "schedule.mode"};

Manifold manifold_from(const KeyValueConfig& cfg, const std::string& fallback) {
  const std::string name = cfg.get_string("manifold", fallback);
  if (name == "torus") {
    const double side = cfg.get_double("side", 1.0);
    if (!(side > 0)) throw Error(ErrorCode::Config, "side must be positive");
    return Manifold::torus(side);
  }
  if (name == "sphere") return Manifold::sphere();
  throw Error(ErrorCode::Config, "unknown manifold '" + name + "' (expected torus or sphere)");
}

Density density_from(const KeyValueConfig& cfg, const Manifold& m, const std::string& fallback, double amp) {
  const std::string name = cfg.get_string("density", fallback);
  if (name == "uniform") return Density::uniform(m);
  if (name == "cosine") {
    const double a = cfg.get_double("density_amplitude", amp);
    const double axis = cfg.get_double("density_axis", 0);
    if (axis != std::floor(axis)) throw Error(ErrorCode::Config, "density_axis must be an integer");
    return Density::cosine(m, static_cast<int>(axis), a);
  }
  throw Error(ErrorCode::Config, "unknown density '" + name + "' (expected uniform or cosine)");
}

KernelForm kernel_from(const KeyValueConfig& cfg) {
  return KernelProfile::parse(cfg.get_string("kernel", "indicator")).form;
}

std::vector<std::uint64_t> seeds_from(const KeyValueConfig& cfg) {
  std::vector<std::uint64_t> seeds;
  if (cfg.has("seeds") && cfg.has("seed")) throw Error(ErrorCode::Config, "give either seed or seeds, not both");
  const auto raw = cfg.has("seeds") ? cfg.get_list("seeds") : cfg.get_list("seed");
  for (double s : raw) {
    if (s < 0 || s != std::floor(s)) throw Error(ErrorCode::Config, "seeds must be nonnegative integers");
    seeds.push_back(static_cast<std::uint64_t>(s));
  }
  if (seeds.empty()) seeds.push_back(1);
  return seeds;
}

bool has_schedule(const KeyValueConfig& cfg) {
  for (const auto& [k, v] : cfg.values())
    if (k.rfind("schedule.", 0) == 0) return true;
  return false;
}

ScheduleOutput schedule_from(const KeyValueConfig& cfg, std::size_t n) {
  ScheduleParams p;
  p.k = static_cast<int>(cfg.get_double("schedule.k", 2));
  p.s = cfg.get_double("schedule.s", p.s);
  p.q = cfg.get_double("schedule.q", p.q);
  p.c_h = cfg.get_double("schedule.c_h", p.c_h);
  p.c_eps = cfg.get_double("schedule.c_eps", p.c_eps);
  p.delta = cfg.get_double("schedule.delta", p.delta);
  const std::string mode = cfg.get_string("schedule.mode", "theorem");
  ScheduleOutput o;
  if (mode == "theorem") o = schedule_for_n(p, n);
  else if (mode == "desk") o = desk_schedule_for_n(p, n);
  else throw Error(ErrorCode::Config, "schedule.mode must be theorem or desk");
  if (!o.feasible)
    throw Error(ErrorCode::Config, "schedule gives eps = " + format_double(o.eps) + " at n = " + std::to_string(n) +
                                       ", below the lower bound " + format_double(std::max(o.eps_lb_thm, o.eps_lb_cor)));
  return o;
}

std::string default_cache(const KeyValueConfig& cfg, const std::string& output) {
  if (const char* env = std::getenv("MBOLAB_CACHE"); env && *env) return env;
  return cfg.get_string("cache", (fs::path(output) / "cache").string());
}

template <typename F>
auto as_config_error(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidArgument) throw Error(ErrorCode::Config, e.what());
    throw;
  }
}

}  // namespace

ExperimentConfig experiment_from_config(const KeyValueConfig& cfg) {
  return as_config_error([&] {
    std::set<std::string> allowed = kCommonKeys;
    for (const char* k : {"scenario", "n", "eps", "h", "K", "operator", "steps", "stop_on_fixpoint", "collar",
                          "dump_labels", "cache", "radius", "center", "band_axis", "band_lo", "band_hi", "cap_theta",
                          "kernel_mode", "continuum_grid"})
      allowed.insert(k);
    check_keys(cfg, allowed);
    if (!cfg.has("scenario")) throw Error(ErrorCode::Config, "missing required key 'scenario'");

    ExperimentConfig c;
    c.scenario = parse_scenario(cfg.get_string("scenario", ""));
    const bool sphere_scenario = c.scenario == Scenario::SphereCap;
    c.manifold = manifold_from(cfg, sphere_scenario ? "sphere" : "torus");
    const bool drift = c.scenario == Scenario::DensityDrift;
    c.density = density_from(cfg, c.manifold, drift ? "cosine" : "uniform", 0.3);
    c.kernel = kernel_from(cfg);
    c.seeds = seeds_from(cfg);
    if (!cfg.has("n")) throw Error(ErrorCode::Config, "missing required key 'n'");
    c.n = cfg.get_size("n", 0);
    if (c.n < 2) throw Error(ErrorCode::Config, "n must be at least 2");

    std::optional<ScheduleOutput> sched;
    if (has_schedule(cfg)) sched = schedule_from(cfg, c.n);
    c.eps = cfg.get_double("eps", sched ? sched->eps : 0.0);
    c.h = cfg.get_double("h", sched ? sched->h : 0.0);
    c.K = cfg.get_size("K", sched ? sched->K : 0);
    if (!(c.eps > 0)) throw Error(ErrorCode::Config, "eps must be positive (set eps or schedule.*)");
    if (!(c.h > 0)) throw Error(ErrorCode::Config, "h must be positive (set h or schedule.*)");
    if (c.K > c.n)
      throw Error(ErrorCode::Config, "K = " + std::to_string(c.K) + " exceeds n = " + std::to_string(c.n));

    const std::string op = cfg.get_string("operator", c.K > 0 ? "truncated" : "full");
    if (op == "truncated") {
      if (c.K == 0) throw Error(ErrorCode::Config, "operator = truncated needs K >= 1");
      c.truncated = true;
    } else if (op != "full") {
      throw Error(ErrorCode::Config, "operator must be full or truncated");
    }

    c.steps = cfg.get_size("steps", 0);
    c.stop_on_fixpoint = cfg.get_bool("stop_on_fixpoint", true);
    c.collar = cfg.get_double("collar", -1.0);
    c.dump_labels = cfg.get_bool("dump_labels", false);
    c.solver_tol = cfg.get_double("solver_tol", 1e-10);
    if (!(c.solver_tol > 0)) throw Error(ErrorCode::Config, "solver_tol must be positive");
    c.output = cfg.get_string("output", c.output);
    c.cache = default_cache(cfg, c.output);
    c.jobs = std::max<std::size_t>(1, cfg.get_size("jobs", 1));

    c.radius = cfg.get_double("radius", c.radius);
    if (cfg.has("center")) {
      const auto v = cfg.get_list("center");
      if (v.size() != 2) throw Error(ErrorCode::Config, "center must have two coordinates");
      c.center = {v[0], v[1], 0.0};
    } else {
      c.center = {c.manifold.side / 2, c.manifold.side / 2, 0.0};
    }
    c.band_axis = static_cast<int>(cfg.get_size("band_axis", 0));
    c.band_lo = cfg.get_double("band_lo", 0.25 * c.manifold.side);
    c.band_hi = cfg.get_double("band_hi", 0.75 * c.manifold.side);
    c.cap_theta = cfg.get_double("cap_theta", c.cap_theta);

    c.trials = cfg.get_size("trials", c.trials);
    if (c.trials < 1) throw Error(ErrorCode::Config, "trials must be at least 1");
    c.spectral_L = cfg.get_size("spectral_L", c.spectral_L);
    const std::string km = cfg.get_string("kernel_mode", "auto");
    if (km == "auto") c.kernel_mode = PairMode::Auto;
    else if (km == "exhaustive") c.kernel_mode = PairMode::Exhaustive;
    else if (km == "sampled") c.kernel_mode = PairMode::Sampled;
    else throw Error(ErrorCode::Config, "kernel_mode must be auto, exhaustive or sampled");
    c.kernel_sample_rows = cfg.get_size("kernel_sample_rows", c.kernel_sample_rows);
    c.continuum_grid = cfg.get_size("continuum_grid", c.continuum_grid);

    const bool torus_only = c.scenario == Scenario::ShrinkingCircle || c.scenario == Scenario::StationaryBand ||
                            c.scenario == Scenario::DensityDrift;
    if (torus_only && c.manifold.kind != ManifoldKind::FlatTorus)
      throw Error(ErrorCode::Config, scenario_name(c.scenario) + " runs on the torus");
    if (sphere_scenario && c.manifold.kind != ManifoldKind::Sphere)
      throw Error(ErrorCode::Config, "sphere-cap runs on the sphere");
    if ((c.scenario == Scenario::ShrinkingCircle || sphere_scenario) && !c.density.is_uniform())
      throw Error(ErrorCode::Config, scenario_name(c.scenario) + " compares against a closed-form flow and needs uniform density");
    if (drift && c.band_axis != c.density.axis)
      throw Error(ErrorCode::Config, "density-drift needs band_axis equal to density_axis");
    if (c.scenario == Scenario::KernelError || c.scenario == Scenario::SpectralReport) {
      if (c.K == 0) throw Error(ErrorCode::Config, scenario_name(c.scenario) + " needs K >= 1");
      if (!c.density.is_uniform()) throw Error(ErrorCode::Config, scenario_name(c.scenario) + " needs uniform density");
    }
    if (c.scenario == Scenario::SpectralReport && c.spectral_L > c.K)
      throw Error(ErrorCode::Config, "spectral_L must not exceed K");
    if (c.scenario == Scenario::HeatError && c.manifold.kind == ManifoldKind::Sphere && !c.density.is_uniform())
      throw Error(ErrorCode::Config, "no heat oracle for a non-uniform density on the sphere");
    if (c.continuum_grid < 4 || (c.continuum_grid & (c.continuum_grid - 1)))
      throw Error(ErrorCode::Config, "continuum_grid must be a power of two >= 4");
    c.initial_front().validate();

    c.canonical_config = cfg.canonical();
    c.config_hash = cfg.hash();
    return c;
  });
}

// ---------------------------------------------------------------------------
// spectrum cache

std::string spectrum_cache_path(const std::string& dir, const WeightedGraph& g, std::size_t K, double tol) {
  return (fs::path(dir) / ("spec_" + hex64(g.content_hash()) + "_K" + std::to_string(K) + "_tol" +
                           format_double(tol) + ".mbospec"))
      .string();
}

SpectralDecomposition cached_spectrum(const WeightedGraph& g, std::size_t K, double tol, const std::string& dir,
                                      CacheStats* stats) {
  static std::mutex stats_mutex;
  const std::string path = spectrum_cache_path(dir, g, K, tol);
  if (fs::exists(path)) {
    try {
      SpectralDecomposition dec = spectrum_cache_load(path, g);
      if (dec.K == K && dec.tolerance == tol) {
        if (stats) {
          std::lock_guard lock(stats_mutex);
          ++stats->hits;
        }
        return dec;
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Cache) throw;
    }
  }
  SpectralDecomposition dec = partial_eigendecomposition(g, K, tol);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create cache directory " + dir);
  spectrum_cache_save(dec, path);
  if (stats) {
    std::lock_guard lock(stats_mutex);
    ++stats->misses;
  }
  return dec;
}

// ---------------------------------------------------------------------------
// summaries

double max_energy_increase(const MBOTrace& trace) {
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t l = 1; l < trace.energies.size(); ++l)
    worst = std::max(worst, trace.energies[l] - trace.energies[l - 1]);
  return worst;
}

namespace {

// Least-squares slope of y on x.
double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t m = x.size();
  if (m < 2) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < m; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= m;
  my /= m;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < m; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxx > 0 ? sxy / sxx : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

CircleSummary summarize_circle(const MBOTrace& trace, std::size_t n, const Manifold& m, double r0, double kappa) {
  CircleSummary s;
  s.slope_reference = -2.0 * kappa;
  s.extinction_reference = r0 * r0 / (2.0 * kappa);
  std::vector<double> fx, fy;
  bool half = false;
  for (std::size_t l = 0; l < trace.steps(); ++l) {
    const double r2 = double(trace.states[l].ones()) / n * m.volume() / kPi;
    s.times.push_back(trace.time(l));
    s.radius_sq.push_back(r2);
    if (!half && r2 >= 0.5 * r0 * r0) {
      fx.push_back(trace.time(l));
      fy.push_back(r2);
    } else {
      half = true;
    }
    if (!s.extinction && trace.states[l].ones() == 0) s.extinction = trace.time(l);
  }
  s.slope = ls_slope(fx, fy);
  s.energy_max_increase = max_energy_increase(trace);
  s.energy_monotone = !(s.energy_max_increase > 1e-10);
  return s;
}

BandEdges estimate_band_edges(const ClusterState& s, const PointCloud& cloud, int axis) {
  if (cloud.manifold.kind != ManifoldKind::FlatTorus) throw Error(ErrorCode::Unsupported, "band edges need the torus");
  const double L = cloud.manifold.side;
  const Density& d = cloud.density;
  const double a = d.is_uniform() || d.axis != axis ? 0.0 : d.amplitude;
  // marginal CDF along the axis
  auto F = [&](double x) { return (x + a * L / (2 * kPi) * std::sin(2 * kPi * x / L)) / L; };
  auto invert = [&](double target, double lo, double hi) {
    target = std::clamp(target, F(lo), F(hi));
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (F(mid) < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  };
  std::size_t left = 0, right = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!s.labels[i]) continue;
    (cloud.points[i][axis] < L / 2 ? left : right)++;
  }
  const double n = static_cast<double>(s.size());
  BandEdges e;
  e.left = invert(F(L / 2) - left / n, 0.0, L / 2);
  e.right = invert(F(L / 2) + right / n, L / 2, L);
  return e;
}

// ---------------------------------------------------------------------------
// scenario runs

namespace {

struct SeedResult {
  std::vector<std::string> artifacts;
  json summary;
  double seconds = 0.0;
};

std::string seed_file(const std::string& stem, std::uint64_t seed, const std::string& ext = ".csv") {
  return stem + "_seed" + std::to_string(seed) + ext;
}

struct SeedContext {
  const ExperimentConfig& cfg;
  std::uint64_t seed;
  fs::path out;
  CacheStats* cache;
  SeedResult result;

  std::string path(const std::string& name) {
    result.artifacts.push_back(name);
    return (out / name).string();
  }
};

std::shared_ptr<const WeightedGraph> make_graph(const ExperimentConfig& cfg, std::uint64_t seed) {
  const PointCloud cloud = sample_points(cfg.manifold, cfg.density, cfg.n, seed);
  return std::make_shared<const WeightedGraph>(build_graph(cloud, cfg.eps, KernelProfile{cfg.kernel}));
}

std::shared_ptr<const SpectralDecomposition> spectrum_for(SeedContext& ctx, const WeightedGraph& g) {
  return std::make_shared<const SpectralDecomposition>(
      cached_spectrum(g, ctx.cfg.K, ctx.cfg.solver_tol, ctx.cfg.cache, ctx.cache));
}

HeatOperator make_operator(SeedContext& ctx, const std::shared_ptr<const WeightedGraph>& g) {
  if (ctx.cfg.truncated) return HeatOperator::truncated(g, spectrum_for(ctx, *g));
  return HeatOperator::full(g);
}

std::size_t default_steps(const ExperimentConfig& c) {
  if (c.steps) return c.steps;
  const double kappa = c.kappa();
  switch (c.scenario) {
    case Scenario::ShrinkingCircle:
      return static_cast<std::size_t>(std::ceil(1.5 * c.radius * c.radius / (2 * kappa) / c.h)) + 1;
    case Scenario::SphereCap: {
      const double cs = std::cos(c.cap_theta);
      if (cs > 0) return static_cast<std::size_t>(std::ceil(1.5 * -std::log(cs) / kappa / c.h)) + 1;
      return 50;
    }
    case Scenario::DensityDrift:
      return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.05 / c.h)));
    default:
      return 50;
  }
}

json trace_summary(const MBOTrace& trace) {
  json j;
  j["steps"] = trace.steps();
  j["operator"] = trace.operator_descriptor;
  j["pinned_at"] = trace.pinned_at ? json(*trace.pinned_at) : json(nullptr);
  j["final_ones"] = trace.states.back().ones();
  const double inc = max_energy_increase(trace);
  j["energy_max_increase"] = std::isfinite(inc) ? json(inc) : json(nullptr);
  return j;
}

std::vector<double> step_times(const MBOTrace& trace) {
  std::vector<double> t;
  for (std::size_t l = 0; l < trace.steps(); ++l) t.push_back(trace.time(l));
  return t;
}

void write_front_outputs(SeedContext& ctx, const MBOTrace& trace, const PointCloud& cloud, const FrontFlow& flow) {
  const FrontError fe = front_error(trace, cloud, flow, step_times(trace), ctx.cfg.effective_collar());
  write_front_error_csv(fe, ctx.path(seed_file("front_error", ctx.seed)));
  double worst = 0.0;
  for (const auto& r : fe.rows) worst = std::max(worst, r.fraction);
  ctx.result.summary["front_fraction_max"] = worst;
  ctx.result.summary["collar"] = ctx.cfg.effective_collar();
  ctx.result.summary["extinction_estimate"] = fe.extinction_time ? json(*fe.extinction_time) : json(nullptr);
}

MBOTrace run_and_write_trace(SeedContext& ctx, const HeatOperator& op, const ClusterState& chi0) {
  const MBOTrace trace = run_mbo(op, ctx.cfg.h, chi0, default_steps(ctx.cfg), ctx.cfg.stop_on_fixpoint);
  write_trace_csv(trace, ctx.path(seed_file("trace", ctx.seed)),
                  ctx.cfg.dump_labels ? ctx.path(seed_file("labels", ctx.seed)) : "");
  ctx.result.summary["trace"] = trace_summary(trace);
  return trace;
}

void run_circle(SeedContext& ctx) {
  const auto& c = ctx.cfg;
  const auto g = make_graph(c, ctx.seed);
  const HeatOperator op = make_operator(ctx, g);
  const FrontDescriptor front = c.initial_front();
  const MBOTrace trace = run_and_write_trace(ctx, op, initial_state_from_region(g->cloud(), front));
  const double kappa = c.kappa();
  write_front_outputs(ctx, trace, g->cloud(), [&](double t) { return analytic_front(front, kappa, t); });
  const CircleSummary s = summarize_circle(trace, c.n, c.manifold, c.radius, kappa);
  std::ofstream out(ctx.path(seed_file("radius", ctx.seed)));
  out << "time,radius_sq,radius_sq_reference\n";
  for (std::size_t l = 0; l < s.times.size(); ++l)
    out << format_double(s.times[l]) << ',' << format_double(s.radius_sq[l]) << ','
        << format_double(std::max(0.0, c.radius * c.radius - 2 * kappa * s.times[l])) << '\n';
  auto& j = ctx.result.summary;
  j["slope"] = std::isfinite(s.slope) ? json(s.slope) : json(nullptr);
  j["slope_reference"] = s.slope_reference;
  j["extinction_reference"] = s.extinction_reference;
  j["energy_monotone"] = s.energy_monotone;
}

void run_band(SeedContext& ctx) {
  const auto& c = ctx.cfg;
  const auto g = make_graph(c, ctx.seed);
  const HeatOperator op = make_operator(ctx, g);
  const FrontDescriptor front = c.initial_front();
  const MBOTrace trace = run_and_write_trace(ctx, op, initial_state_from_region(g->cloud(), front));
  write_front_outputs(ctx, trace, g->cloud(), [&](double) { return FrontState{FrontStatus::Alive, front}; });
}

void run_cap(SeedContext& ctx) {
  const auto& c = ctx.cfg;
  const auto g = make_graph(c, ctx.seed);
  const HeatOperator op = make_operator(ctx, g);
  const FrontDescriptor front = c.initial_front();
  const MBOTrace trace = run_and_write_trace(ctx, op, initial_state_from_region(g->cloud(), front));
  const double kappa = c.kappa();
  write_front_outputs(ctx, trace, g->cloud(), [&](double t) { return analytic_front(front, kappa, t); });

  std::ofstream out(ctx.path(seed_file("cap", ctx.seed)));
  out << "step,time,theta_graph,theta_continuum,theta_analytic\n";
  ZonalSet zonal = ZonalSet::cap(c.cap_theta);
  for (std::size_t l = 0; l < trace.steps(); ++l) {
    const double frac = double(trace.states[l].ones()) / c.n;
    const double theta_graph = std::acos(std::clamp(1.0 - 2.0 * frac, -1.0, 1.0));
    // single-cap continuum state: its area gives the colatitude
    const double theta_cont = std::acos(std::clamp(1.0 - zonal.area() / (2 * kPi), -1.0, 1.0));
    const FrontState a = analytic_front(front, kappa, trace.time(l));
    const double theta_ref = a.status == FrontStatus::Extinct ? 0.0 : a.status == FrontStatus::Filled ? kPi : a.front.theta0;
    out << l << ',' << format_double(trace.time(l)) << ',' << format_double(theta_graph) << ','
        << format_double(theta_cont) << ',' << format_double(theta_ref) << '\n';
    zonal = zonal_mbo_step(zonal, kappa, c.h);
  }
}

void run_drift(SeedContext& ctx) {
  const auto& c = ctx.cfg;
  const auto g = make_graph(c, ctx.seed);
  const HeatOperator op = make_operator(ctx, g);
  const FrontDescriptor front = c.initial_front();
  const MBOTrace trace = run_and_write_trace(ctx, op, initial_state_from_region(g->cloud(), front));
  const double kappa = c.kappa();

  // continuum MBO on a grid with the same density
  GridField grid = GridField::indicator(c.continuum_grid, front);
  ContinuumMBOConfig mc;
  mc.kappa = kappa;
  mc.h = c.h;
  auto grid_edges = [&](const GridField& f) {
    const std::size_t N = f.n;
    std::size_t left = 0, right = 0;
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j) {
        const std::size_t idx = c.band_axis == 0 ? i * N + j : j * N + i;
        if (f.values[idx] < 0.5) continue;
        (i < N / 2 ? left : right)++;
      }
    const double cell = f.side / N;
    return BandEdges{f.side / 2 - double(left) / N * cell, f.side / 2 + double(right) / N * cell};
  };

  std::ofstream out(ctx.path(seed_file("drift", ctx.seed)));
  out << "step,time,left_graph,right_graph,left_continuum,right_continuum,left_ode,right_ode\n";
  const BandEdges g0 = estimate_band_edges(trace.states.front(), g->cloud(), c.band_axis);
  double graph_shift = 0.0, ode_shift = 0.0;
  for (std::size_t l = 0; l < trace.steps(); ++l) {
    const double t = trace.time(l);
    const BandEdges ge = estimate_band_edges(trace.states[l], g->cloud(), c.band_axis);
    const BandEdges ce = grid_edges(grid);
    const double lo = drift_front_ode(c.band_lo, c.manifold, c.density, kappa, t);
    const double hi = drift_front_ode(c.band_hi, c.manifold, c.density, kappa, t);
    out << l << ',' << format_double(t) << ',' << format_double(ge.left) << ',' << format_double(ge.right) << ','
        << format_double(ce.left) << ',' << format_double(ce.right) << ',' << format_double(lo) << ','
        << format_double(hi) << '\n';
    if (l + 1 < trace.steps()) grid = continuum_mbo_step(grid, mc, c.density);
    // inward displacement of both edges, each measured from its own t = 0 estimate
    graph_shift = 0.5 * ((ge.left - g0.left) + (g0.right - ge.right));
    ode_shift = 0.5 * ((lo - c.band_lo) + (c.band_hi - hi));
  }
  auto& j = ctx.result.summary;
  j["final_time"] = trace.time(trace.steps() - 1);
  j["displacement_graph"] = graph_shift;
  j["displacement_ode"] = ode_shift;
}

void run_heat_error(SeedContext& ctx) {
  const auto& c = ctx.cfg;
  const auto g = make_graph(c, ctx.seed);
  const double kappa = c.kappa();
  const HeatOracle oracle = HeatOracle::for_density(c.manifold, c.density, kappa * c.h);
  const auto tests = default_test_functions(c.manifold);
  std::vector<std::pair<std::string, HeatOperator>> ops{{"full", HeatOperator::full(g)}};
  if (c.K > 0) ops.emplace_back("truncated", HeatOperator::truncated(g, spectrum_for(ctx, *g)));
  std::ofstream cond(ctx.path(seed_file("conditions", ctx.seed)));
  cond << "operator,mass_defect,max_principle,max_principle_ratio,sqrt_h,h32,fit_sup,fit_lip,fit_condition,"
          "fit_well_conditioned\n";
  for (const auto& [name, op] : ops) {
    const HeatApproxReport r = heat_approx_error(op, oracle, c.h, kappa, tests);
    write_heat_approx_csv(r, ctx.path(seed_file("heat_error_" + name, ctx.seed)));
    const MaxPrincipleResult mp = max_principle_error(op, c.h, c.trials, ctx.seed);
    cond << name << ',' << format_double(mass_defect(op, c.h)) << ',' << format_double(mp.raw) << ','
         << format_double(mp.ratio) << ',' << format_double(r.sqrt_h) << ',' << format_double(r.h32) << ','
         << format_double(r.coef_sup) << ',' << format_double(r.coef_lip) << ',' << format_double(r.condition) << ','
         << (r.well_conditioned ? 1 : 0) << '\n';
  }
}

void run_kernel_error(SeedContext& ctx) {
  const auto& c = ctx.cfg;
  const auto g = make_graph(c, ctx.seed);
  const auto dec = spectrum_for(ctx, *g);
  const double kappa = c.kappa();
  const double need = heat_truncation_eigenvalue(kappa * c.h);
  std::size_t count = 64;
  auto eig = std::make_unique<ContinuumEigensystem>(c.manifold, c.density, count);
  while (eig->complete_through() < need) eig = std::make_unique<ContinuumEigensystem>(c.manifold, c.density, count *= 2);
  const KernelErrorReport r = kernel_sup_error(*dec, *g, *eig, c.h, kappa, c.kernel_mode, c.kernel_sample_rows, ctx.seed);
  std::ofstream out(ctx.path(seed_file("kernel_error", ctx.seed)));
  out << "n,eps,h,K,sup_error,normalized,pairs,exhaustive\n";
  out << c.n << ',' << format_double(c.eps) << ',' << format_double(c.h) << ',' << c.K << ','
      << format_double(r.sup_error) << ',' << format_double(r.normalized) << ',' << r.pairs << ','
      << (r.exhaustive ? 1 : 0) << '\n';
  ctx.result.summary["normalized"] = r.normalized;
}

void run_spectral(SeedContext& ctx) {
  const auto& c = ctx.cfg;
  const auto g = make_graph(c, ctx.seed);
  const auto dec = spectrum_for(ctx, *g);
  const ContinuumEigensystem eig(c.manifold, c.density, std::max<std::size_t>(c.spectral_L, 16));
  const SpectralReport r = spectral_convergence_report(*dec, *g, eig, c.kappa(), c.spectral_L);
  write_spectral_report_csv(r, ctx.path(seed_file("spectral", ctx.seed)), ctx.path(seed_file("angles", ctx.seed)));
  std::ofstream out(ctx.path(seed_file("degree", ctx.seed)));
  out << "node,degree_minus_c1_rho\n";
  const Vector prof = degree_density_profile(*g, c.density);
  for (std::size_t i = 0; i < prof.size(); ++i) out << i << ',' << format_double(prof[i]) << '\n';
  ctx.result.summary["degree_error"] = degree_density_error(*g, c.density);
}

void run_seed(SeedContext& ctx) {
  switch (ctx.cfg.scenario) {
    case Scenario::ShrinkingCircle: return run_circle(ctx);
    case Scenario::StationaryBand: return run_band(ctx);
    case Scenario::SphereCap: return run_cap(ctx);
    case Scenario::DensityDrift: return run_drift(ctx);
    case Scenario::HeatError: return run_heat_error(ctx);
    case Scenario::KernelError: return run_kernel_error(ctx);
    case Scenario::SpectralReport: return run_spectral(ctx);
  }
}

// Runs f(i) for i < count on `workers` threads; rethrows the lowest-index failure.
template <typename F>
void parallel_for(std::size_t count, std::size_t workers, F&& f) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(1, count));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void prepare_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorCode::Config, "cannot create directory " + dir);
}

void write_json(const json& j, const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + p.string());
  out << j.dump(2) << '\n';
}

json versions() {
  json v;
  v["mbolab"] = kVersion;
  v["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
  v["boost"] = std::to_string(BOOST_VERSION / 100000) + "." + std::to_string(BOOST_VERSION / 100 % 1000) + "." +
               std::to_string(BOOST_VERSION % 100);
  v["compiler"] = __VERSION__;
  return v;
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  prepare_dir(cfg.output);
  std::vector<SeedContext> ctxs;
  RunOutcome outcome;
  for (auto s : cfg.seeds) ctxs.push_back(SeedContext{cfg, s, fs::path(cfg.output), &outcome.cache, {}});
  parallel_for(ctxs.size(), cfg.jobs, [&](std::size_t i) {
    const auto t0 = std::chrono::steady_clock::now();
    run_seed(ctxs[i]);
    ctxs[i].result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  });

  json summary;
  summary["scenario"] = scenario_name(cfg.scenario);
  summary["kappa"] = cfg.kappa();
  json per_seed = json::array();
  for (const auto& c : ctxs) {
    json j = c.result.summary;
    j["seed"] = c.seed;
    per_seed.push_back(j);
    for (const auto& a : c.result.artifacts) outcome.artifacts.push_back(a);
  }
  summary["seeds"] = per_seed;
  write_json(summary, fs::path(cfg.output) / "summary.json");
  outcome.artifacts.push_back("summary.json");

  json manifest;
  manifest["tool"] = "mbolab";
  manifest["versions"] = versions();
  manifest["scenario"] = scenario_name(cfg.scenario);
  manifest["config_hash"] = cfg.config_hash;
  manifest["config"] = cfg.canonical_config;
  manifest["artifacts"] = outcome.artifacts;
  manifest["timings"] = "timings.json";
  write_json(manifest, fs::path(cfg.output) / "manifest.json");

  outcome.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json timings;
  timings["total_seconds"] = outcome.seconds;
  json seeds = json::array();
  for (const auto& c : ctxs) seeds.push_back({{"seed", c.seed}, {"seconds", c.result.seconds}});
  timings["seeds"] = seeds;
  timings["cache"] = {{"directory", cfg.cache}, {"hits", outcome.cache.hits}, {"misses", outcome.cache.misses}};
  write_json(timings, fs::path(cfg.output) / "timings.json");
  return outcome;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Config:
    case ErrorCode::InvalidArgument:
    case ErrorCode::Unsupported: return 2;
    case ErrorCode::Infeasible: return 4;
    default: return 3;
  }
}

std::string error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::Config: return "config";
    case ErrorCode::Numerical: return "numerical";
    case ErrorCode::Infeasible: return "infeasible";
    case ErrorCode::Io: return "io";
    case ErrorCode::Unsupported: return "unsupported";
    case ErrorCode::Cache: return "cache";
  }
  return "unknown";
}

namespace {

KeyValueConfig load_with_overrides(const std::string& path, const std::vector<std::string>& overrides) {
  KeyValueConfig cfg = path.empty() ? KeyValueConfig{} : KeyValueConfig::load(path);
  for (const auto& o : overrides) cfg.set(o);
  return cfg;
}

// Best-effort error record next to the outputs.
void write_error_record(const std::string& output, ErrorCode code, const std::string& message) {
  if (output.empty()) return;
  std::error_code ec;
  fs::create_directories(output, ec);
  if (ec) return;
  json j;
  j["error"] = error_code_name(code);
  j["exit_code"] = exit_code_for(code);
  j["message"] = message;
  std::ofstream out(fs::path(output) / "error.json");
  if (out) out << j.dump(2) << '\n';
}

// Returns 0 or the ErrorCode value.
template <typename F>
int guarded(const std::string& output_guess, std::string* message, F&& f) {
  ErrorCode code;
  std::string what;
  try {
    f();
    return 0;
  } catch (const Error& e) {
    code = e.code();
    what = e.what();
  } catch (const std::bad_alloc&) {
    code = ErrorCode::Numerical;
    what = "out of memory";
  } catch (const std::exception& e) {
    code = ErrorCode::Numerical;
    what = e.what();
  }
  if (message) *message = what;
  write_error_record(output_guess, code, what);
  return static_cast<int>(code);
}

std::string output_of(const std::string& path, const std::vector<std::string>& overrides, const char* fallback) {
  try {
    return load_with_overrides(path, overrides).get_string("output", fallback);
  } catch (...) {
    return "";
  }
}

}  // namespace

int run_config_file(const std::string& path, const std::vector<std::string>& overrides, std::string* message) {
  return guarded(output_of(path, overrides, "mbolab-out"), message, [&] {
    const ExperimentConfig cfg = experiment_from_config(load_with_overrides(path, overrides));
    fs::remove(fs::path(cfg.output) / "error.json");
    run_experiment(cfg);
  });
}

// ---------------------------------------------------------------------------
// studies

StudyConfig study_from_config(const KeyValueConfig& cfg) {
  return as_config_error([&] {
    std::set<std::string> allowed = kCommonKeys;
    for (const char* k : {"n", "eps", "h", "K", "scenario"}) allowed.insert(k);
    check_keys(cfg, allowed);
    StudyConfig s;
    s.settings.manifold = manifold_from(cfg, "torus");
    s.settings.density = density_from(cfg, s.settings.manifold, "uniform", 0.3);
    s.settings.kernel = kernel_from(cfg);
    s.settings.trials = cfg.get_size("trials", s.settings.trials);
    if (s.settings.trials < 1) throw Error(ErrorCode::Config, "trials must be at least 1");
    s.settings.spectral_L = cfg.get_size("spectral_L", s.settings.spectral_L);
    s.settings.kernel_sample_rows = cfg.get_size("kernel_sample_rows", s.settings.kernel_sample_rows);
    s.settings.solver_tol = cfg.get_double("solver_tol", s.settings.solver_tol);
    s.output = cfg.get_string("output", s.output);
    s.jobs_workers = std::max<std::size_t>(1, cfg.get_size("jobs", 1));
    const auto seeds = seeds_from(cfg);
    const auto ns = cfg.get_list("n");
    const auto eps = cfg.get_list("eps"), hs = cfg.get_list("h"), Ks = cfg.get_list("K");
    const bool sched = has_schedule(cfg);
    auto pick = [&](const std::vector<double>& v, std::size_t i, const char* key) -> std::optional<double> {
      if (v.empty()) return std::nullopt;
      if (v.size() == 1) return v[0];
      if (v.size() != ns.size())
        throw Error(ErrorCode::Config, std::string("list '") + key + "' must have one entry or one per n");
      return v[i];
    };
    for (std::size_t i = 0; i < ns.size(); ++i) {
      if (ns[i] < 2 || ns[i] != std::floor(ns[i])) throw Error(ErrorCode::Config, "n entries must be integers >= 2");
      const auto n = static_cast<std::size_t>(ns[i]);
      std::optional<ScheduleOutput> so;
      if (sched) so = schedule_from(cfg, n);
      StudyJob job;
      job.n = n;
      job.eps = pick(eps, i, "eps").value_or(so ? so->eps : 0.0);
      job.h = pick(hs, i, "h").value_or(so ? so->h : 0.0);
      const double K = pick(Ks, i, "K").value_or(so ? double(so->K) : 0.0);
      if (!(job.eps > 0) || !(job.h > 0)) throw Error(ErrorCode::Config, "every job needs eps > 0 and h > 0");
      if (K < 1 || K != std::floor(K)) throw Error(ErrorCode::Config, "every job needs an integer K >= 1");
      job.K = static_cast<std::size_t>(K);
      if (job.K > n) throw Error(ErrorCode::Config, "K = " + std::to_string(job.K) + " exceeds n = " + std::to_string(n));
      for (auto seed : seeds) {
        job.seed = seed;
        s.jobs.push_back(job);
      }
    }
    s.canonical_config = cfg.canonical();
    s.config_hash = cfg.hash();
    return s;
  });
}

int run_study_file(const std::string& path, const std::vector<std::string>& overrides, std::string* message) {
  return guarded(output_of(path, overrides, "mbolab-study"), message, [&] {
    const StudyConfig sc = study_from_config(load_with_overrides(path, overrides));
    prepare_dir(sc.output);
    fs::remove(fs::path(sc.output) / "error.json");
    const auto rows = convergence_study(sc.jobs, sc.settings, sc.jobs_workers);
    const fs::path out(sc.output);
    write_study(rows, (out / "study.csv").string(), (out / "study_long.csv").string(),
                (out / "timings.csv").string());
    json manifest;
    manifest["tool"] = "mbolab";
    manifest["versions"] = versions();
    manifest["scenario"] = "study";
    manifest["config_hash"] = sc.config_hash;
    manifest["config"] = sc.canonical_config;
    manifest["artifacts"] = {"study.csv", "study_long.csv"};
    std::size_t failed = 0;
    for (const auto& r : rows) failed += r.ok ? 0 : 1;
    manifest["runs"] = rows.size();
    manifest["failed_runs"] = failed;
    manifest["timings"] = "timings.csv";
    write_json(manifest, out / "manifest.json");
  });
}

// ---------------------------------------------------------------------------
// report

namespace {

struct CsvTable {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw Error(ErrorCode::Config, path + ": missing column '" + name + "'");
  }
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Config, "cannot read " + path);
  CsvTable t;
  t.path = path;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::Config, path + ": empty file (no header)");
  t.header = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    t.rows.push_back(split_csv_line(line));
    if (t.rows.back().size() != t.header.size())
      throw Error(ErrorCode::Config, path + ": row " + std::to_string(t.rows.size()) + " has the wrong field count");
  }
  return t;
}

double to_number(const std::string& s, const std::string& where) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (!end || *end) throw Error(ErrorCode::Config, where + ": '" + s + "' is not a number");
  return v;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + p.string());
  out << text;
}

const char* kErrorScript = R"PY(import csv
import os
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
series = {}
with open(os.path.join(here, "error_vs_n.csv")) as f:
    for row in csv.DictReader(f):
        m = float(row["median"])
        if m > 0:
            series.setdefault(row["metric"], []).append((float(row["n"]), m))
fig, ax = plt.subplots()
for name, pts in sorted(series.items()):
    pts.sort()
    ax.loglog([p[0] for p in pts], [p[1] for p in pts], "o-", label=name)
ax.set_xlabel("n")
ax.set_ylabel("median over seeds")
if series:
    ax.legend(fontsize="small")
fig.savefig(os.path.join(here, "error_vs_n.png"), dpi=150)
)PY";

const char* kRadiusScript = R"PY(import csv
import os
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
data = {}
with open(os.path.join(here, "radius_vs_time.csv")) as f:
    for row in csv.DictReader(f):
        data.setdefault(row["source"], []).append((float(row["time"]), float(row["radius_sq"])))
fits = {}
with open(os.path.join(here, "radius_fit.csv")) as f:
    for row in csv.DictReader(f):
        fits[row["source"]] = (float(row["slope"]), float(row["intercept"]))
fig, ax = plt.subplots()
for name, pts in sorted(data.items()):
    ax.plot([p[0] for p in pts], [p[1] for p in pts], ".", label=name)
    if name in fits:
        s, b = fits[name]
        ts = [p[0] for p in pts]
        ax.plot(ts, [b + s * t for t in ts], "-", label="%s fit slope %.4g" % (name, s))
ax.set_xlabel("t")
ax.set_ylabel("r^2")
if data:
    ax.legend(fontsize="small")
fig.savefig(os.path.join(here, "radius_vs_time.png"), dpi=150)
)PY";

const char* kRegionScript = R"PY(import csv
import os
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
fig, axes = plt.subplots(1, 2, figsize=(10, 4))
for ax, k in zip(axes, (2, 3)):
    s, q = [], []
    with open(os.path.join(here, "region_k%d.csv" % k)) as f:
        for row in csv.DictReader(f):
            s.append(float(row["s"]))
            q.append(float(row["q_boundary"]))
    top = 20.0
    ax.fill_between(s, [min(v, top) for v in q], top, alpha=0.35, label="admissible")
    ax.plot(s, q, "k-", label="q = 1/(2/k - s)")
    ax.set_ylim(0, top)
    ax.set_xlim(0, 2.0 / k)
    ax.set_xlabel("s")
    ax.set_ylabel("q")
    ax.set_title("k = %d" % k)
    ax.legend(fontsize="small")
fig.savefig(os.path.join(here, "parameter_region.png"), dpi=150)
)PY";

}  // namespace

std::vector<std::string> make_report(const std::vector<std::string>& inputs, const std::string& output) {
  std::vector<std::string> long_files, radius_files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<std::string> found;
      for (const auto& e : fs::directory_iterator(in)) {
        const std::string name = e.path().filename().string();
        if (name == "study_long.csv") long_files.push_back(e.path().string());
        if (name.rfind("radius", 0) == 0 && e.path().extension() == ".csv") found.push_back(e.path().string());
      }
      std::sort(found.begin(), found.end());
      radius_files.insert(radius_files.end(), found.begin(), found.end());
    } else if (fs::exists(in)) {
      (fs::path(in).filename().string().rfind("radius", 0) == 0 ? radius_files : long_files).push_back(in);
    } else {
      throw Error(ErrorCode::Config, "report input " + in + " does not exist");
    }
  }
  prepare_dir(output);
  const fs::path out(output);
  std::vector<std::string> written;

  // error vs n
  std::map<std::pair<std::string, double>, std::vector<double>> groups;
  for (const auto& p : long_files) {
    const CsvTable t = read_csv(p);
    const std::size_t cm = t.column("metric"), cn = t.column("n"), cv = t.column("value");
    for (const char* c : {"eps", "h", "K", "seed"}) t.column(c);
    for (const auto& r : t.rows) {
      const double v = to_number(r[cv], p);
      if (std::isfinite(v)) groups[{r[cm], to_number(r[cn], p)}].push_back(v);
    }
  }
  {
    std::ostringstream os;
    os << "metric,n,median,min,max,count\n";
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> fits;
    for (const auto& [key, vals] : groups) {
      const double med = median(vals);
      os << key.first << ',' << format_double(key.second) << ',' << format_double(med) << ','
         << format_double(*std::min_element(vals.begin(), vals.end())) << ','
         << format_double(*std::max_element(vals.begin(), vals.end())) << ',' << vals.size() << '\n';
      if (med > 0) {
        fits[key.first].first.push_back(std::log(key.second));
        fits[key.first].second.push_back(std::log(med));
      }
    }
    write_text(out / "error_vs_n.csv", os.str());
    std::ostringstream fs_;
    fs_ << "metric,loglog_slope,levels\n";
    for (const auto& [m, xy] : fits)
      if (xy.first.size() >= 2) fs_ << m << ',' << format_double(ls_slope(xy.first, xy.second)) << ',' << xy.first.size() << '\n';
    write_text(out / "error_vs_n_fits.csv", fs_.str());
    write_text(out / "plot_error_vs_n.py", kErrorScript);
    for (const char* f : {"error_vs_n.csv", "error_vs_n_fits.csv", "plot_error_vs_n.py"}) written.push_back(f);
  }

  // radius vs time
  {
    std::ostringstream data, fit;
    data << "source,time,radius_sq\n";
    fit << "source,slope,intercept,points\n";
    for (const auto& p : radius_files) {
      const CsvTable t = read_csv(p);
      const std::size_t ct = t.column("time"), cr = t.column("radius_sq");
      const std::string src = fs::path(p).parent_path().filename().string() + "/" + fs::path(p).stem().string();
      std::vector<double> x, y;
      double r0 = std::numeric_limits<double>::quiet_NaN();
      bool half = false;
      for (const auto& r : t.rows) {
        const double tt = to_number(r[ct], p), rr = to_number(r[cr], p);
        data << src << ',' << format_double(tt) << ',' << format_double(rr) << '\n';
        if (std::isnan(r0)) r0 = rr;
        if (!half && rr >= 0.5 * r0) {
          x.push_back(tt);
          y.push_back(rr);
        } else {
          half = true;
        }
      }
      if (x.size() >= 2) {
        const double s = ls_slope(x, y);
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
          mx += x[i];
          my += y[i];
        }
        fit << src << ',' << format_double(s) << ',' << format_double(my / x.size() - s * mx / x.size()) << ','
            << x.size() << '\n';
      }
    }
    write_text(out / "radius_vs_time.csv", data.str());
    write_text(out / "radius_fit.csv", fit.str());
    write_text(out / "plot_radius.py", kRadiusScript);
    for (const char* f : {"radius_vs_time.csv", "radius_fit.csv", "plot_radius.py"}) written.push_back(f);
  }

  // admissible (s, q) region
  for (int k : {2, 3}) {
    std::ostringstream os;
    os << "s,q_boundary\n";
    for (auto [s, q] : region_boundary(k, 199)) os << format_double(s) << ',' << format_double(q) << '\n';
    const std::string name = "region_k" + std::to_string(k) + ".csv";
    write_text(out / name, os.str());
    written.push_back(name);
  }
  write_text(out / "plot_region.py", kRegionScript);
  written.push_back("plot_region.py");
  return written;
}

}  // namespace mbolab
