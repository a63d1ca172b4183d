// Command-line front end; talks to the library only through the C API.
#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "mbolab/mbolab.h"

namespace {

int report_failure(mbolab_status s, const std::string& what) {
  std::cerr << "mbolab: " << what << ": " << mbolab_status_name(s) << ": " << mbolab_last_error() << '\n';
  return mbolab_exit_code(s);
}

struct CloudDeleter {
  void operator()(mbolab_cloud* c) const { mbolab_cloud_free(c); }
};
struct GraphDeleter {
  void operator()(mbolab_graph* g) const { mbolab_graph_free(g); }
};
struct SpectrumDeleter {
  void operator()(mbolab_spectrum* s) const { mbolab_spectrum_free(s); }
};
using CloudPtr = std::unique_ptr<mbolab_cloud, CloudDeleter>;
using GraphPtr = std::unique_ptr<mbolab_graph, GraphDeleter>;
using SpectrumPtr = std::unique_ptr<mbolab_spectrum, SpectrumDeleter>;

struct DomainOptions {
  std::string manifold = "torus";
  double side = 1.0;
  std::string density = "uniform";
  double amplitude = 0.3;
  int axis = 0;
  std::size_t n = 0;
  std::uint64_t seed = 1;
  std::string points;

  void add(CLI::App* app, bool allow_points) {
    app->add_option("--manifold", manifold, "torus or sphere")->check(CLI::IsMember({"torus", "sphere"}));
    app->add_option("--side", side, "torus side length");
    app->add_option("--density", density, "uniform or cosine")->check(CLI::IsMember({"uniform", "cosine"}));
    app->add_option("--amplitude", amplitude, "cosine density amplitude");
    app->add_option("--axis", axis, "cosine density axis (0-based)");
    app->add_option("-n,--n", n, "number of points");
    app->add_option("--seed", seed, "sampling seed");
    if (allow_points) app->add_option("--points", points, "read points from a CSV written by `sample`");
  }

  mbolab_status cloud(CloudPtr& out) const {
    mbolab_cloud* c = nullptr;
    mbolab_status s;
    if (!points.empty()) {
      s = mbolab_cloud_load(points.c_str(), &c);
    } else {
      mbolab_domain d;
      mbolab_domain_default(&d);
      d.manifold = manifold.c_str();
      d.side = side;
      d.density = density.c_str();
      d.amplitude = amplitude;
      d.axis = axis;
      s = mbolab_cloud_sample(&d, n, seed, &c);
    }
    out.reset(c);
    return s;
  }
};

struct GraphOptions {
  double eps = 0.0;
  std::string kernel = "indicator";

  void add(CLI::App* app) {
    app->add_option("--eps", eps, "graph length scale")->required();
    app->add_option("--kernel", kernel, "indicator, triangular or quadratic");
  }
};

std::vector<const char*> c_strings(const std::vector<std::string>& v) {
  std::vector<const char*> out;
  for (const auto& s : v) out.push_back(s.c_str());
  return out;
}

// Flags that override config keys.
struct ConfigOverrides {
  std::string config;
  std::vector<std::string> sets;
  std::string output, cache, scenario;
  std::size_t jobs = 0;

  void add(CLI::App* app) {
    app->add_option("-c,--config", config, "key = value config file");
    app->add_option("--set", sets, "override a config key (key=value), repeatable");
    app->add_option("-o,--output", output, "output directory");
    app->add_option("--cache", cache, "spectrum cache directory");
    app->add_option("--scenario", scenario, "scenario name");
    app->add_option("-j,--jobs", jobs, "worker threads");
  }

  std::vector<std::string> list() const {
    std::vector<std::string> out;
    if (!scenario.empty()) out.push_back("scenario=" + scenario);
    if (!output.empty()) out.push_back("output=\"" + output + "\"");
    if (!cache.empty()) out.push_back("cache=\"" + cache + "\"");
    if (jobs) out.push_back("jobs=" + std::to_string(jobs));
    out.insert(out.end(), sets.begin(), sets.end());
    return out;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph MBO numerical lab"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(mbolab_version()));

  // sample
  auto* sample = app.add_subcommand("sample", "sample a point cloud");
  DomainOptions sample_dom;
  std::string sample_out;
  sample_dom.add(sample, false);
  sample->add_option("-o,--output", sample_out, "CSV path (metadata goes to <path>.meta.json)")->required();

  // build-graph
  auto* build = app.add_subcommand("build-graph", "build the epsilon graph and export it");
  DomainOptions build_dom;
  GraphOptions build_graph;
  std::string build_prefix;
  build_dom.add(build, true);
  build_graph.add(build);
  build->add_option("-o,--output", build_prefix, "prefix for _edges.csv, _degrees.csv, _meta.json")->required();

  // spectrum
  auto* spec = app.add_subcommand("spectrum", "lowest eigenpairs of the graph Laplacian");
  DomainOptions spec_dom;
  GraphOptions spec_graph;
  std::size_t spec_K = 10;
  double spec_tol = 1e-10;
  std::string spec_out, spec_cache;
  bool spec_csv = false;
  spec_dom.add(spec, true);
  spec_graph.add(spec);
  spec->add_option("-K,--K", spec_K, "number of eigenpairs");
  spec->add_option("--tol", spec_tol, "solver tolerance");
  spec->add_option("-o,--output", spec_out, "write the binary spectrum file here");
  spec->add_option("--cache", spec_cache, "cache directory (MBOLAB_CACHE if unset)");
  spec->add_flag("--csv", spec_csv, "print `l,eigenvalue,residual` only");

  // run
  auto* run = app.add_subcommand("run", "run a scenario from a config file");
  ConfigOverrides run_ov;
  run_ov.add(run);

  // validate-schedule
  auto* val = app.add_subcommand("validate-schedule", "evaluate the parameter schedule");
  int val_k = 2;
  double val_s = 0.25, val_q = 5.0, val_ch = 1.0, val_ceps = 1.0, val_delta = 0.1;
  std::vector<std::size_t> val_n;
  bool val_csv = false, val_desk = false;
  double val_eps = 0.0, val_h = 0.0;
  std::size_t val_K = 0;
  val->add_option("-k", val_k, "intrinsic dimension (2 or 3)");
  val->add_option("-s", val_s, "exponent s");
  val->add_option("-q", val_q, "exponent q");
  val->add_option("-n", val_n, "sample sizes")->required();
  val->add_option("--c-h", val_ch, "constant in h");
  val->add_option("--c-eps", val_ceps, "constant in eps");
  val->add_option("--delta", val_delta, "slack on the log exponents");
  val->add_flag("--desk", val_desk, "eps just above the corollary lower rate");
  val->add_flag("--csv", val_csv, "machine CSV only");
  auto* eps_opt = val->add_option("--eps", val_eps, "check a user-chosen eps (with --time-step, -K)");
  val->add_option("--time-step", val_h, "user-chosen h")->needs(eps_opt);
  val->add_option("-K", val_K, "user-chosen K")->needs(eps_opt);

  // study
  auto* study = app.add_subcommand("study", "run a convergence sweep");
  ConfigOverrides study_ov;
  study_ov.add(study);

  // report
  auto* rep = app.add_subcommand("report", "figure data and plotting scripts from study outputs");
  std::vector<std::string> rep_in;
  std::string rep_out = "mbolab-report";
  rep->add_option("inputs", rep_in, "study directories or CSV files");
  rep->add_option("-o,--output", rep_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (sample->parsed()) {
    CloudPtr c;
    if (auto s = sample_dom.cloud(c)) return report_failure(s, "sample");
    if (auto s = mbolab_cloud_save(c.get(), sample_out.c_str())) return report_failure(s, "sample");
    std::cout << "wrote " << mbolab_cloud_size(c.get()) << " points to " << sample_out << '\n';
    return 0;
  }

  if (build->parsed()) {
    CloudPtr c;
    if (auto s = build_dom.cloud(c)) return report_failure(s, "build-graph");
    mbolab_graph* raw = nullptr;
    const mbolab_status s = mbolab_graph_build(c.get(), build_graph.eps, build_graph.kernel.c_str(), &raw);
    GraphPtr g(raw);
    if (s) return report_failure(s, "build-graph");
    const std::string e = build_prefix + "_edges.csv", d = build_prefix + "_degrees.csv", m = build_prefix + "_meta.json";
    if (auto s2 = mbolab_graph_save(g.get(), e.c_str(), d.c_str(), m.c_str())) return report_failure(s2, "build-graph");
    std::cout << "n = " << mbolab_graph_size(g.get()) << ", edges = " << mbolab_graph_edges(g.get())
              << ", components = " << mbolab_graph_components(g.get()) << '\n';
    return 0;
  }

  if (spec->parsed()) {
    CloudPtr c;
    if (auto s = spec_dom.cloud(c)) return report_failure(s, "spectrum");
    mbolab_graph* graw = nullptr;
    mbolab_status s = mbolab_graph_build(c.get(), spec_graph.eps, spec_graph.kernel.c_str(), &graw);
    GraphPtr g(graw);
    if (s) return report_failure(s, "spectrum");
    std::string cache = spec_cache;
    if (cache.empty())
      if (const char* env = std::getenv("MBOLAB_CACHE"); env && *env) cache = env;
    mbolab_spectrum* sraw = nullptr;
    int hit = 0;
    s = cache.empty() ? mbolab_spectrum_compute(g.get(), spec_K, spec_tol, &sraw)
                      : mbolab_spectrum_cached(g.get(), spec_K, spec_tol, cache.c_str(), &hit, &sraw);
    SpectrumPtr sp(sraw);
    if (s) return report_failure(s, "spectrum");
    if (!spec_out.empty())
      if (auto s2 = mbolab_spectrum_save(sp.get(), spec_out.c_str())) return report_failure(s2, "spectrum");
    const std::size_t K = mbolab_spectrum_count(sp.get());
    std::vector<double> ev(K), res(K);
    mbolab_spectrum_eigenvalues(sp.get(), ev.data(), K);
    mbolab_spectrum_residuals(sp.get(), res.data(), K);
    if (!spec_csv && !cache.empty()) std::cout << "cache " << (hit ? "hit" : "miss") << " in " << cache << '\n';
    std::cout << "l,eigenvalue,residual\n";
    for (std::size_t l = 0; l < K; ++l) std::printf("%zu,%.17g,%.3g\n", l + 1, ev[l], res[l]);
    return 0;
  }

  if (run->parsed() || study->parsed()) {
    const ConfigOverrides& ov = run->parsed() ? run_ov : study_ov;
    const auto list = ov.list();
    const auto ptrs = c_strings(list);
    const mbolab_status s = run->parsed() ? mbolab_run_config(ov.config.c_str(), ptrs.data(), ptrs.size())
                                          : mbolab_study(ov.config.c_str(), ptrs.data(), ptrs.size());
    if (s) return report_failure(s, run->parsed() ? "run" : "study");
    return 0;
  }

  if (val->parsed()) {
    char* text = nullptr;
    mbolab_status s;
    if (*eps_opt) {
      if (val_n.size() != 1) {
        std::cerr << "mbolab: validate-schedule: --eps checks need exactly one -n\n";
        return 2;
      }
      int proven = 0, practical = 0;
      s = mbolab_practical_check(val_n[0], val_eps, val_h, val_K, val_k, val_csv, &text, &proven, &practical);
    } else {
      mbolab_schedule_params p;
      mbolab_schedule_default(&p);
      p.k = val_k;
      p.s = val_s;
      p.q = val_q;
      p.c_h = val_ch;
      p.c_eps = val_ceps;
      p.delta = val_delta;
      p.desk = val_desk;
      s = mbolab_validate_schedule(&p, val_n.data(), val_n.size(), val_csv, &text);
    }
    if (text) {
      std::cout << text;
      mbolab_string_free(text);
    }
    if (s == MBOLAB_ERR_INFEASIBLE) {
      if (!val_csv) std::cerr << "mbolab: validate-schedule: " << mbolab_last_error() << '\n';
      return mbolab_exit_code(s);
    }
    if (s) return report_failure(s, "validate-schedule");
    return 0;
  }

  if (rep->parsed()) {
    const auto ptrs = c_strings(rep_in);
    if (auto s = mbolab_report(ptrs.data(), ptrs.size(), rep_out.c_str())) return report_failure(s, "report");
    std::cout << "report written to " << rep_out << '\n';
    return 0;
  }
  return 0;
}
