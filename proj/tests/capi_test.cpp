// Exercises the shared library through the C header only.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mbolab/mbolab.h"

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mbolab_capi_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

mbolab_cloud* torus_cloud(size_t n, uint64_t seed) {
  mbolab_domain d;
  mbolab_domain_default(&d);
  mbolab_cloud* c = nullptr;
  REQUIRE(mbolab_cloud_sample(&d, n, seed, &c) == MBOLAB_OK);
  return c;
}

}  // namespace

TEST_CASE("version, status names and exit codes") {
  CHECK(std::string(mbolab_version()).size() > 0);
  CHECK(mbolab_exit_code(MBOLAB_OK) == 0);
  CHECK(mbolab_exit_code(MBOLAB_ERR_CONFIG) == 2);
  CHECK(mbolab_exit_code(MBOLAB_ERR_INVALID_ARGUMENT) == 2);
  CHECK(mbolab_exit_code(MBOLAB_ERR_UNSUPPORTED) == 2);
  CHECK(mbolab_exit_code(MBOLAB_ERR_NUMERICAL) == 3);
  CHECK(mbolab_exit_code(MBOLAB_ERR_IO) == 3);
  CHECK(mbolab_exit_code(MBOLAB_ERR_CACHE) == 3);
  CHECK(mbolab_exit_code(MBOLAB_ERR_INFEASIBLE) == 4);
  CHECK(std::string(mbolab_status_name(MBOLAB_ERR_INFEASIBLE)) == "infeasible");
}

TEST_CASE("null and bad arguments are rejected with a message") {
  mbolab_cloud* c = nullptr;
  CHECK(mbolab_cloud_sample(nullptr, 10, 1, &c) == MBOLAB_ERR_INVALID_ARGUMENT);
  CHECK(std::string(mbolab_last_error()).size() > 0);
  mbolab_domain d;
  mbolab_domain_default(&d);
  d.manifold = "klein";
  CHECK(mbolab_cloud_sample(&d, 10, 1, &c) != MBOLAB_OK);
  CHECK(c == nullptr);
  CHECK(mbolab_cloud_load("/nonexistent/cloud.csv", &c) == MBOLAB_ERR_IO);
  double c1, c2, kappa;
  CHECK(mbolab_kernel_constants("gaussian", 2, &c1, &c2, &kappa) != MBOLAB_OK);
  REQUIRE(mbolab_kernel_constants("indicator", 2, &c1, &c2, &kappa) == MBOLAB_OK);
  CHECK(std::string(mbolab_last_error()).empty());
  CHECK(kappa == doctest::Approx(0.125));
  CHECK(c1 == doctest::Approx(M_PI));
  mbolab_cloud_free(nullptr);
  mbolab_graph_free(nullptr);
  mbolab_spectrum_free(nullptr);
  mbolab_string_free(nullptr);
}

TEST_CASE("cloud, graph, heat and spectrum round trip") {
  const fs::path dir = scratch("roundtrip");
  mbolab_cloud* c = torus_cloud(500, 3);
  CHECK(mbolab_cloud_size(c) == 500);
  double p[3];
  REQUIRE(mbolab_cloud_point(c, 7, p) == MBOLAB_OK);
  CHECK(p[2] == 0.0);
  CHECK(mbolab_cloud_point(c, 500, p) == MBOLAB_ERR_INVALID_ARGUMENT);
  const std::string path = (dir / "c.csv").string();
  REQUIRE(mbolab_cloud_save(c, path.c_str()) == MBOLAB_OK);
  CHECK(fs::exists(path + ".meta.json"));
  mbolab_cloud* back = nullptr;
  REQUIRE(mbolab_cloud_load(path.c_str(), &back) == MBOLAB_OK);
  double q[3];
  mbolab_cloud_point(back, 7, q);
  CHECK(q[0] == p[0]);
  CHECK(q[1] == p[1]);

  mbolab_graph* g = nullptr;
  REQUIRE(mbolab_graph_build(c, 0.15, "indicator", &g) == MBOLAB_OK);
  mbolab_graph* g2 = nullptr;
  REQUIRE(mbolab_graph_build(back, 0.15, "indicator", &g2) == MBOLAB_OK);
  CHECK(mbolab_graph_hash(g) == mbolab_graph_hash(g2));
  CHECK(mbolab_graph_size(g) == 500);
  CHECK(mbolab_graph_edges(g) > 0);
  CHECK(mbolab_graph_components(g) == 1);
  std::vector<double> deg(500);
  REQUIRE(mbolab_graph_degrees(g, deg.data(), deg.size()) == MBOLAB_OK);
  CHECK(mbolab_graph_degrees(g, deg.data(), 10) == MBOLAB_ERR_INVALID_ARGUMENT);
  REQUIRE(mbolab_graph_save(g, (dir / "e.csv").string().c_str(), (dir / "d.csv").string().c_str(),
                            (dir / "m.json").string().c_str()) == MBOLAB_OK);

  std::vector<double> one(500, 1.0), y(500);
  REQUIRE(mbolab_graph_heat(g, 0.01, one.data(), y.data()) == MBOLAB_OK);
  for (double v : y) CHECK(std::abs(v - 1) <= 1e-10);
  CHECK(mbolab_graph_heat(g, -1.0, one.data(), y.data()) == MBOLAB_ERR_INVALID_ARGUMENT);

  mbolab_spectrum* s = nullptr;
  REQUIRE(mbolab_spectrum_compute(g, 6, 1e-10, &s) == MBOLAB_OK);
  CHECK(mbolab_spectrum_count(s) == 6);
  CHECK(mbolab_spectrum_nodes(s) == 500);
  std::vector<double> ev(6), res(6), v(500);
  REQUIRE(mbolab_spectrum_eigenvalues(s, ev.data(), 6) == MBOLAB_OK);
  REQUIRE(mbolab_spectrum_residuals(s, res.data(), 6) == MBOLAB_OK);
  REQUIRE(mbolab_spectrum_vector(s, 1, v.data(), 500) == MBOLAB_OK);
  CHECK(mbolab_spectrum_vector(s, 6, v.data(), 500) == MBOLAB_ERR_INVALID_ARGUMENT);
  CHECK(std::abs(ev[0]) < 1e-6);
  for (std::size_t l = 1; l < 6; ++l) CHECK(ev[l] >= ev[l - 1]);
  CHECK(mbolab_spectrum_compute(g, 501, 1e-10, &s) == MBOLAB_ERR_INVALID_ARGUMENT);

  const std::string sp = (dir / "s.mbospec").string();
  REQUIRE(mbolab_spectrum_save(s, sp.c_str()) == MBOLAB_OK);
  mbolab_spectrum* loaded = nullptr;
  REQUIRE(mbolab_spectrum_load(sp.c_str(), g, &loaded) == MBOLAB_OK);
  std::vector<double> ev2(6);
  mbolab_spectrum_eigenvalues(loaded, ev2.data(), 6);
  CHECK(ev2 == ev);
  mbolab_cloud* other_c = torus_cloud(500, 4);
  mbolab_graph* other = nullptr;
  REQUIRE(mbolab_graph_build(other_c, 0.15, "indicator", &other) == MBOLAB_OK);
  mbolab_spectrum* wrong = nullptr;
  CHECK(mbolab_spectrum_load(sp.c_str(), other, &wrong) == MBOLAB_ERR_CACHE);

  int hit = -1;
  mbolab_spectrum* cached = nullptr;
  const std::string cache = (dir / "cache").string();
  REQUIRE(mbolab_spectrum_cached(g, 6, 1e-10, cache.c_str(), &hit, &cached) == MBOLAB_OK);
  CHECK(hit == 0);
  mbolab_spectrum_free(cached);
  REQUIRE(mbolab_spectrum_cached(g, 6, 1e-10, cache.c_str(), &hit, &cached) == MBOLAB_OK);
  CHECK(hit == 1);

  for (auto* x : {cached, loaded, s}) mbolab_spectrum_free(x);
  for (auto* x : {g, g2, other}) mbolab_graph_free(x);
  for (auto* x : {c, back, other_c}) mbolab_cloud_free(x);
}

TEST_CASE("isolated nodes: the graph builds, the Laplacian refuses") {
  mbolab_cloud* c = torus_cloud(50, 1);
  mbolab_graph* g = nullptr;
  REQUIRE(mbolab_graph_build(c, 0.001, "indicator", &g) == MBOLAB_OK);
  CHECK(mbolab_graph_components(g) == 50);
  mbolab_spectrum* s = nullptr;
  CHECK(mbolab_spectrum_compute(g, 3, 1e-10, &s) == MBOLAB_ERR_NUMERICAL);
  CHECK(std::string(mbolab_last_error()).find("node 0") != std::string::npos);
  CHECK(s == nullptr);
  std::vector<double> u(50, 1.0), y(50);
  CHECK(mbolab_graph_heat(g, 0.1, u.data(), y.data()) == MBOLAB_ERR_NUMERICAL);
  mbolab_graph_free(g);
  mbolab_cloud_free(c);
}

TEST_CASE("schedule validation reports infeasibility as data") {
  mbolab_schedule_params p;
  mbolab_schedule_default(&p);
  const size_t ns[] = {10000, 1000000};
  char* text = nullptr;
  const mbolab_status st = mbolab_validate_schedule(&p, ns, 2, 1, &text);
  REQUIRE(text != nullptr);
  const std::string csv(text);
  mbolab_string_free(text);
  CHECK(csv.rfind("n,K,alpha,beta,h,eps,eps_lb_thm,eps_lb_cor,feasible,clamped\n", 0) == 0);
  CHECK(csv.find("\n10000,10000,") != std::string::npos);
  CHECK((st == MBOLAB_OK || st == MBOLAB_ERR_INFEASIBLE));

  p.c_eps = 1e-9;
  text = nullptr;
  CHECK(mbolab_validate_schedule(&p, ns, 2, 1, &text) == MBOLAB_ERR_INFEASIBLE);
  CHECK(text != nullptr);
  mbolab_string_free(text);

  p.q = 1.0;  // inadmissible
  text = nullptr;
  CHECK(mbolab_validate_schedule(&p, ns, 2, 0, &text) == MBOLAB_ERR_CONFIG);
  CHECK(text == nullptr);

  int proven = -1, practical = -1;
  REQUIRE(mbolab_practical_check(8000, 0.06, 0.02, 64, 2, 0, &text, &proven, &practical) == MBOLAB_OK);
  CHECK(proven == 0);
  CHECK(practical == 1);
  CHECK(std::string(text).find("outside proven regime, inside practical regime") != std::string::npos);
  mbolab_string_free(text);
}

TEST_CASE("config runs report through status codes") {
  const fs::path dir = scratch("run");
  {
    std::ofstream cfg(dir / "c.toml");
    cfg << "scenario = \"stationary-band\"\nn = 400\neps = 0.18\nh = 0.02\nsteps = 2\noutput = \""
        << (dir / "out").string() << "\"\n";
  }
  const std::string cfg = (dir / "c.toml").string();
  CHECK(mbolab_run_config(cfg.c_str(), nullptr, 0) == MBOLAB_OK);
  CHECK(fs::exists(dir / "out" / "manifest.json"));
  const char* bad[] = {"K=401"};
  CHECK(mbolab_run_config(cfg.c_str(), bad, 1) == MBOLAB_ERR_CONFIG);
  CHECK(fs::exists(dir / "out" / "error.json"));
  CHECK(mbolab_run_config("/nonexistent.toml", nullptr, 0) == MBOLAB_ERR_CONFIG);
  const char* inputs[] = {"/nonexistent_dir"};
  CHECK(mbolab_report(inputs, 1, (dir / "r").string().c_str()) == MBOLAB_ERR_CONFIG);
}
