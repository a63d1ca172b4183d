#include <doctest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "support.hpp"

using namespace testing;

namespace {

PointCloud torus_cloud(std::vector<Point> pts) {
  PointCloud c;
  c.manifold = Manifold::torus(1.0);
  c.density = Density::uniform(c.manifold);
  c.points = std::move(pts);
  return c;
}

}  // namespace

TEST_CASE("kernel constants match closed forms and radial quadrature") {
  const KernelConstants k2 = kernel_constants(KernelProfile{KernelForm::Indicator}, 2);
  CHECK(k2.c1 == doctest::Approx(kPi).epsilon(1e-12));
  CHECK(k2.c2 == doctest::Approx(kPi / 4).epsilon(1e-12));
  CHECK(k2.kappa == doctest::Approx(0.125).epsilon(1e-12));
  const KernelConstants k1 = kernel_constants(KernelProfile{KernelForm::Indicator}, 1);
  CHECK(k1.c1 == doctest::Approx(2.0));
  CHECK(k1.c2 == doctest::Approx(2.0 / 3));
  CHECK(k1.kappa == doctest::Approx(1.0 / 6));
  CHECK(kernel_constants(KernelProfile{KernelForm::Indicator}, 3).kappa == doctest::Approx(0.1));

  // C1 = |S^{k-1}| int eta r^{k-1}, C2 = |S^{k-1}| / k int eta r^{k+1}
  const double sphere_area[] = {0, 2, 2 * kPi, 4 * kPi};
  for (KernelForm f : {KernelForm::Indicator, KernelForm::Triangular, KernelForm::Quadratic})
    for (int k = 1; k <= 3; ++k) {
      const KernelProfile eta{f};
      using boost::math::quadrature::gauss_kronrod;
      const double m0 = gauss_kronrod<double, 61>::integrate([&](double r) { return eta(r) * std::pow(r, k - 1); }, 0.0, 1.0);
      const double m2 = gauss_kronrod<double, 61>::integrate([&](double r) { return eta(r) * std::pow(r, k + 1); }, 0.0, 1.0);
      const KernelConstants kc = kernel_constants(eta, k);
      CHECK(kc.c1 == doctest::Approx(sphere_area[k] * m0).epsilon(1e-10));
      CHECK(kc.c2 == doctest::Approx(sphere_area[k] / k * m2).epsilon(1e-10));
      CHECK(kc.kappa == kc.c2 / (2 * kc.c1));
    }
  CHECK(error_code_of([] { kernel_constants(KernelProfile{}, 4); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("kernel profiles are non-increasing with support [0, 1]") {
  for (KernelForm f : {KernelForm::Indicator, KernelForm::Triangular, KernelForm::Quadratic}) {
    const KernelProfile eta{f};
    CHECK(eta(1.0001) == 0.0);
    CHECK(eta(5.0) == 0.0);
    CHECK(eta(0.0) == 1.0);
    for (int i = 0; i < 100; ++i) CHECK(eta(i / 100.0) >= eta((i + 1) / 100.0));
    CHECK(KernelProfile::parse(eta.name()).form == f);
  }
  CHECK(error_code_of([] { KernelProfile::parse("gaussian"); }) == ErrorCode::Config);
}

TEST_CASE("weights inside and outside the support") {
  const double eps = 0.1;
  const WeightedGraph in = build_graph(torus_cloud({{0.5, 0.5, 0}, {0.55, 0.5, 0}}), eps, KernelProfile{});
  CHECK(in.weight(0, 1) == doctest::Approx(1.0 / (eps * eps)));
  CHECK(in.weight(1, 0) == in.weight(0, 1));
  CHECK(in.weight(0, 0) == 0.0);
  const WeightedGraph out = build_graph(torus_cloud({{0.5, 0.5, 0}, {0.65, 0.5, 0}}), eps, KernelProfile{});
  CHECK(out.weight(0, 1) == 0.0);
  CHECK(out.edge_count() == 0);
  CHECK(out.first_isolated() == 0);
  CHECK_FALSE(out.connected());
  // wrap-around neighbours
  const WeightedGraph wrap = build_graph(torus_cloud({{0.01, 0.5, 0}, {0.98, 0.5, 0}}), eps, KernelProfile{});
  CHECK(wrap.weight(0, 1) > 0);
}

TEST_CASE("three collinear points have hand-computed degrees") {
  const double eps = 0.1, s = 0.4 * eps;
  const WeightedGraph g =
      build_graph(torus_cloud({{0.3, 0.3, 0}, {0.3 + s, 0.3, 0}, {0.3 + 2 * s, 0.3, 0}}), eps, KernelProfile{});
  const double w = 1.0 / (eps * eps);
  for (std::size_t i = 0; i < 3; ++i) CHECK(g.degrees()[i] == doctest::Approx(2 * w / 3));
  const WeightedGraph t = build_graph(torus_cloud({{0.3, 0.3, 0}, {0.3 + s, 0.3, 0}, {0.3 + 2 * s, 0.3, 0}}), eps,
                                      KernelProfile{KernelForm::Triangular});
  CHECK(t.degrees()[0] == doctest::Approx((0.6 * w + 0.2 * w) / 3));
  CHECK(t.degrees()[1] == doctest::Approx((0.6 * w + 0.6 * w) / 3));
}

TEST_CASE("cell-list and brute-force graphs are identical") {
  struct Case {
    Manifold m;
    Density d;
    std::size_t n;
    double eps;
  };
  const Manifold t = Manifold::torus(1.0), t2 = Manifold::torus(3.0), s = Manifold::sphere();
  const std::vector<Case> cases{{t, Density::uniform(t), 30, 0.3},    {t, Density::cosine(t, 1, 0.5), 50, 0.2},
                                {t2, Density::uniform(t2), 40, 1.2},  {s, Density::uniform(s), 45, 0.7},
                                {s, Density::cosine(s, 2, 0.6), 50, 0.4}, {t, Density::uniform(t), 2500, 0.05},
                                {s, Density::uniform(s), 2500, 0.1}};
  std::uint64_t seed = 1;
  for (const auto& c : cases)
    for (KernelForm f : {KernelForm::Indicator, KernelForm::Quadratic}) {
      const PointCloud pc = sample_points(c.m, c.d, c.n, seed++);
      const WeightedGraph a = build_graph(pc, c.eps, KernelProfile{f});
      const WeightedGraph b = build_graph_bruteforce(pc, c.eps, KernelProfile{f});
      CHECK(a.row_ptr() == b.row_ptr());
      CHECK(a.cols() == b.cols());
      CHECK(a.weights() == b.weights());
      CHECK(a.degrees() == b.degrees());
      CHECK(a.content_hash() == b.content_hash());
      if (c.n <= 50) {
        // weights from the definition
        for (std::size_t i = 0; i < c.n; ++i)
          for (std::size_t j = 0; j < c.n; ++j) {
            const double r = kernel_distance(c.m, pc.points[i], pc.points[j]) / c.eps;
            const double w = i == j ? 0.0 : KernelProfile{f}(r) / (c.eps * c.eps);
            CHECK(a.weight(i, j) == doctest::Approx(w).epsilon(1e-14));
          }
      }
    }
}

TEST_CASE("graph builder rejects bad epsilon") {
  const PointCloud pc = torus_cloud({{0.1, 0.1, 0}, {0.2, 0.2, 0}});
  CHECK(error_code_of([&] { build_graph(pc, 0.0, KernelProfile{}); }) == ErrorCode::InvalidArgument);
  CHECK(error_code_of([&] { build_graph(pc, 0.5, KernelProfile{}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("inner product and Laplacian examples") {
  const auto g = torus_graph(300, 3, 0.15);
  const std::size_t n = g->size();
  const Vector one(n, 1.0), zero(n, 0.0);
  double dsum = 0;
  for (double d : g->degrees()) dsum += d;
  CHECK(inner_product(*g, one, one) == doctest::Approx(dsum / n).epsilon(1e-14));
  CHECK(inner_product(*g, one, zero) == 0.0);
  for (double v : laplacian_apply(*g, one)) CHECK(std::abs(v) <= 1e-12);

  // two nodes: (Delta u) = eps^-2 (u_i - u_j) for the only neighbour
  const double eps = 0.2;
  const WeightedGraph two = build_graph(torus_cloud({{0.5, 0.5, 0}, {0.6, 0.5, 0}}), eps, KernelProfile{});
  const Vector lu = laplacian_apply(two, Vector{1.0, 0.0});
  CHECK(lu[0] == doctest::Approx(1.0 / (eps * eps)));
  CHECK(lu[1] == doctest::Approx(-1.0 / (eps * eps)));
}

TEST_CASE("sparse operators agree with dense construction on small graphs") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto g = torus_graph(5 + 9 * seed, seed, 0.4);
    const std::size_t n = g->size();
    const Eigen::MatrixXd w = dense_weights(*g);
    const Vector u = random_vector(n, 10 + seed), v = random_vector(n, 20 + seed);
    double ip = 0;
    for (std::size_t i = 0; i < n; ++i) ip += w.row(i).sum() / n * u[i] * v[i];
    CHECK(inner_product(*g, u, v) == doctest::Approx(ip / n).epsilon(1e-13));
    if (g->first_isolated() == n) {
      const Eigen::VectorXd ref = dense_laplacian(*g) * as_eigen(u);
      const Vector lu = laplacian_apply(*g, u);
      for (std::size_t i = 0; i < n; ++i) CHECK(lu[i] == doctest::Approx(ref(i)).epsilon(1e-12).scale(1.0 / (0.16)));
    }
    Vector y(n);
    g->multiply(u, y);
    const Eigen::VectorXd wy = w * as_eigen(u);
    for (std::size_t i = 0; i < n; ++i) CHECK(y[i] == doctest::Approx(wy(i)));
  }
}

TEST_CASE("Laplacian is self-adjoint and positive semidefinite in the degree inner product") {
  const Manifold s = Manifold::sphere();
  for (const auto& g : {torus_graph(800, 5, 0.08), make_graph(s, Density::cosine(s, 0, 0.5), 800, 6, 0.25,
                                                               KernelForm::Triangular)}) {
    for (std::uint64_t trial = 0; trial < 5; ++trial) {
      const Vector u = random_vector(g->size(), 100 + trial), v = random_vector(g->size(), 200 + trial);
      const double a = inner_product(*g, laplacian_apply(*g, u), v), b = inner_product(*g, u, laplacian_apply(*g, v));
      const double nu = std::sqrt(inner_product(*g, u, u)), nv = std::sqrt(inner_product(*g, v, v));
      CHECK(std::abs(a - b) <= 1e-10 * nu * nv * (1 + std::abs(a)));
      CHECK(inner_product(*g, laplacian_apply(*g, u), u) >= -1e-12);
    }
  }
}

TEST_CASE("isolated node is named by the Laplacian") {
  const WeightedGraph g = build_graph(torus_cloud({{0.1, 0.1, 0}, {0.12, 0.1, 0}, {0.7, 0.7, 0}}), 0.1, KernelProfile{});
  try {
    laplacian_apply(g, Vector{1, 2, 3});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Numerical);
    CHECK(std::string(e.what()).find("node 2") != std::string::npos);
  }
  CHECK(g.component_count() == 2);
}

TEST_CASE("degree concentration improves with n at fixed eps") {
  const Manifold t = Manifold::torus(1.0);
  std::vector<double> med;
  for (std::size_t n : {2000, 8000, 32000}) {
    std::vector<double> errs;
    for (std::uint64_t seed = 1; seed <= 5; ++seed)
      errs.push_back(degree_density_error(*torus_graph(n, seed, 0.1), Density::uniform(t)));
    med.push_back(median(errs));
  }
  CHECK(med[1] < med[0]);
  CHECK(med[2] < med[1]);
}

TEST_CASE("degree profile edge cases") {
  const Manifold t = Manifold::torus(1.0);
  PointCloud one = torus_cloud({{0.5, 0.5, 0}});
  const WeightedGraph g = build_graph(one, 0.1, KernelProfile{});
  CHECK(g.degrees()[0] == 0.0);
  CHECK(degree_density_error(g, Density::uniform(t)) == doctest::Approx(kPi));
  // cosine density: bias correlated with the sign of the perturbation stays O(eps)
  const double eps = 0.06;
  const Density d = Density::cosine(t, 0, 0.3);
  const auto cg = make_graph(t, d, 20000, 4, eps);
  const Vector prof = degree_density_profile(*cg, d);
  double mean = 0;
  for (double v : prof) mean += v;
  mean /= prof.size();
  double corr = 0;
  for (std::size_t i = 0; i < prof.size(); ++i)
    corr += (prof[i] - mean) * (std::cos(2 * kPi * cg->cloud().points[i][0]) > 0 ? 1 : -1);
  corr /= prof.size();
  CHECK(std::abs(corr) <= eps);
}

TEST_CASE("graph export writes the documented columns") {
  const auto dir = scratch("graph");
  const auto g = torus_graph(50, 1, 0.3);
  write_graph_csv(*g, (dir / "e.csv").string(), (dir / "d.csv").string(), (dir / "m.json").string());
  CHECK(first_line(dir / "e.csv") == "i,j,w");
  CHECK(first_line(dir / "d.csv") == "i,d");
  const auto meta = nlohmann::json::parse(slurp(dir / "m.json"));
  CHECK(meta.at("n").get<std::size_t>() == 50);
  CHECK(meta.at("epsilon").get<double>() == 0.3);
  CHECK(meta.at("kernel").get<std::string>() == "indicator");
  CHECK(meta.at("seed").get<std::uint64_t>() == 1);
  std::size_t lines = 0;
  std::ifstream in(dir / "e.csv");
  for (std::string l; std::getline(in, l);) ++lines;
  CHECK(lines == g->edge_count() + 1);
}
