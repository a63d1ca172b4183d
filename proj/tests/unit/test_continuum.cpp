#include <doctest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/legendre.hpp>

#include "support.hpp"

using namespace testing;

namespace {

const Manifold kTorus = Manifold::torus(1.0);

double area_of(const GridField& f) { return f.integral(); }

}  // namespace

TEST_CASE("grid fields validate their size") {
  CHECK(error_code_of([] { GridField(100, 1.0); }) == ErrorCode::InvalidArgument);
  CHECK(error_code_of([] { GridField(2, 1.0); }) == ErrorCode::InvalidArgument);
  const GridField g = GridField::sample(8, 1.0, [](const Point& x) { return x[0] + 10 * x[1]; });
  CHECK(g.at(1, 2) == doctest::Approx(1.5 / 8 + 10 * 2.5 / 8));
  // interpolation reproduces values at cell centres
  CHECK(g.interpolate(g.center(3, 4)) == doctest::Approx(g.at(3, 4)));
  CHECK(g.interpolate_cubic(g.center(3, 4)) == doctest::Approx(g.at(3, 4)));
}

TEST_CASE("grid heat: constants, eigenfunctions and weighted mass") {
  const Density uni = Density::uniform(kTorus), cosd = Density::cosine(kTorus, 0, 0.3);
  const GridField one = GridField::sample(64, 1.0, [](const Point&) { return 1.0; });
  for (const Density& d : {uni, cosd})
    for (double v : grid_heat_step(one, 0.01, d).values) CHECK(std::abs(v - 1.0) <= 1e-12);
  const double t = 0.003;
  const GridField c = GridField::sample(128, 1.0, [](const Point& x) { return std::cos(2 * kPi * x[1]); });
  const GridField out = grid_heat_step(c, t, uni);
  for (std::size_t i = 0; i < 128; i += 7)
    for (std::size_t j = 0; j < 128; j += 5)
      CHECK(std::abs(out.at(i, j) - std::exp(-4 * kPi * kPi * t) * c.at(i, j)) <= 1e-12);
  const Manifold t2 = Manifold::torus(2.0);
  const GridField c2 = GridField::sample(64, 2.0, [](const Point& x) { return std::cos(kPi * x[0]); });
  const GridField o2 = grid_heat_step(c2, t, Density::uniform(t2));
  CHECK(o2.at(5, 9) == doctest::Approx(std::exp(-kPi * kPi * t) * c2.at(5, 9)).epsilon(1e-12));

  const GridField bump = GridField::indicator(128, FrontDescriptor::circle(kTorus, {0.3, 0.6, 0}, 0.2));
  for (const Density& d : {uni, cosd, Density::cosine(kTorus, 1, -0.6)}) {
    const double before = bump.weighted_mass(d);
    const GridField after = grid_heat_step(bump, 0.01, d);
    CHECK(std::abs(after.weighted_mass(d) - before) <= 1e-10);
    for (double v : after.values) CHECK(v >= -1e-10);
  }
  CHECK(error_code_of([&] { grid_heat_step(bump, 0.0, uni); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("Crank-Nicolson is second order in the substep") {
  const Density d = Density::cosine(kTorus, 0, 0.4);
  const GridField f = GridField::sample(64, 1.0, [](const Point& x) {
    return std::exp(std::cos(2 * kPi * x[0]) + 0.5 * std::sin(2 * kPi * x[1]));
  });
  const double t = 0.01;
  std::vector<GridField> runs;
  for (std::size_t s : {16, 32, 64}) runs.push_back(grid_heat_step(f, t, d, GridHeatOptions{s}));
  double d1 = 0, d2 = 0;
  for (std::size_t k = 0; k < f.values.size(); ++k) {
    d1 = std::max(d1, std::abs(runs[0].values[k] - runs[1].values[k]));
    d2 = std::max(d2, std::abs(runs[1].values[k] - runs[2].values[k]));
  }
  CHECK(d1 / d2 > 3.0);
  CHECK(d1 / d2 < 5.0);
}

TEST_CASE("continuum MBO: band, circle area and raised threshold") {
  const Density uni = Density::uniform(kTorus);
  ContinuumMBOConfig cfg;
  cfg.kappa = 1.0;
  cfg.h = 1e-3;
  const std::size_t N = 512;
  const GridField band = GridField::indicator(N, FrontDescriptor::band(kTorus, 0, 0.25, 0.75));
  const GridField b1 = continuum_mbo_step(band, cfg, uni);
  CHECK(std::abs(area_of(b1) - area_of(band)) <= 2.0 / N);  // at most one cell column per edge
  const Displacement zb = normal_displacement(FrontDescriptor::band(kTorus, 0, 0.25, 0.75), b1);
  CHECK(zb.max_z <= 1.0 / N);

  const FrontDescriptor circle = FrontDescriptor::circle(kTorus, {0.5, 0.5, 0}, 0.25);
  const GridField c0 = GridField::indicator(N, circle);
  const GridField c1 = continuum_mbo_step(c0, cfg, uni);
  CHECK(area_of(c0) - area_of(c1) == doctest::Approx(2 * kPi * cfg.kappa * cfg.h).epsilon(0.2));

  ContinuumMBOConfig raised = cfg;
  raised.h = 4e-3;
  raised.drift = [](const Point&) { return 10.0; };
  ContinuumMBOConfig plain = raised;
  plain.drift = nullptr;
  const double a_raised = area_of(continuum_mbo_step(c0, raised, uni));
  CHECK(a_raised < area_of(continuum_mbo_step(c0, plain, uni)));
  CHECK(a_raised < area_of(c0));
  CHECK(error_code_of([&] { continuum_mbo_step(GridField::sample(16, 1, [](const Point&) { return 0.3; }), cfg, uni); }) ==
        ErrorCode::InvalidArgument);
}

TEST_CASE("continuum circle: r^2 is affine with slope -2 kappa") {
  const Density uni = Density::uniform(kTorus);
  ContinuumMBOConfig cfg;
  cfg.kappa = 1.0;
  cfg.h = 5e-4;
  const double r0 = 0.25;
  GridField f = GridField::indicator(512, FrontDescriptor::circle(kTorus, {0.5, 0.5, 0}, r0));
  std::vector<double> t, r2;
  for (int l = 0;; ++l) {
    const double rr = area_of(f) / kPi;
    if (rr < r0 * r0 / 2) break;
    t.push_back(l * cfg.h);
    r2.push_back(rr);
    f = continuum_mbo_step(f, cfg, uni);
  }
  double mt = 0, mr = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    mt += t[i];
    mr += r2[i];
  }
  mt /= t.size();
  mr /= t.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    sxy += (t[i] - mt) * (r2[i] - mr);
    sxx += (t[i] - mt) * (t[i] - mt);
  }
  CHECK(sxy / sxx == doctest::Approx(-2 * cfg.kappa).epsilon(0.05));
}

TEST_CASE("analytic fronts") {
  const FrontState c = analytic_front(FrontDescriptor::circle(kTorus, {0.5, 0.5, 0}, 0.25), 1.0, 0.03125 - 1e-9);
  CHECK(c.status == FrontStatus::Alive);
  CHECK(analytic_front(FrontDescriptor::circle(kTorus, {0.5, 0.5, 0}, 0.25), 1.0, 0.03125).status ==
        FrontStatus::Extinct);
  CHECK(analytic_front(FrontDescriptor::circle(kTorus, {0.5, 0.5, 0}, 0.25), 0.5, 0.03).front.radius ==
        doctest::Approx(std::sqrt(0.0625 - 0.03)));
  CHECK(analytic_front(FrontDescriptor::cap(kPi / 3), 1.0, std::log(2.0) - 1e-9).status == FrontStatus::Alive);
  CHECK(analytic_front(FrontDescriptor::cap(kPi / 3), 1.0, std::log(2.0)).status == FrontStatus::Extinct);
  CHECK(analytic_front(FrontDescriptor::cap(2.5), 1.0, 10.0).status == FrontStatus::Filled);
  const FrontState b = analytic_front(FrontDescriptor::band(kTorus, 1, 0.2, 0.6), 1.0, 5.0);
  CHECK(b.status == FrontStatus::Alive);
  CHECK(b.front.lo == 0.2);
  CHECK(b.front.hi == 0.6);
  CHECK(error_code_of([] { analytic_front(FrontDescriptor::band(kTorus, 0, 0.2, 0.6), 1.0, 0.1,
                                          Density::cosine(kTorus, 0, 0.3)); }) == ErrorCode::Unsupported);
}

TEST_CASE("drift ODE: stationary points, direction and an RK4 oracle") {
  const Density d = Density::cosine(kTorus, 0, 0.3);
  const double kappa = 0.125;
  CHECK(drift_front_ode(0.0, kTorus, d, kappa, 0.5) == doctest::Approx(0.0).scale(1e-12));
  CHECK(drift_front_ode(0.5, kTorus, d, kappa, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
  // xi' > 0 on (0.5, 1): the front moves down toward the minimum at 0.5
  CHECK(drift_front_ode(0.7, kTorus, d, kappa, 0.1) < 0.7);
  CHECK(drift_front_ode(0.25, kTorus, d, kappa, 0.1) > 0.25);

  const auto rhs = [&](double a) {
    const double rho = 1 + 0.3 * std::cos(2 * kPi * a), drho = -0.3 * 2 * kPi * std::sin(2 * kPi * a);
    return -kappa * 2 * drho / rho;
  };
  auto rk4 = [&](double a, double t, std::size_t steps) {
    const double dt = t / steps;
    for (std::size_t s = 0; s < steps; ++s) {
      const double k1 = rhs(a), k2 = rhs(a + 0.5 * dt * k1), k3 = rhs(a + 0.5 * dt * k2), k4 = rhs(a + dt * k3);
      a += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    return a;
  };
  const double a_fine = rk4(0.25, 0.4, 4000), a_half = rk4(0.25, 0.4, 8000);
  CHECK(std::abs(a_fine - a_half) < 1e-12);
  CHECK(std::abs(drift_front_ode(0.25, kTorus, d, kappa, 0.4) - a_half) <= 1e-9);
}

TEST_CASE("normal displacement") {
  const std::size_t N = 512;
  const FrontDescriptor circle = FrontDescriptor::circle(kTorus, {0.5, 0.5, 0}, 0.25);
  const GridField own = GridField::indicator(N, circle);
  CHECK(normal_displacement(circle, own).max_z <= 1.0 / N);
  ContinuumMBOConfig cfg;
  cfg.kappa = 1.0;
  cfg.h = 1e-3;
  const ContinuumStep st = continuum_mbo_step_detailed(own, cfg, Density::uniform(kTorus));
  const Displacement z = normal_displacement(circle, st.labels);
  CHECK(z.max_z >= 4e-3 / 1.5);
  CHECK(z.max_z <= 4e-3 * 1.5);
  // the node-label variant on its own initial state
  const auto g = torus_graph(20000, 1, 0.05);
  const ClusterState chi = initial_state_from_region(g->cloud(), circle);
  CHECK(normal_displacement(circle, chi, g->cloud()).max_z <= 0.03);
  // an empty result has no crossing
  const GridField none = GridField::sample(64, 1.0, [](const Point&) { return 1.0; });
  CHECK(normal_displacement(circle, none).unbounded);
}

TEST_CASE("consistency probe") {
  const Density uni = Density::uniform(kTorus);
  const std::vector<double> ladder{1.6e-2, 8e-3, 4e-3, 2e-3};
  // flat front: lhs tends to zero
  const auto flat = consistency_probe(LevelSet::vertical_line(0.5), {0.5, 0.3, 0}, 1.0, ladder, uni, ProbeOptions{512});
  CHECK(std::abs(flat.back().lhs) <= 1e-3);
  for (const auto& r : flat) CHECK(r.rhs == doctest::Approx(0.0).scale(1e-12));
  // circle
  const double r0 = 0.25;
  const auto circ = consistency_probe(LevelSet::circle({0.5, 0.5, 0}, r0), {0.75, 0.5, 0}, 1.0, ladder, uni);
  const double target = 1 / (2 * std::sqrt(kPi) * r0);
  for (const auto& r : circ) CHECK(r.rhs == doctest::Approx(target));
  CHECK(std::abs(circ.back().lhs - target) < std::abs(circ.front().lhs - target));
  // straight line under the cosine density: drift term only
  const Density d = Density::cosine(kTorus, 0, 0.3);
  const double a = 0.25;
  const auto drift = consistency_probe(LevelSet::vertical_line(a), {a, 0.5, 0}, 1.0, {8e-3, 4e-3, 2e-3}, d,
                                       ProbeOptions{512});
  // psi = a - x0, grad psi = (-1, 0): rhs = -(xi'/xi)(a) * (-1) / (2 sqrt(pi))
  const double rho = 1 + 0.3 * std::cos(2 * kPi * a), drho = -0.3 * 2 * kPi * std::sin(2 * kPi * a);
  const double expected = (2 * drho / rho) / (2 * std::sqrt(kPi));
  CHECK(drift.back().rhs == doctest::Approx(expected).epsilon(1e-10));
  CHECK(std::abs(drift.back().lhs - expected) <= 0.1 * std::abs(expected));
  CHECK(std::abs(drift.back().lhs - expected) < std::abs(drift.front().lhs - expected));
  // refusal on a coarse grid
  CHECK(error_code_of([&] {
          consistency_probe(LevelSet::circle({0.5, 0.5, 0}, r0), {0.75, 0.5, 0}, 1.0, {1e-4}, uni, ProbeOptions{64});
        }) == ErrorCode::InvalidArgument);
}

TEST_CASE("zonal heat coefficients match Legendre quadrature") {
  const ZonalSet cap = ZonalSet::cap(1.0);
  CHECK(cap.area() == doctest::Approx(2 * kPi * (1 - std::cos(1.0))));
  const double t = 0.01;
  const Vector c = zonal_heat_coefficients(cap, t);
  for (int l = 0; l < 12; ++l) {
    const double integral = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        [&](double z) { return boost::math::legendre_p(l, z); }, std::cos(1.0), 1.0);
    CHECK(c[l] == doctest::Approx((2 * l + 1) / 2.0 * integral * std::exp(-t * l * (l + 1.0))).scale(1e-14));
  }
  const Vector whole = zonal_heat_coefficients(ZonalSet{{{-1.0, 1.0}}}, t);
  for (double z : {-0.9, 0.0, 0.3, 1.0}) CHECK(zonal_evaluate(whole, z) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("zonal MBO follows the cap flow") {
  const double theta0 = kPi / 3, kappa = 1.0, h = 0.004;
  ZonalSet s = ZonalSet::cap(theta0);
  const int steps = 50;
  for (int l = 0; l < steps; ++l) s = zonal_mbo_step(s, kappa, h);
  REQUIRE(s.intervals.size() == 1);
  const double theta = s.boundaries().front();
  const double ref = analytic_front(FrontDescriptor::cap(theta0), kappa, steps * h).front.theta0;
  CHECK(theta == doctest::Approx(ref).epsilon(0.03));
  CHECK(theta < theta0);
}
