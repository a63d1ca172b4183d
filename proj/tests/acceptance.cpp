// One PASS/FAIL line per acceptance criterion. Exit status is nonzero if any criterion fails.
#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "mbolab/harness.hpp"

using namespace mbolab;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= x.size();
  my /= y.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

std::shared_ptr<const WeightedGraph> graph(const Manifold& m, const Density& d, std::size_t n, std::uint64_t seed,
                                           double eps, KernelForm k = KernelForm::Indicator) {
  return std::make_shared<const WeightedGraph>(build_graph(sample_points(m, d, n, seed), eps, KernelProfile{k}));
}

// Shared by criteria 4, 5 and 12.
struct SharedTorus {
  std::shared_ptr<const WeightedGraph> g;
  std::optional<HeatOperator> op;
  std::vector<MBOTrace> full_traces;
};
SharedTorus shared;

Outcome criterion1() {
  struct Case {
    Manifold m;
    Density d;
    std::size_t n;
    double eps;
    KernelForm k;
  };
  const Manifold t = Manifold::torus(1.0), s = Manifold::sphere();
  const std::vector<Case> cases{{t, Density::uniform(t), 2048, 0.08, KernelForm::Indicator},
                                {t, Density::cosine(t, 0, 0.3), 1500, 0.1, KernelForm::Triangular},
                                {s, Density::uniform(s), 2000, 0.2, KernelForm::Quadratic},
                                {s, Density::cosine(s, 2, 0.4), 800, 0.3, KernelForm::Indicator}};
  double full_mass = 0, full_mp = 0, trunc_mass = 0;
  std::uint64_t seed = 11;
  for (const auto& c : cases) {
    const auto g = graph(c.m, c.d, c.n, seed++, c.eps, c.k);
    if (!g->connected()) return {false, "test graph disconnected"};
    const HeatOperator full = HeatOperator::full(g);
    const auto dec = std::make_shared<const SpectralDecomposition>(partial_eigendecomposition(*g, 20, 1e-10));
    const HeatOperator trunc = HeatOperator::truncated(g, dec);
    for (double h : {0.001, 0.01, 0.05}) {
      full_mass = std::max(full_mass, mass_defect(full, h));
      full_mp = std::max(full_mp, max_principle_error(full, h, 3, seed).raw);
      trunc_mass = std::max(trunc_mass, mass_defect(trunc, h));
    }
  }
  const bool ok = full_mass <= 1e-10 && full_mp <= 1e-10 && trunc_mass <= 1e-8;
  return {ok, "full mass defect " + fmt(full_mass) + ", full max-principle " + fmt(full_mp) +
                  ", truncated mass defect " + fmt(trunc_mass)};
}

Outcome criterion2() {
  double worst = 0.0;
  Rng pick(5);
  for (int trial = 0; trial < 10; ++trial) {
    const bool sphere = trial % 2;
    const Manifold m = sphere ? Manifold::sphere() : Manifold::torus(1.0);
    const Density d = trial % 3 == 0 ? Density::cosine(m, 0, 0.25) : Density::uniform(m);
    const std::size_t n = 20 + static_cast<std::size_t>(pick.uniform() * 31);  // 20..50
    const auto g = graph(m, d, n, 100 + trial, sphere ? 1.0 : 0.45);
    // dense oracle: Delta = eps^-2 (I - D^-1 W / n)
    Eigen::MatrixXd lap = Eigen::MatrixXd::Identity(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) lap(i, j) -= g->weight(i, j) / (n * g->degrees()[i]);
    lap /= g->epsilon() * g->epsilon();
    const auto dec = std::make_shared<const SpectralDecomposition>(partial_eigendecomposition(*g, n, 1e-12));
    const HeatOperator full = HeatOperator::full(g);
    const HeatOperator trunc = HeatOperator::truncated(g, dec);
    for (double t : {0.003, 0.02, 0.1}) {
      const Eigen::MatrixXd ex = (-t * lap).exp();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          worst = std::max(worst, std::abs(truncated_kernel_entry(*dec, *g, t, i, j) - ex(i, j)));
      Vector u(n);
      for (auto& x : u) x = pick.uniform(-1, 1);
      const Eigen::VectorXd ref = ex * Eigen::Map<const Eigen::VectorXd>(u.data(), n);
      const Vector a = full.apply(t, u), b = trunc.apply(t, u);
      for (std::size_t i = 0; i < n; ++i)
        worst = std::max({worst, std::abs(a[i] - ref(i)), std::abs(b[i] - ref(i))});
    }
  }
  return {worst <= 1e-9, "max sup-norm deviation from dense expm over 10 graphs: " + fmt(worst)};
}

Outcome criterion3() {
  const Manifold m = Manifold::torus(1.0);
  const double kappa = kernel_constants(KernelProfile{KernelForm::Indicator}, 2).kappa;
  std::vector<std::vector<double>> by_l(4);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto g = graph(m, Density::uniform(m), 8000, seed, 0.06);
    const SpectralDecomposition dec = partial_eigendecomposition(*g, 5, 1e-10);
    for (std::size_t l = 1; l < 5; ++l) by_l[l - 1].push_back(dec.eigenvalues[l] / kappa);
  }
  const double target = 4 * kPi * kPi;
  bool ok = true;
  std::string d = "median lambda_l/kappa for l=2..5:";
  for (const auto& v : by_l) {
    const double med = median(v);
    ok = ok && std::abs(med - target) <= 0.15 * target;
    d += " " + fmt(med);
  }
  return {ok, d + " (target " + fmt(target) + " +/- 15%)"};
}

Outcome criterion4() {
  const Manifold m = Manifold::torus(1.0);
  shared.g = graph(m, Density::uniform(m), 20000, 1, 0.05);
  shared.op = HeatOperator::full(shared.g);
  const double kappa = kernel_constants(KernelProfile{KernelForm::Indicator}, 2).kappa;
  const double h = 0.004, r0 = 0.25;
  const FrontDescriptor circle = FrontDescriptor::circle(m, {0.5, 0.5, 0.0}, r0);
  const auto steps = static_cast<std::size_t>(1.5 * r0 * r0 / (2 * kappa) / h);
  const MBOTrace trace = run_mbo(*shared.op, h, initial_state_from_region(shared.g->cloud(), circle), steps, true);
  shared.full_traces.push_back(trace);
  const CircleSummary s = summarize_circle(trace, 20000, m, r0, kappa);
  const bool slope_ok = std::isfinite(s.slope) && std::abs(s.slope - s.slope_reference) <= 0.25 * std::abs(s.slope_reference);
  const bool ext_ok = s.extinction && std::abs(*s.extinction - s.extinction_reference) <= 0.25 * s.extinction_reference;
  std::string d = "slope " + (std::isfinite(s.slope) ? fmt(s.slope) : std::string("undefined")) + " vs " +
                  fmt(s.slope_reference) + ", extinction " + (s.extinction ? fmt(*s.extinction) : std::string("none")) +
                  " vs " + fmt(s.extinction_reference);
  if (trace.pinned_at)
    d += "; pinned at step " + std::to_string(*trace.pinned_at) + " (h/eps^2 = " + fmt(h / (0.05 * 0.05)) +
         ", self-weight e^{-h/eps^2} = " + fmt(std::exp(-h / (0.05 * 0.05))) + ")";
  return {slope_ok && ext_ok, d};
}

Outcome criterion5() {
  if (!shared.op) return {false, "shared graph missing"};
  const Manifold m = Manifold::torus(1.0);
  const double h = 0.004, eps = 0.05;
  const FrontDescriptor band = FrontDescriptor::band(m, 0, 0.25, 0.75);
  const MBOTrace trace = run_mbo(*shared.op, h, initial_state_from_region(shared.g->cloud(), band), 50, false);
  shared.full_traces.push_back(trace);
  std::vector<double> times;
  for (std::size_t l = 0; l < trace.steps(); ++l) times.push_back(trace.time(l));
  const FrontError fe = front_error(trace, shared.g->cloud(), [&](double) { return FrontState{FrontStatus::Alive, band}; },
                                    times, 2 * (eps + h));
  double worst = 0.0;
  for (const auto& r : fe.rows) worst = std::max(worst, r.fraction);
  return {worst == 0.0 && trace.steps() == 51,
          std::to_string(trace.steps() - 1) + " steps, max disagreement fraction outside collar " + fmt(worst)};
}

Outcome criterion6() {
  const Manifold m = Manifold::torus(1.0);
  const double r = 0.25, kappa = 1.0;
  const FrontDescriptor circle = FrontDescriptor::circle(m, {0.5, 0.5, 0.0}, r);
  const GridField chi = GridField::indicator(512, circle);
  std::vector<double> lh, lz;
  double worst_ratio = 0.0;
  std::string d = "max|z|:";
  for (double h : {1e-3, 2e-3, 4e-3, 8e-3}) {
    ContinuumMBOConfig cfg;
    cfg.kappa = kappa;
    cfg.h = h;
    const ContinuumStep st = continuum_mbo_step_detailed(chi, cfg, Density::uniform(m));
    const Displacement z = normal_displacement(circle, st.diffused, st.threshold, 512);
    if (z.unbounded) return {false, "displacement unbounded at h = " + fmt(h)};
    lh.push_back(std::log(h));
    lz.push_back(std::log(z.max_z));
    worst_ratio = std::max(worst_ratio, z.max_z / h);
    d += " " + fmt(z.max_z);
  }
  const double slope = ls_slope(lh, lz);
  const bool ok = slope >= 0.9 && slope <= 1.1 && worst_ratio <= 1.5 * kappa / r;
  return {ok, d + "; log-log slope " + fmt(slope) + ", max|z|/h " + fmt(worst_ratio) + " (bound " + fmt(1.5 * kappa / r) + ")"};
}

Outcome criterion7() {
  const double r0 = 0.25;
  const Point c{0.5, 0.5, 0.0};
  const std::vector<double> ladder{1.6e-2, 8e-3, 4e-3, 2e-3};
  const auto rows = consistency_probe(LevelSet::circle(c, r0), {c[0] + r0, c[1], 0.0}, 1.0, ladder,
                                      Density::uniform(Manifold::torus(1.0)));
  const double target = 1.0 / (2 * std::sqrt(kPi) * r0);
  bool decreasing = true;
  std::vector<double> gaps;
  for (const auto& row : rows) gaps.push_back(std::abs(row.lhs - target));
  for (std::size_t i = 1; i < gaps.size(); ++i) decreasing = decreasing && gaps[i] < gaps[i - 1];
  const double final_rel = gaps.back() / target;
  std::string d = "gaps";
  for (double g : gaps) d += " " + fmt(g);
  return {decreasing && final_rel <= 0.10, d + "; final relative gap " + fmt(final_rel) + " (target " + fmt(target) + ")"};
}

Outcome criterion8() {
  const Manifold m = Manifold::torus(1.0);
  const Density rho = Density::cosine(m, 0, 0.3);
  const double kappa = kernel_constants(KernelProfile{KernelForm::Indicator}, 2).kappa;
  const double h = 0.0125, t_end = 0.05, eps = 0.05;
  const FrontDescriptor band = FrontDescriptor::band(m, 0, 0.25, 0.75);
  const double ode = 0.5 * ((drift_front_ode(0.25, m, rho, kappa, t_end) - 0.25) +
                            (0.75 - drift_front_ode(0.75, m, rho, kappa, t_end)));
  std::vector<double> shifts;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto g = graph(m, rho, 20000, seed, eps);
    const HeatOperator op = HeatOperator::full(g);
    const MBOTrace trace = run_mbo(op, h, initial_state_from_region(g->cloud(), band),
                                   static_cast<std::size_t>(std::llround(t_end / h)), false);
    const BandEdges e0 = estimate_band_edges(trace.states.front(), g->cloud(), 0);
    const BandEdges e1 = estimate_band_edges(trace.states.back(), g->cloud(), 0);
    shifts.push_back(0.5 * ((e1.left - e0.left) + (e0.right - e1.right)));
    shared.full_traces.push_back(trace);
  }
  const double med = median(shifts);
  return {std::abs(med - ode) <= 0.3 * std::abs(ode),
          "median inward edge displacement at t=0.05 " + fmt(med) + " vs drift ODE " + fmt(ode) + " (h = " + fmt(h) + ")"};
}

Outcome criterion9() {
  const Manifold m = Manifold::torus(1.0);
  ScheduleParams p;
  p.k = 2;
  p.s = 0.25;
  p.q = 2.0;
  p.c_h = 1.0;
  p.c_eps = 0.3;
  p.delta = 0.1;
  const double kappa = kernel_constants(KernelProfile{KernelForm::Indicator}, 2).kappa;
  std::vector<double> meds;
  std::string d;
  for (std::size_t n : {2000, 4000, 8000}) {
    const ScheduleOutput s = desk_schedule_for_n(p, n);
    const double need = heat_truncation_eigenvalue(kappa * s.h);
    std::size_t count = 64;
    auto eig = std::make_unique<ContinuumEigensystem>(m, Density::uniform(m), count);
    while (eig->complete_through() < need) eig = std::make_unique<ContinuumEigensystem>(m, Density::uniform(m), count *= 2);
    std::vector<double> vals;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto g = graph(m, Density::uniform(m), n, seed, s.eps);
      const SpectralDecomposition dec = partial_eigendecomposition(*g, s.K, 1e-10);
      vals.push_back(kernel_sup_error(dec, *g, *eig, s.h, kappa, PairMode::Auto, 400, seed).normalized);
    }
    meds.push_back(median(vals));
    d += (d.empty() ? "" : ", ") + std::string("n=") + std::to_string(n) + " (eps " + fmt(s.eps, 3) + ", h " +
         fmt(s.h, 3) + ", K " + std::to_string(s.K) + "): " + fmt(meds.back());
  }
  const bool ok = meds[1] <= meds[0] && meds[2] <= meds[1];
  return {ok, "median sup*n/sqrt(h): " + d};
}

Outcome criterion10() {
  const Manifold m = Manifold::torus(1.0);
  const double eps = 0.1;
  const auto g = graph(m, Density::uniform(m), 2000, 3, eps);
  const HeatOperator op = HeatOperator::full(g);
  const FrontDescriptor circle = FrontDescriptor::circle(m, {0.5, 0.5, 0.0}, 0.25);
  const MBOTrace trace = run_mbo(op, 0.01 * eps * eps, initial_state_from_region(g->cloud(), circle), 20, true);
  const bool ok = trace.pinned_at && *trace.pinned_at == 0 && trace.changed.size() > 1 && trace.changed[1] == 0;
  return {ok, "pinned at " + (trace.pinned_at ? std::to_string(*trace.pinned_at) : std::string("never"))};
}

Outcome criterion11() {
  bool ok = true;
  std::string d;
  const Admissibility a = check_admissible(2, 0.25, 5.0);
  const Exponents e = exponents(2, 0.25, 5.0);
  const bool exp_ok = a.admissible && std::abs(e.alpha - 2.75) < 1e-12 && std::abs(e.beta - 51.375) < 1e-12;
  d += "alpha " + fmt(e.alpha, 6) + ", beta " + fmt(e.beta, 6) + (exp_ok ? " ok" : " WRONG");
  ok = ok && exp_ok;
  ScheduleParams p;
  const ScheduleOutput s = schedule_for_n(p, 10000);
  const bool clamp_ok = s.clamped && s.K == 10000 && std::abs(s.K_raw - 6.6e4) < 0.05 * 6.6e4;
  d += "; K_raw " + fmt(s.K_raw, 6) + (s.clamped ? " clamped to " : " not clamped, K ") + std::to_string(s.K) +
       (clamp_ok ? " ok" : " WRONG");
  ok = ok && clamp_ok;
  const Admissibility b = check_admissible(2, 0.25, 4.0);
  d += "; q=4 at (k=2, s=0.25) " + std::string(b.admissible ? "admitted" : "rejected") + " (boundary 1/(2/k - s) = " +
       fmt(b.q_boundary) + ")";
  ok = ok && !b.admissible;
  return {ok, d};
}

Outcome criterion12() {
  if (shared.full_traces.empty()) return {false, "no traces recorded"};
  double worst = -std::numeric_limits<double>::infinity();
  std::size_t checked = 0;
  for (const auto& t : shared.full_traces) {
    if (t.energies.size() != t.steps()) return {false, "trace without energies"};
    worst = std::max(worst, max_energy_increase(t));
    checked += t.steps();
  }
  return {!(worst > 1e-10), std::to_string(shared.full_traces.size()) + " traces, " + std::to_string(checked) +
                                " states, max E(l+1) - E(l) = " + fmt(worst)};
}

}  // namespace

int main() {
  struct Entry {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Entry> entries{
      {1, "exact conservation and monotonicity", criterion1},
      {2, "dense matrix-exponential oracle", criterion2},
      {3, "spectral convergence on the torus", criterion3},
      {4, "shrinking circle rate and extinction", criterion4},
      {5, "stationary band", criterion5},
      {6, "one-step displacement", criterion6},
      {7, "consistency probe", criterion7},
      {8, "weighted drift", criterion8},
      {9, "kernel error trend", criterion9},
      {10, "pinning", criterion10},
      {11, "schedule calculus", criterion11},
      {12, "energy monotonicity", criterion12},
  };
  int failed = 0;
  for (const auto& e : entries) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = e.run();
    } catch (const std::exception& ex) {
      o = {false, std::string("error: ") + ex.what()};
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s criterion %d (%s): %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", e.id, e.name, o.detail.c_str(), sec);
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed ? 1 : 0;
}
