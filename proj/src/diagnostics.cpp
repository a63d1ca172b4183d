#include "mbolab/diagnostics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

namespace mbolab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double sup_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Vector sample_on(const PointCloud& cloud, const std::function<double(const Point&)>& f) {
  Vector v(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) v[i] = f(cloud.points[i]);
  return v;
}

}  // namespace

MaxPrincipleResult max_principle_error(const HeatOperator& op, double h, std::size_t trials, std::uint64_t seed) {
  if (trials < 1) throw Error(ErrorCode::InvalidArgument, "trials must be at least 1");
  if (!(h > 0)) throw Error(ErrorCode::InvalidArgument, "h must be positive");
  const std::size_t n = op.graph().size();
  Rng rng(seed);
  MaxPrincipleResult r;
  const double h32 = std::pow(h, 1.5);
  for (std::size_t t = 0; t < trials; ++t) {
    Vector u(n), v(n);
    double mu = 0.0, mv = 0.0;
    // odd trials raise a single node to 1, which exposes negative kernel entries
    const bool sparse = t % 2 == 1;
    const std::size_t spike = sparse ? static_cast<std::size_t>(rng.uniform() * n) % n : n;
    for (std::size_t i = 0; i < n; ++i) {
      u[i] = rng.uniform(-1.0, 1.0);
      v[i] = sparse ? (i == spike ? 1.0 : u[i]) : std::min(1.0, u[i] + rng.uniform(0.0, 1.0));
      mu = std::max(mu, std::abs(u[i]));
      mv = std::max(mv, std::abs(v[i]));
    }
    const Vector su = op.apply(h, u), sv = op.apply(h, v);
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, su[i] - sv[i]);
    r.raw = std::max(r.raw, worst);
    r.ratio = std::max(r.ratio, worst / (h32 * (mu + mv)));
  }
  return r;
}

std::vector<TestFunction> default_test_functions(const Manifold& m) {
  std::vector<TestFunction> out;
  out.push_back({"constant", [](const Point&) { return 1.0; }, 1.0, 0.0});
  if (m.kind == ManifoldKind::FlatTorus) {
    const double k = 2.0 * kPi / m.side;
    const double c = m.side / 2.0;
    const double sigma = 0.15 * m.side;
    out.push_back({"cos_x0", [k](const Point& x) { return std::cos(k * x[0]); }, 1.0, k});
    out.push_back({"cos_x0_plus_x1", [k](const Point& x) { return std::cos(k * (x[0] + x[1])); }, 1.0, k * std::sqrt(2.0)});
    out.push_back({"sin_2x1", [k](const Point& x) { return std::sin(2 * k * x[1]); }, 1.0, 2 * k});
    out.push_back({"bump",
                   [m, c, sigma](const Point& x) {
                     const double d = geodesic_distance(m, {c, c, 0.0}, x);
                     return std::exp(-d * d / (2 * sigma * sigma));
                   },
                   1.0, std::exp(-0.5) / sigma});
  } else {
    const double sigma = 0.4;
    out.push_back({"z", [](const Point& x) { return x[2]; }, 1.0, 1.0});
    out.push_back({"x", [](const Point& x) { return x[0]; }, 1.0, 1.0});
    out.push_back({"3z2_minus_1", [](const Point& x) { return 3 * x[2] * x[2] - 1; }, 2.0, 3.0});
    out.push_back({"bump",
                   [sigma](const Point& x) {
                     const double d = std::acos(std::clamp(x[2], -1.0, 1.0));
                     return std::exp(-d * d / (2 * sigma * sigma));
                   },
                   1.0, std::exp(-0.5) / sigma});
  }
  return out;
}

HeatOracle HeatOracle::spectral(std::shared_ptr<const ContinuumEigensystem> eig) {
  HeatOracle o;
  o.apply = [eig](const TestFunction& f, double t, std::span<const Point> pts) {
    return continuum_heat_apply(*eig, t, f.f, pts);
  };
  return o;
}

HeatOracle HeatOracle::grid(const Manifold& m, const Density& density, std::size_t n) {
  if (m.kind != ManifoldKind::FlatTorus) throw Error(ErrorCode::Unsupported, "grid oracle needs the torus");
  HeatOracle o;
  o.apply = [m, density, n](const TestFunction& f, double t, std::span<const Point> pts) {
    const GridField g = grid_heat_step(GridField::sample(n, m.side, f.f), t, density);
    Vector out(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) out[i] = g.interpolate_cubic(pts[i]);
    return out;
  };
  return o;
}

namespace {

std::shared_ptr<const ContinuumEigensystem> eigensystem_for(const Manifold& m, const Density& density, double t,
                                                            std::size_t at_least = 1) {
  const double need = heat_truncation_eigenvalue(t);
  std::size_t count = std::max<std::size_t>(at_least, 64);
  for (;;) {
    auto eig = std::make_shared<const ContinuumEigensystem>(m, density, count);
    if (eig->complete_through() >= need) return eig;
    count *= 2;
  }
}

}  // namespace

HeatOracle HeatOracle::for_density(const Manifold& m, const Density& density, double t) {
  if (density.is_uniform())
    return spectral(eigensystem_for(m, density, t));
  if (m.kind == ManifoldKind::FlatTorus) return grid(m, density, 256);
  throw Error(ErrorCode::Unsupported, "no heat oracle for a non-uniform density on the sphere");
}

HeatApproxReport heat_approx_error(const HeatOperator& op, const HeatOracle& oracle, double h, double kappa,
                                   const std::vector<TestFunction>& tests) {
  if (!(h > 0) || !(kappa > 0)) throw Error(ErrorCode::InvalidArgument, "h and kappa must be positive");
  const PointCloud& cloud = op.graph().cloud();
  HeatApproxReport r;
  r.sqrt_h = std::sqrt(h);
  r.h32 = std::pow(h, 1.5);
  for (const auto& tf : tests) {
    const Vector f = sample_on(cloud, tf.f);
    const Vector s = op.apply(h, f);
    const Vector ref = oracle.apply(tf, kappa * h, cloud.points);
    r.rows.push_back({tf.name, sup_abs_diff(s, ref), tf.sup, tf.lipschitz});
  }
  if (r.rows.size() >= 2) {
    Eigen::MatrixXd a(r.rows.size(), 2);
    Eigen::VectorXd b(r.rows.size());
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
      a(i, 0) = r.rows[i].sup_f;
      a(i, 1) = r.rows[i].lip_f;
      b(i) = r.rows[i].sup_error;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto sv = svd.singularValues();
    r.condition = sv(1) > 0 ? sv(0) / sv(1) : std::numeric_limits<double>::infinity();
    const Eigen::VectorXd x = svd.solve(b);
    r.coef_sup = x(0);
    r.coef_lip = x(1);
    r.well_conditioned = r.condition < 1e8;
  } else {
    r.coef_sup = r.coef_lip = kNaN;
    r.condition = std::numeric_limits<double>::infinity();
  }
  return r;
}

KernelErrorReport kernel_sup_error(const SpectralDecomposition& dec, const WeightedGraph& g,
                                   const ContinuumEigensystem& eig, double h, double kappa, PairMode mode,
                                   std::size_t sample_rows, std::uint64_t seed) {
  if (!(h > 0) || !(kappa > 0)) throw Error(ErrorCode::InvalidArgument, "h and kappa must be positive");
  if (!g.cloud().density.is_uniform()) throw Error(ErrorCode::Unsupported, "kernel error needs uniform density");
  if (dec.n != g.size()) throw Error(ErrorCode::InvalidArgument, "decomposition does not match graph");
  const std::size_t n = g.size();
  bool exhaustive = mode == PairMode::Exhaustive || (mode == PairMode::Auto && n <= kExhaustiveCap);
  std::vector<std::size_t> rows;
  if (exhaustive) {
    rows.resize(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  } else {
    Rng rng(seed);
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    const std::size_t take = std::min(sample_rows, n);
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.uniform() * (n - i));
      std::swap(all[i], all[std::min(j, n - 1)]);
    }
    rows.assign(all.begin(), all.begin() + take);
    std::sort(rows.begin(), rows.end());
    exhaustive = take == n;
  }
  const PointCloud& cloud = g.cloud();
  const double rho = cloud.density.rho(cloud.manifold, cloud.points.front());
  Vector decay(dec.K), a(dec.K);
  for (std::size_t l = 0; l < dec.K; ++l) decay[l] = std::exp(-h * dec.eigenvalues[l]);
  KernelErrorReport r;
  r.exhaustive = exhaustive;
  for (std::size_t i : rows) {
    for (std::size_t l = 0; l < dec.K; ++l) a[l] = decay[l] * dec.vec(i, l);
    for (std::size_t j = 0; j < n; ++j) {
      const double* vj = &dec.eigenvectors[j * dec.K];
      double s = 0.0;
      for (std::size_t l = 0; l < dec.K; ++l) s += a[l] * vj[l];
      const double graph = s * g.degrees()[j] / n;
      const double cont = rho / n * eig.heat_kernel(kappa * h, cloud.points[i], cloud.points[j]);
      r.sup_error = std::max(r.sup_error, std::abs(graph - cont));
    }
    r.pairs += n;
  }
  r.normalized = r.sup_error * n / std::sqrt(h);
  return r;
}

namespace {

// Orthonormal basis (Euclidean) of the columns after weighting rows by sqrt(d_i / n).
Eigen::MatrixXd weighted_orthonormal(Eigen::MatrixXd a, const Vector& d) {
  const std::size_t n = d.size();
  for (std::size_t i = 0; i < n; ++i) a.row(i) *= std::sqrt(d[i] / n);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  return qr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
}

}  // namespace

SpectralReport spectral_convergence_report(const SpectralDecomposition& dec, const WeightedGraph& g,
                                           const ContinuumEigensystem& eig, double kappa, std::size_t L) {
  if (L > dec.K) throw Error(ErrorCode::InvalidArgument, "L must not exceed K");
  if (L > eig.size()) throw Error(ErrorCode::InvalidArgument, "continuum eigensystem is smaller than L");
  SpectralReport r;
  for (std::size_t l = 0; l < L; ++l) {
    const double c = kappa * eig.eigenvalue(l);
    r.rows.push_back({l + 1, dec.eigenvalues[l], c, std::abs(dec.eigenvalues[l] - c)});
  }
  const std::size_t n = g.size();
  const PointCloud& cloud = g.cloud();
  std::vector<Vector> values(n, Vector(eig.size()));
  bool evaluated = false;
  for (auto [b, e] : eig.groups()) {
    if (e > L) break;
    if (!evaluated) {
      for (std::size_t i = 0; i < n; ++i) eig.evaluate_all(cloud.points[i], values[i]);
      evaluated = true;
    }
    const auto m = static_cast<Eigen::Index>(e - b);
    Eigen::MatrixXd gv(n, m), cv(n, m);
    for (std::size_t i = 0; i < n; ++i) {
      for (Eigen::Index k = 0; k < m; ++k) {
        gv(i, k) = dec.vec(i, b + k);
        cv(i, k) = values[i][b + k];
      }
    }
    const Eigen::MatrixXd qg = weighted_orthonormal(gv, g.degrees()), qc = weighted_orthonormal(cv, g.degrees());
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(qg.transpose() * qc);
    const double smallest = std::clamp(svd.singularValues().minCoeff(), 0.0, 1.0);
    r.angles.push_back({b + 1, e, eig.eigenvalue(b), std::acos(smallest) * 180.0 / kPi});
  }
  return r;
}

Vector degree_density_profile(const WeightedGraph& g, const Density& density) {
  const double c1 = kernel_constants(g.kernel(), g.intrinsic_dim()).c1;
  const PointCloud& cloud = g.cloud();
  Vector out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = g.degrees()[i] - c1 * density.rho(cloud.manifold, cloud.points[i]);
  return out;
}

double degree_density_error(const WeightedGraph& g, const Density& density) {
  double m = 0.0;
  for (double v : degree_density_profile(g, density)) m = std::max(m, std::abs(v));
  return m;
}

FrontError front_error(const MBOTrace& trace, const PointCloud& cloud, const FrontFlow& flow,
                       const std::vector<double>& times, double collar) {
  if (!(collar >= 0)) throw Error(ErrorCode::InvalidArgument, "collar must be nonnegative");
  FrontError fe;
  for (std::size_t l = 0; l < trace.steps(); ++l) {
    if (trace.states[l].ones() == 0) {
      fe.extinction_time = trace.time(l);
      break;
    }
  }
  const std::size_t n = cloud.size();
  for (double t : times) {
    const FrontState ref = flow(t);
    FrontErrorRow row;
    row.t = t;
    row.status = ref.status;
    std::size_t wrong_outside = 0;
    double maxd = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double sd = signed_distance(cloud.manifold, ref.front, cloud.points[i]);
      const int truth = sd > 0 ? 1 : 0;
      const int label = interpolate(trace, t, i);
      if (label == truth) continue;
      maxd = std::max(maxd, std::abs(sd));
      if (std::abs(sd) >= collar) ++wrong_outside;
    }
    row.fraction = n ? double(wrong_outside) / n : 0.0;
    row.max_distance = maxd;
    fe.rows.push_back(row);
  }
  return fe;
}

void write_front_error_csv(const FrontError& fe, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << "time,fraction,max_distance,status,extinction_estimate\n";
  const std::string ext = fe.extinction_time ? format_double(*fe.extinction_time) : "";
  for (const auto& r : fe.rows) {
    const char* st = r.status == FrontStatus::Alive ? "alive" : r.status == FrontStatus::Extinct ? "extinct" : "filled";
    out << format_double(r.t) << ',' << format_double(r.fraction) << ',' << format_double(r.max_distance) << ','
        << st << ',' << ext << '\n';
  }
}

void write_spectral_report_csv(const SpectralReport& r, const std::string& path, const std::string& angles_path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << "l,graph,continuum_scaled,abs_error\n";
  for (const auto& row : r.rows)
    out << row.l << ',' << format_double(row.graph) << ',' << format_double(row.continuum) << ','
        << format_double(row.abs_error) << '\n';
  std::ofstream ang(angles_path);
  if (!ang) throw Error(ErrorCode::Io, "cannot write " + angles_path);
  ang << "first,last,continuum_eigenvalue,max_angle_deg\n";
  for (const auto& a : r.angles)
    ang << a.begin << ',' << a.end << ',' << format_double(a.continuum) << ',' << format_double(a.max_angle_deg) << '\n';
}

void write_heat_approx_csv(const HeatApproxReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << "function,sup_error,sup_f,lip_f,sqrt_h,h32\n";
  for (const auto& row : r.rows)
    out << row.name << ',' << format_double(row.sup_error) << ',' << format_double(row.sup_f) << ','
        << format_double(row.lip_f) << ',' << format_double(r.sqrt_h) << ',' << format_double(r.h32) << '\n';
}

std::vector<std::string> study_metric_names() {
  return {"connected",          "degree_error",      "mass_defect_full", "mass_defect_trunc",
          "max_principle_full", "max_principle_trunc", "max_principle_trunc_ratio", "heat_error_full",
          "heat_error_trunc",   "kernel_sup",        "kernel_normalized", "lambda_error_max",
          "angle_max_deg",      "residual_max"};
}

namespace {

StudyRow run_job(const StudyJob& job, const StudySettings& st) {
  StudyRow row;
  row.job = job;
  const auto start = std::chrono::steady_clock::now();
  try {
    if (job.n < 2 || !(job.eps > 0) || !(job.h > 0) || job.K < 1 || job.K > job.n)
      throw Error(ErrorCode::InvalidArgument, "job needs n >= 2, eps > 0, h > 0 and 1 <= K <= n");
    const PointCloud cloud = sample_points(st.manifold, st.density, job.n, job.seed);
    auto g = std::make_shared<const WeightedGraph>(build_graph(cloud, job.eps, KernelProfile{st.kernel}));
    const double kappa = kernel_constants(g->kernel(), 2).kappa;
    EigenSolverOptions opt;
    opt.tol = st.solver_tol;
    auto dec = std::make_shared<const SpectralDecomposition>(partial_eigendecomposition(*g, job.K, opt));
    const HeatOperator full = HeatOperator::full(g);
    const HeatOperator trunc = HeatOperator::truncated(g, dec);
    auto put = [&](const std::string& k, double v) { row.metrics.emplace_back(k, v); };
    put("connected", g->connected() ? 1.0 : 0.0);
    put("degree_error", degree_density_error(*g, st.density));
    put("mass_defect_full", mass_defect(full, job.h));
    put("mass_defect_trunc", mass_defect(trunc, job.h));
    put("max_principle_full", max_principle_error(full, job.h, st.trials, job.seed).raw);
    const auto mpt = max_principle_error(trunc, job.h, st.trials, job.seed);
    put("max_principle_trunc", mpt.raw);
    put("max_principle_trunc_ratio", mpt.ratio);
    double hf = kNaN, ht = kNaN;
    try {
      const HeatOracle oracle = HeatOracle::for_density(st.manifold, st.density, kappa * job.h);
      const auto tests = default_test_functions(st.manifold);
      auto worst = [](const HeatApproxReport& r) {
        double m = 0.0;
        for (const auto& x : r.rows) m = std::max(m, x.sup_error);
        return m;
      };
      hf = worst(heat_approx_error(full, oracle, job.h, kappa, tests));
      ht = worst(heat_approx_error(trunc, oracle, job.h, kappa, tests));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Unsupported) throw;
    }
    put("heat_error_full", hf);
    put("heat_error_trunc", ht);
    double ks = kNaN, kn = kNaN, le = kNaN, am = kNaN;
    if (st.density.is_uniform()) {
      const std::size_t L = std::min(st.spectral_L, job.K);
      const auto eigp = eigensystem_for(st.manifold, st.density, kappa * job.h, L);
      const ContinuumEigensystem& eig = *eigp;
      const auto kr = kernel_sup_error(*dec, *g, eig, job.h, kappa, PairMode::Auto, st.kernel_sample_rows, job.seed);
      ks = kr.sup_error;
      kn = kr.normalized;
      const auto sr = spectral_convergence_report(*dec, *g, eig, kappa, L);
      le = 0.0;
      for (const auto& x : sr.rows) le = std::max(le, x.abs_error);
      am = 0.0;
      for (const auto& a : sr.angles) am = std::max(am, a.max_angle_deg);
    }
    put("kernel_sup", ks);
    put("kernel_normalized", kn);
    put("lambda_error_max", le);
    put("angle_max_deg", am);
    double rm = 0.0;
    for (double v : dec->residuals) rm = std::max(rm, v);
    put("residual_max", rm);
    row.ok = true;
  } catch (const std::exception& e) {
    row.ok = false;
    row.error = e.what();
    row.metrics.clear();
  }
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return row;
}

std::string csv_escape(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += (c == '\n' ? ' ' : c);
  }
  return out + "\"";
}

}  // namespace

std::vector<StudyRow> convergence_study(const std::vector<StudyJob>& jobs, const StudySettings& settings,
                                        std::size_t workers) {
  std::vector<StudyRow> rows(jobs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) rows[i] = run_job(jobs[i], settings);
  };
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(1, jobs.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  return rows;
}

void write_study(const std::vector<StudyRow>& rows, const std::string& wide_path, const std::string& long_path,
                 const std::string& timings_path) {
  const auto names = study_metric_names();
  std::ofstream wide(wide_path);
  if (!wide) throw Error(ErrorCode::Io, "cannot write " + wide_path);
  wide << "n,seed,eps,h,K,status";
  for (const auto& m : names) wide << ',' << m;
  wide << ",error\n";
  std::ofstream lng(long_path);
  if (!lng) throw Error(ErrorCode::Io, "cannot write " + long_path);
  lng << "metric,n,eps,h,K,seed,value\n";
  for (const auto& r : rows) {
    const auto& j = r.job;
    wide << j.n << ',' << j.seed << ',' << format_double(j.eps) << ',' << format_double(j.h) << ',' << j.K << ','
         << (r.ok ? "ok" : "failed");
    for (const auto& m : names) {
      wide << ',';
      for (const auto& [k, v] : r.metrics)
        if (k == m) wide << format_double(v);
    }
    wide << ',' << (r.ok ? "" : csv_escape(r.error)) << '\n';
    for (const auto& [k, v] : r.metrics)
      lng << k << ',' << j.n << ',' << format_double(j.eps) << ',' << format_double(j.h) << ',' << j.K << ','
          << j.seed << ',' << format_double(v) << '\n';
  }
  if (timings_path.empty()) return;
  std::ofstream tim(timings_path);
  if (!tim) throw Error(ErrorCode::Io, "cannot write " + timings_path);
  tim << "n,seed,seconds\n";
  for (const auto& r : rows) tim << r.job.n << ',' << r.job.seed << ',' << format_double(r.seconds) << '\n';
}

}  // namespace mbolab
