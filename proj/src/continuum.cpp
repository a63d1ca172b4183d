#include "mbolab/continuum.hpp"

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <boost/numeric/odeint.hpp>
#include <cmath>
#include <complex>
#include <fstream>
#include <future>
#include <limits>
#include <mutex>
#include <sstream>

#include "mbolab/legendre.hpp"

namespace mbolab {

namespace {

constexpr double kTruncationLog = 32.236191301916641;  // -ln(1e-14)

// FFTW planning is not thread-safe.
std::mutex& fftw_mutex() {
  static std::mutex m;
  return m;
}

struct RealBuffer {
  explicit RealBuffer(std::size_t n) : p(fftw_alloc_real(n)) {}
  ~RealBuffer() { fftw_free(p); }
  RealBuffer(const RealBuffer&) = delete;
  RealBuffer& operator=(const RealBuffer&) = delete;
  double* p;
};

struct ComplexBuffer {
  explicit ComplexBuffer(std::size_t n) : p(fftw_alloc_complex(n)) {}
  ~ComplexBuffer() { fftw_free(p); }
  ComplexBuffer(const ComplexBuffer&) = delete;
  ComplexBuffer& operator=(const ComplexBuffer&) = delete;
  fftw_complex* p;
};

class Plan {
 public:
  explicit Plan(fftw_plan p) : p_(p) {
    if (!p_) throw Error(ErrorCode::Numerical, "FFTW planning failed");
  }
  ~Plan() {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    fftw_destroy_plan(p_);
  }
  Plan(const Plan&) = delete;
  Plan& operator=(const Plan&) = delete;
  void execute() const { fftw_execute(p_); }

 private:
  fftw_plan p_;
};

Plan plan_r2c_2d(int n, double* in, fftw_complex* out) {
  std::lock_guard<std::mutex> lock(fftw_mutex());
  return Plan(fftw_plan_dft_r2c_2d(n, n, in, out, FFTW_ESTIMATE));
}

Plan plan_c2r_2d(int n, fftw_complex* in, double* out) {
  std::lock_guard<std::mutex> lock(fftw_mutex());
  return Plan(fftw_plan_dft_c2r_2d(n, n, in, out, FFTW_ESTIMATE));
}

// N rows of length N, transformed along the row.
Plan plan_rows_r2c(int n, double* in, fftw_complex* out) {
  std::lock_guard<std::mutex> lock(fftw_mutex());
  int len[1] = {n};
  return Plan(fftw_plan_many_dft_r2c(1, len, n, in, nullptr, 1, n, out, nullptr, 1, n / 2 + 1, FFTW_ESTIMATE));
}

Plan plan_rows_c2r(int n, fftw_complex* in, double* out) {
  std::lock_guard<std::mutex> lock(fftw_mutex());
  int len[1] = {n};
  return Plan(fftw_plan_many_dft_c2r(1, len, n, in, nullptr, 1, n / 2 + 1, out, nullptr, 1, n, FFTW_ESTIMATE));
}

bool is_pow2(std::size_t n) { return n >= 4 && (n & (n - 1)) == 0; }

std::size_t wrap_index(long i, std::size_t n) {
  const long m = static_cast<long>(n);
  i %= m;
  return static_cast<std::size_t>(i < 0 ? i + m : i);
}

// Cyclic tridiagonal solver (Sherman-Morrison around the Thomas algorithm), factored once.
class CyclicTridiagonal {
 public:
  CyclicTridiagonal(Vector sub, Vector diag, Vector super) : a_(std::move(sub)), c_(std::move(super)) {
    const std::size_t n = diag.size();
    gamma_ = -diag[0];
    alpha_ = c_[n - 1];  // row n-1, column 0
    beta_ = a_[0];       // row 0, column n-1
    Vector bb = std::move(diag);
    bb[0] -= gamma_;
    bb[n - 1] -= alpha_ * beta_ / gamma_;
    cp_.resize(n);
    inv_.resize(n);
    inv_[0] = 1.0 / bb[0];
    cp_[0] = c_[0] * inv_[0];
    for (std::size_t i = 1; i < n; ++i) {
      inv_[i] = 1.0 / (bb[i] - a_[i] * cp_[i - 1]);
      cp_[i] = c_[i] * inv_[i];
    }
    Vector u(n, 0.0);
    u[0] = gamma_;
    u[n - 1] = alpha_;
    z_ = thomas(u);
    zden_ = 1.0 + z_[0] + beta_ * z_[n - 1] / gamma_;
  }

  void solve(Vector& r) const {
    Vector x = thomas(r);
    const std::size_t n = x.size();
    const double f = (x[0] + beta_ * x[n - 1] / gamma_) / zden_;
    for (std::size_t i = 0; i < n; ++i) r[i] = x[i] - f * z_[i];
  }

 private:
  Vector thomas(const Vector& r) const {
    const std::size_t n = r.size();
    Vector d(n);
    d[0] = r[0] * inv_[0];
    for (std::size_t i = 1; i < n; ++i) d[i] = (r[i] - a_[i] * d[i - 1]) * inv_[i];
    for (std::size_t i = n - 1; i-- > 0;) d[i] -= cp_[i] * d[i + 1];
    return d;
  }

  Vector a_, c_, cp_, inv_, z_;
  double gamma_ = 0, alpha_ = 0, beta_ = 0, zden_ = 1;
};

GridField heat_uniform(const GridField& f, double t) {
  const std::size_t n = f.n;
  const std::size_t nc = n / 2 + 1;
  RealBuffer in(n * n);
  ComplexBuffer spec(n * nc);
  Plan fwd = plan_r2c_2d(static_cast<int>(n), in.p, spec.p);
  Plan inv = plan_c2r_2d(static_cast<int>(n), spec.p, in.p);
  std::copy(f.values.begin(), f.values.end(), in.p);
  fwd.execute();
  const double k = 2.0 * kPi / f.side;
  const double norm = 1.0 / (static_cast<double>(n) * n);
  for (std::size_t i = 0; i < n; ++i) {
    const double mi = i <= n / 2 ? double(i) : double(i) - double(n);
    for (std::size_t j = 0; j < nc; ++j) {
      const double m2 = mi * mi + double(j) * double(j);
      const double factor = std::exp(-t * k * k * m2) * norm;
      spec.p[i * nc + j][0] *= factor;
      spec.p[i * nc + j][1] *= factor;
    }
  }
  inv.execute();
  GridField out(n, f.side);
  std::copy(in.p, in.p + n * n, out.values.begin());
  return out;
}

GridField heat_cosine(const GridField& f, double t, const Density& density, std::size_t min_substeps) {
  const std::size_t n = f.n;
  const std::size_t nc = n / 2 + 1;
  const int axis = density.axis;
  const double dx = f.cell();
  const Manifold m = f.manifold();
  // buf[a * n + b]: a along the density axis, b along the uniform axis
  RealBuffer buf(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) buf.p[axis == 0 ? i * n + j : j * n + i] = f.at(i, j);
  ComplexBuffer spec(n * nc);
  Plan fwd = plan_rows_r2c(static_cast<int>(n), buf.p, spec.p);
  Plan inv = plan_rows_c2r(static_cast<int>(n), spec.p, buf.p);
  fwd.execute();

  auto xi_at = [&](double s) {
    Point p{0.0, 0.0, 0.0};
    p[axis] = s;
    return density.xi(m, p);
  };
  Vector xc(n), xf(n);  // centres and right faces
  for (std::size_t a = 0; a < n; ++a) {
    xc[a] = xi_at((a + 0.5) * dx);
    xf[a] = xi_at((a + 1.0) * dx);
  }
  const std::size_t steps = std::max<std::size_t>(min_substeps, 2);
  const double dt = t / steps;
  const double inv_dx2 = 1.0 / (dx * dx);

  Vector re(n), im(n), sub(n), diag(n), sup(n), opdiag(n);
  for (std::size_t mode = 0; mode < nc; ++mode) {
    const double s = std::sin(kPi * mode / n);
    const double sigma = 4.0 * inv_dx2 * s * s;
    for (std::size_t a = 0; a < n; ++a) {
      const double left = xf[wrap_index(long(a) - 1, n)], right = xf[a];
      const double wl = left * inv_dx2 / xc[a], wr = right * inv_dx2 / xc[a];
      opdiag[a] = sigma + wl + wr;
      sub[a] = -wl;
      sup[a] = -wr;
    }
    // M = I + (dt/2) A, shared by the backward-Euler half steps and Crank-Nicolson
    Vector msub(n), mdiag(n), msup(n);
    for (std::size_t a = 0; a < n; ++a) {
      msub[a] = 0.5 * dt * sub[a];
      mdiag[a] = 1.0 + 0.5 * dt * opdiag[a];
      msup[a] = 0.5 * dt * sup[a];
    }
    const CyclicTridiagonal solver(msub, mdiag, msup);
    for (std::size_t a = 0; a < n; ++a) {
      re[a] = spec.p[a * nc + mode][0];
      im[a] = spec.p[a * nc + mode][1];
    }
    auto cn_rhs = [&](Vector& v) {
      Vector r(n);
      for (std::size_t a = 0; a < n; ++a) {
        const double av = opdiag[a] * v[a] + sub[a] * v[wrap_index(long(a) - 1, n)] + sup[a] * v[(a + 1) % n];
        r[a] = v[a] - 0.5 * dt * av;
      }
      v.swap(r);
    };
    for (Vector* v : {&re, &im}) {
      solver.solve(*v);
      solver.solve(*v);
      for (std::size_t k = 1; k < steps; ++k) {
        cn_rhs(*v);
        solver.solve(*v);
      }
    }
    for (std::size_t a = 0; a < n; ++a) {
      spec.p[a * nc + mode][0] = re[a];
      spec.p[a * nc + mode][1] = im[a];
    }
  }
  inv.execute();
  GridField out(n, f.side);
  const double norm = 1.0 / n;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = norm * buf.p[axis == 0 ? i * n + j : j * n + i];
  return out;
}

}  // namespace

GridField::GridField(std::size_t n_, double side_) : n(n_), side(side_), values(n_ * n_, 0.0) {
  if (!is_pow2(n)) throw Error(ErrorCode::InvalidArgument, "grid size must be a power of two >= 4");
  if (!(side > 0)) throw Error(ErrorCode::InvalidArgument, "grid side must be positive");
}

Point GridField::center(std::size_t i, std::size_t j) const { return {(i + 0.5) * cell(), (j + 0.5) * cell(), 0.0}; }

GridField GridField::sample(std::size_t n, double side, const std::function<double(const Point&)>& f) {
  GridField g(n, side);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) g.at(i, j) = f(g.center(i, j));
  return g;
}

GridField GridField::indicator(std::size_t n, const FrontDescriptor& region) {
  if (region.manifold.kind != ManifoldKind::FlatTorus)
    throw Error(ErrorCode::InvalidArgument, "grid fields live on the torus");
  region.validate();
  const Manifold m = region.manifold;
  return sample(n, m.side, [&](const Point& x) { return signed_distance(m, region, x) > 0 ? 1.0 : 0.0; });
}

double GridField::interpolate(const Point& x) const {
  const double si = x[0] / cell() - 0.5, sj = x[1] / cell() - 0.5;
  const double fi = std::floor(si), fj = std::floor(sj);
  const double ti = si - fi, tj = sj - fj;
  const std::size_t i0 = wrap_index(long(fi), n), j0 = wrap_index(long(fj), n);
  const std::size_t i1 = (i0 + 1) % n, j1 = (j0 + 1) % n;
  return (1 - ti) * ((1 - tj) * at(i0, j0) + tj * at(i0, j1)) + ti * ((1 - tj) * at(i1, j0) + tj * at(i1, j1));
}

double GridField::interpolate_cubic(const Point& x) const {
  const double si = x[0] / cell() - 0.5, sj = x[1] / cell() - 0.5;
  const double fi = std::floor(si), fj = std::floor(sj);
  auto weights = [](double f) {
    return std::array<double, 4>{-f * (f - 1) * (f - 2) / 6.0, (f + 1) * (f - 1) * (f - 2) / 2.0,
                                 -(f + 1) * f * (f - 2) / 2.0, (f + 1) * f * (f - 1) / 6.0};
  };
  const auto wi = weights(si - fi), wj = weights(sj - fj);
  double s = 0.0;
  for (int a = 0; a < 4; ++a) {
    const std::size_t i = wrap_index(long(fi) - 1 + a, n);
    double row = 0.0;
    for (int b = 0; b < 4; ++b) row += wj[b] * at(i, wrap_index(long(fj) - 1 + b, n));
    s += wi[a] * row;
  }
  return s;
}

double GridField::integral() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s * cell() * cell();
}

double GridField::weighted_mass(const Density& density) const {
  const Manifold m = manifold();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) s += density.xi(m, center(i, j)) * at(i, j);
  return s * cell() * cell();
}

GridField grid_heat_step(const GridField& field, double t, const Density& density, GridHeatOptions opt) {
  if (!(t > 0)) throw Error(ErrorCode::InvalidArgument, "heat time must be positive");
  if (density.is_uniform()) return heat_uniform(field, t);
  if (density.axis < 0 || density.axis > 1) throw Error(ErrorCode::InvalidArgument, "density axis must be 0 or 1 on the torus");
  return heat_cosine(field, t, density, opt.min_substeps);
}

void ContinuumMBOConfig::validate() const {
  if (!(kappa > 0)) throw Error(ErrorCode::InvalidArgument, "kappa must be positive");
  if (!(h > 0)) throw Error(ErrorCode::InvalidArgument, "h must be positive");
}

ContinuumStep continuum_mbo_step_detailed(const GridField& field, const ContinuumMBOConfig& config,
                                          const Density& density, GridHeatOptions opt) {
  config.validate();
  for (double v : field.values)
    if (v != 0.0 && v != 1.0) throw Error(ErrorCode::InvalidArgument, "continuum MBO input must be an indicator");
  ContinuumStep out;
  out.threshold = GridField(field.n, field.side);
  const double sh = std::sqrt(config.h);
  for (std::size_t i = 0; i < field.n; ++i) {
    for (std::size_t j = 0; j < field.n; ++j) {
      const double f = config.drift ? config.drift(field.center(i, j)) : 0.0;
      if (!std::isfinite(f)) throw Error(ErrorCode::InvalidArgument, "drift is not finite on the grid");
      out.threshold.at(i, j) = 0.5 + f * sh;
    }
  }
  out.diffused = grid_heat_step(field, config.kappa * config.h, density, opt);
  out.labels = GridField(field.n, field.side);
  for (std::size_t k = 0; k < field.values.size(); ++k)
    out.labels.values[k] = out.diffused.values[k] >= out.threshold.values[k] ? 1.0 : 0.0;
  return out;
}

GridField continuum_mbo_step(const GridField& field, const ContinuumMBOConfig& config, const Density& density,
                             GridHeatOptions opt) {
  return continuum_mbo_step_detailed(field, config, density, opt).labels;
}

FrontState analytic_front(const FrontDescriptor& front, double kappa, double t, const Density& density) {
  if (!density.is_uniform())
    throw Error(ErrorCode::Unsupported, "closed-form fronts need uniform density; use the drift ODE");
  return analytic_front(front, kappa, t);
}

FrontState analytic_front(const FrontDescriptor& front, double kappa, double t) {
  if (!(t >= 0)) throw Error(ErrorCode::InvalidArgument, "time must be nonnegative");
  if (!(kappa > 0)) throw Error(ErrorCode::InvalidArgument, "kappa must be positive");
  FrontState s;
  s.front = front;
  switch (front.kind) {
    case FrontKind::Circle: {
      const double r2 = front.radius * front.radius - 2.0 * kappa * t;
      if (r2 <= 0) {
        s.status = FrontStatus::Extinct;
        s.front = FrontDescriptor::empty(front.manifold);
      } else {
        s.front.radius = std::sqrt(r2);
      }
      break;
    }
    case FrontKind::Cap: {
      const double c = std::cos(front.theta0) * std::exp(kappa * t);
      if (c >= 1.0) {
        s.status = FrontStatus::Extinct;
        s.front = FrontDescriptor::empty(front.manifold);
      } else if (c <= -1.0) {
        s.status = FrontStatus::Filled;
        s.front = FrontDescriptor::whole(front.manifold);
      } else {
        s.front.theta0 = std::acos(c);
      }
      break;
    }
    case FrontKind::Empty:
      s.status = FrontStatus::Extinct;
      break;
    case FrontKind::Whole:
      s.status = FrontStatus::Filled;
      break;
    case FrontKind::Band:
      break;
  }
  return s;
}

double drift_front_ode(double a0, const Manifold& m, const Density& density, double kappa, double t, double tol) {
  if (m.kind != ManifoldKind::FlatTorus) throw Error(ErrorCode::InvalidArgument, "straight fronts live on the torus");
  if (!(t >= 0)) throw Error(ErrorCode::InvalidArgument, "time must be nonnegative");
  if (t == 0 || density.is_uniform()) return a0;
  namespace ode = boost::numeric::odeint;
  using State = std::array<double, 1>;
  const int axis = density.axis;
  auto rhs = [&](const State& a, State& dadt, double) {
    Point p{0.0, 0.0, 0.0};
    p[axis] = a[0];
    dadt[0] = -kappa * density.grad_log_xi(m, p)[axis];
  };
  State a{a0};
  ode::integrate_adaptive(ode::make_controlled<ode::runge_kutta_dopri5<State>>(tol, tol), rhs, a, 0.0, t,
                          std::min(t, 1e-3));
  return a[0];
}

namespace {

Displacement summarize(const std::vector<double>& z, bool unbounded) {
  Displacement d;
  d.samples = z.size();
  d.unbounded = unbounded;
  if (unbounded) {
    d.max_z = d.mean_z = std::numeric_limits<double>::infinity();
    return d;
  }
  double sum = 0.0;
  for (double v : z) {
    d.max_z = std::max(d.max_z, std::abs(v));
    sum += std::abs(v);
  }
  d.mean_z = z.empty() ? 0.0 : sum / z.size();
  return d;
}

// Walks +-normal from each boundary sample until `inside` flips; step ds, max distance `reach`.
Displacement walk_labels(const FrontDescriptor& before, std::size_t samples, double ds, double reach,
                         const std::function<bool(const Point&)>& inside) {
  std::vector<double> z;
  for (const Point& p : boundary_samples(before, samples)) {
    const Point nu = outer_normal(before, p);
    const bool start = inside(p);
    const double dir = start ? 1.0 : -1.0;
    bool found = false;
    for (double s = ds; s <= reach; s += ds) {
      if (inside(geodesic_step(before.manifold, p, nu, dir * s)) != start) {
        z.push_back(start ? s - 0.5 * ds : -(s - 0.5 * ds));
        found = true;
        break;
      }
    }
    if (!found) return summarize({}, true);
  }
  return summarize(z, false);
}

void require_torus_front(const FrontDescriptor& f) {
  if (f.manifold.kind != ManifoldKind::FlatTorus || f.kind == FrontKind::Whole || f.kind == FrontKind::Empty)
    throw Error(ErrorCode::InvalidArgument, "grid displacement needs a circle or band on the torus");
}

// Nearest-node queries through a bucket grid.
class NearestNode {
 public:
  explicit NearestNode(const PointCloud& cloud) : cloud_(cloud) {
    const Manifold& m = cloud.manifold;
    torus_ = m.kind == ManifoldKind::FlatTorus;
    dim_ = torus_ ? 2 : 3;
    extent_ = torus_ ? m.side : 2.0;
    nb_ = std::max<long>(1, static_cast<long>(std::pow(double(cloud.size()) / 2.0, 1.0 / dim_)));
    cell_ = extent_ / nb_;
    buckets_.resize(static_cast<std::size_t>(std::pow(nb_, dim_)));
    for (std::size_t i = 0; i < cloud.size(); ++i) buckets_[key(cell_of(cloud.points[i]))].push_back(i);
  }

  std::size_t query(const Point& x) const {
    const auto c = cell_of(x);
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (long ring = 0; ring <= nb_; ++ring) {
      // every point outside the ring's cube is at least (ring - 1) * cell away in some coordinate
      if (ring >= 1 && (ring - 1) * cell_ > best) break;
      visit_ring(c, ring, [&](std::size_t b) {
        for (std::size_t i : buckets_[b]) {
          const double d = kernel_distance(cloud_.manifold, x, cloud_.points[i]);
          if (d < best || (d == best && i < arg)) {
            best = d;
            arg = i;
          }
        }
      });
    }
    return arg;
  }

 private:
  std::array<long, 3> cell_of(const Point& p) const {
    std::array<long, 3> c{0, 0, 0};
    for (int d = 0; d < dim_; ++d) {
      const double v = torus_ ? p[d] : p[d] + 1.0;
      c[d] = std::clamp(static_cast<long>(std::floor(v / cell_)), 0L, nb_ - 1);
    }
    return c;
  }
  std::size_t key(const std::array<long, 3>& c) const {
    std::size_t k = 0;
    for (int d = 0; d < dim_; ++d) k = k * nb_ + c[d];
    return k;
  }
  template <typename Fn>
  void visit_ring(const std::array<long, 3>& c, long r, Fn fn) const {
    const long zr = dim_ == 3 ? r : 0;
    std::vector<std::size_t> seen;
    for (long a = -r; a <= r; ++a)
      for (long b = -r; b <= r; ++b)
        for (long e = -zr; e <= zr; ++e) {
          if (std::max({std::abs(a), std::abs(b), std::abs(e)}) != r) continue;
          std::array<long, 3> q{c[0] + a, c[1] + b, c[2] + e};
          bool ok = true;
          for (int d = 0; d < dim_; ++d) {
            if (torus_) {
              q[d] = static_cast<long>(wrap_index(q[d], nb_));
            } else if (q[d] < 0 || q[d] >= nb_) {
              ok = false;
            }
          }
          if (!ok) continue;
          const std::size_t k = key(q);
          // small torus grids wrap onto the same bucket more than once
          if (std::find(seen.begin(), seen.end(), k) != seen.end()) continue;
          seen.push_back(k);
          fn(k);
        }
  }

  const PointCloud& cloud_;
  bool torus_ = true;
  int dim_ = 2;
  double extent_ = 1.0, cell_ = 1.0;
  long nb_ = 1;
  std::vector<std::vector<std::size_t>> buckets_;
};

}  // namespace

Displacement normal_displacement(const FrontDescriptor& before, const GridField& after, std::size_t samples) {
  require_torus_front(before);
  const double ds = 0.25 * after.cell();
  return walk_labels(before, samples, ds, 0.5 * after.side, [&](const Point& x) {
    const std::size_t i = wrap_index(static_cast<long>(std::floor(x[0] / after.cell())), after.n);
    const std::size_t j = wrap_index(static_cast<long>(std::floor(x[1] / after.cell())), after.n);
    return after.at(i, j) >= 0.5;
  });
}

Displacement normal_displacement(const FrontDescriptor& before, const GridField& u, const GridField& threshold,
                                 std::size_t samples) {
  require_torus_front(before);
  const double ds = 0.5 * u.cell();
  const double reach = 0.5 * u.side;
  std::vector<double> z;
  auto g = [&](const Point& x) { return u.interpolate(x) - threshold.interpolate(x); };
  for (const Point& p : boundary_samples(before, samples)) {
    const Point nu = outer_normal(before, p);
    const bool start = g(p) >= 0;
    const double dir = start ? 1.0 : -1.0;
    auto at = [&](double s) { return g(geodesic_step(before.manifold, p, nu, dir * s)) >= 0; };
    bool found = false;
    for (double s = ds; s <= reach; s += ds) {
      if (at(s) != start) {
        double lo = s - ds, hi = s;
        for (int it = 0; it < 60; ++it) {
          const double mid = 0.5 * (lo + hi);
          (at(mid) == start ? lo : hi) = mid;
        }
        z.push_back(dir * 0.5 * (lo + hi));
        found = true;
        break;
      }
    }
    if (!found) return summarize({}, true);
  }
  return summarize(z, false);
}

Displacement normal_displacement(const FrontDescriptor& before, const ClusterState& after, const PointCloud& cloud,
                                 std::size_t samples) {
  if (before.kind == FrontKind::Whole || before.kind == FrontKind::Empty)
    throw Error(ErrorCode::InvalidArgument, "trivial regions have no boundary");
  if (after.size() != cloud.size() || cloud.size() == 0)
    throw Error(ErrorCode::InvalidArgument, "labels do not match the point cloud");
  const NearestNode index(cloud);
  const double spacing = std::sqrt(cloud.manifold.volume() / cloud.size());
  const double reach = cloud.manifold.kind == ManifoldKind::FlatTorus ? 0.5 * cloud.manifold.side : kPi;
  return walk_labels(before, samples, 0.5 * spacing, reach,
                     [&](const Point& x) { return after.labels[index.query(x)] == 1; });
}

ZonalSet ZonalSet::cap(double theta0) {
  if (!(theta0 > 0 && theta0 < kPi)) throw Error(ErrorCode::InvalidArgument, "cap angle must satisfy 0 < theta0 < pi");
  return ZonalSet{{{std::cos(theta0), 1.0}}};
}

double ZonalSet::area() const {
  double s = 0.0;
  for (const auto& [lo, hi] : intervals) s += hi - lo;
  return 2.0 * kPi * s;
}

std::vector<double> ZonalSet::boundaries() const {
  std::vector<double> out;
  for (const auto& [lo, hi] : intervals) {
    if (hi < 1.0) out.push_back(std::acos(hi));
    if (lo > -1.0) out.push_back(std::acos(lo));
  }
  std::sort(out.begin(), out.end());
  return out;
}

Vector zonal_heat_coefficients(const ZonalSet& set, double t) {
  if (!(t > 0)) throw Error(ErrorCode::InvalidArgument, "heat time must be positive");
  const double need = kTruncationLog / t;
  const int lmax = static_cast<int>(std::ceil(0.5 * (-1.0 + std::sqrt(1.0 + 4.0 * need)))) + 1;
  Vector c(lmax + 1, 0.0);
  for (const auto& [lo, hi] : set.intervals) {
    const Vector ph = legendre_polynomials(lmax + 1, hi), pl = legendre_polynomials(lmax + 1, lo);
    c[0] += 0.5 * (hi - lo);
    for (int l = 1; l <= lmax; ++l) c[l] += 0.5 * ((ph[l + 1] - ph[l - 1]) - (pl[l + 1] - pl[l - 1]));
  }
  for (int l = 0; l <= lmax; ++l) c[l] *= std::exp(-t * l * (l + 1.0));
  return c;
}

double zonal_evaluate(std::span<const double> coeffs, double z) {
  double s = 0.0, p_prev = 0.0, p = 1.0;
  for (std::size_t l = 0; l < coeffs.size(); ++l) {
    s += coeffs[l] * p;
    const double next = ((2.0 * l + 1.0) * z * p - l * p_prev) / (l + 1.0);
    p_prev = p;
    p = next;
  }
  return s;
}

ZonalSet zonal_mbo_step(const ZonalSet& set, double kappa, double h) {
  if (!(kappa > 0) || !(h > 0)) throw Error(ErrorCode::InvalidArgument, "kappa and h must be positive");
  const Vector c = zonal_heat_coefficients(set, kappa * h);
  const std::size_t m = std::max<std::size_t>(4096, 16 * c.size());
  auto g = [&](double theta) { return zonal_evaluate(c, std::cos(theta)) - 0.5; };
  auto refine = [&](double lo, double hi) {
    const bool left = g(lo) >= 0;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      ((g(mid) >= 0) == left ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  };
  ZonalSet out;
  double start = -1.0;  // colatitude where the current inside run began, or -1
  double prev_theta = 0.0;
  bool prev_in = false;
  for (std::size_t k = 0; k <= m; ++k) {
    const double theta = kPi * k / m;
    const bool in = g(theta) >= 0;
    if (k == 0) {
      if (in) start = 0.0;
    } else if (in != prev_in) {
      const double cross = refine(prev_theta, theta);
      if (in) {
        start = cross;
      } else {
        out.intervals.push_back({std::cos(cross), std::cos(start)});
        start = -1.0;
      }
    }
    prev_theta = theta;
    prev_in = in;
  }
  if (start >= 0) out.intervals.push_back({-1.0, std::cos(start)});
  std::reverse(out.intervals.begin(), out.intervals.end());
  for (auto& iv : out.intervals) {
    if (iv.second > 1.0 - 1e-15 && iv.second < 1.0) iv.second = 1.0;
  }
  return out;
}

LevelSet LevelSet::circle(Point center, double radius, double side) {
  LevelSet s;
  const Manifold m = Manifold::torus(side);
  auto offset = [=](const Point& x) {
    return std::array<double, 2>{wrap_delta(x[0] - center[0], side), wrap_delta(x[1] - center[1], side)};
  };
  s.value = [=](const Point& x) { return radius - geodesic_distance(m, center, x); };
  s.gradient = [=](const Point& x) {
    const auto d = offset(x);
    const double r = std::hypot(d[0], d[1]);
    return std::array<double, 2>{-d[0] / r, -d[1] / r};
  };
  s.hessian = [=](const Point& x) {
    const auto d = offset(x);
    const double r = std::hypot(d[0], d[1]);
    const double nx = d[0] / r, ny = d[1] / r;
    return std::array<double, 4>{-(1 - nx * nx) / r, nx * ny / r, nx * ny / r, -(1 - ny * ny) / r};
  };
  return s;
}

LevelSet LevelSet::vertical_line(double a) {
  LevelSet s;
  s.value = [=](const Point& x) { return a - x[0]; };
  s.gradient = [](const Point&) { return std::array<double, 2>{-1.0, 0.0}; };
  s.hessian = [](const Point&) { return std::array<double, 4>{0.0, 0.0, 0.0, 0.0}; };
  return s;
}

namespace {

// Band-limited (trigonometric) interpolation of e^{-t Delta} u0 at a single point.
double spectral_heat_at(const GridField& u0, double t, const Point& z) {
  const std::size_t n = u0.n;
  const std::size_t nc = n / 2 + 1;
  RealBuffer in(n * n);
  ComplexBuffer spec(n * nc);
  Plan fwd = plan_r2c_2d(static_cast<int>(n), in.p, spec.p);
  std::copy(u0.values.begin(), u0.values.end(), in.p);
  fwd.execute();
  const double k = 2.0 * kPi / u0.side;
  const double s0 = z[0] / u0.cell() - 0.5, s1 = z[1] / u0.cell() - 0.5;
  std::vector<std::complex<double>> e1(n), e2(nc);
  for (std::size_t i = 0; i < n; ++i) {
    const double m = i <= n / 2 ? double(i) : double(i) - double(n);
    e1[i] = std::polar(1.0, 2.0 * kPi * m * s0 / n);
  }
  for (std::size_t j = 0; j < nc; ++j) e2[j] = std::polar(1.0, 2.0 * kPi * double(j) * s1 / n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double mi = i <= n / 2 ? double(i) : double(i) - double(n);
    for (std::size_t j = 0; j < nc; ++j) {
      const double decay = std::exp(-t * k * k * (mi * mi + double(j) * double(j)));
      if (decay == 0.0) continue;
      const std::complex<double> c(spec.p[i * nc + j][0], spec.p[i * nc + j][1]);
      const double w = (j == 0 || (n % 2 == 0 && j == n / 2)) ? 1.0 : 2.0;
      acc += w * decay * std::real(c * e1[i] * e2[j]);
    }
  }
  return acc / (static_cast<double>(n) * n);
}

}  // namespace

std::vector<ProbeRow> consistency_probe(const LevelSet& psi, const Point& z, double kappa,
                                        const std::vector<double>& h_sequence, const Density& density,
                                        ProbeOptions opt) {
  if (!(kappa > 0)) throw Error(ErrorCode::InvalidArgument, "kappa must be positive");
  if (!psi.value || !psi.gradient || !psi.hessian) throw Error(ErrorCode::InvalidArgument, "level set is incomplete");
  GridField u0(opt.grid, opt.side);
  const double dx = u0.cell();
  for (double h : h_sequence) {
    if (!(h > 0)) throw Error(ErrorCode::InvalidArgument, "probe step sizes must be positive");
    const double limit = 0.25 * std::sqrt(kappa * h);
    if (dx > limit) {
      std::size_t need = opt.grid;
      while (opt.side / need > limit) need *= 2;
      std::ostringstream os;
      os << "probe grid too coarse: cell " << dx << " exceeds 0.25*sqrt(kappa*h) = " << limit << " at h = " << h
         << "; use a grid of at least " << need << " or larger h";
      throw Error(ErrorCode::InvalidArgument, os.str());
    }
  }
  const auto g = psi.gradient(z);
  const double gn = std::hypot(g[0], g[1]);
  if (!(gn > 0)) throw Error(ErrorCode::InvalidArgument, "probe point has vanishing gradient");

  // smoothed area fraction of {psi >= 0} per cell
  for (std::size_t i = 0; i < u0.n; ++i) {
    for (std::size_t j = 0; j < u0.n; ++j) {
      const Point c = u0.center(i, j);
      const double v = psi.value(c);
      const auto gc = psi.gradient(c);
      const double gm = std::hypot(gc[0], gc[1]);
      u0.at(i, j) = gm > 0 ? std::clamp(0.5 + v / (gm * dx), 0.0, 1.0) : (v >= 0 ? 1.0 : 0.0);
    }
  }

  const auto hs = psi.hessian(z);
  const double nx = g[0] / gn, ny = g[1] / gn;
  const double trace = hs[0] + hs[3];
  const double normal = nx * (hs[0] * nx + hs[1] * ny) + ny * (hs[2] * nx + hs[3] * ny);
  const Manifold m = u0.manifold();
  const Point gl = density.grad_log_xi(m, z);
  const double drift = gl[0] * g[0] + gl[1] * g[1];
  const double rhs = (opt.psi_t - (trace - normal) - drift) / (2.0 * std::sqrt(kPi) * gn);

  std::vector<std::future<ProbeRow>> jobs;
  for (double h : h_sequence) {
    jobs.push_back(std::async(std::launch::async, [&, h] {
      const double t = kappa * h;
      const double u = density.is_uniform() ? spectral_heat_at(u0, t, z)
                                            : grid_heat_step(u0, t, density).interpolate_cubic(z);
      ProbeRow row;
      row.h = h;
      row.lhs = (0.5 - u) / std::sqrt(t);
      row.rhs = rhs;
      row.abs_gap = std::abs(row.lhs - row.rhs);
      return row;
    }));
  }
  std::vector<ProbeRow> rows;
  for (auto& j : jobs) rows.push_back(j.get());
  return rows;
}

void write_probe_csv(const std::vector<ProbeRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << "h,lhs,rhs,abs_gap\n";
  for (const auto& r : rows)
    out << format_double(r.h) << ',' << format_double(r.lhs) << ',' << format_double(r.rhs) << ','
        << format_double(r.abs_gap) << '\n';
}

void write_displacement_csv(const std::vector<DisplacementRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << "h,max_z,mean_z\n";
  for (const auto& r : rows)
    out << format_double(r.h) << ',' << format_double(r.d.max_z) << ',' << format_double(r.d.mean_z) << '\n';
}

}  // namespace mbolab
