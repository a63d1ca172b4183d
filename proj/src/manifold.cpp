#include "mbolab/manifold.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mbolab/legendre.hpp"

namespace mbolab {

namespace {

constexpr double kTruncationLog = 32.236191301916641;  // -ln(1e-14)

double torus_wave(const Manifold& m) { return 2.0 * kPi / m.side; }

std::size_t next_pow2(std::size_t v) {
  std::size_t p = 1;
  while (p < v) p <<= 1;
  return p;
}

}  // namespace

// ---------------------------------------------------------------------------
// Manifold / Density

Manifold Manifold::torus(double side) {
  if (!(side > 0)) throw Error(ErrorCode::InvalidArgument, "torus side length must be positive");
  return Manifold{ManifoldKind::FlatTorus, side};
}

Manifold Manifold::sphere() { return Manifold{ManifoldKind::Sphere, 1.0}; }

double Manifold::volume() const { return kind == ManifoldKind::FlatTorus ? side * side : 4.0 * kPi; }

std::string Manifold::name() const { return kind == ManifoldKind::FlatTorus ? "torus" : "sphere"; }

Density Density::uniform(const Manifold& m) {
  Density d;
  d.normalization = 1.0 / m.volume();
  return d;
}

Density Density::cosine(const Manifold& m, int axis, double amplitude) {
  if (!(std::abs(amplitude) < 1.0)) throw Error(ErrorCode::InvalidArgument, "cosine density amplitude must satisfy |a| < 1");
  if (axis < 0 || axis >= m.embedding_dim())
    throw Error(ErrorCode::InvalidArgument, "cosine density axis out of range for " + m.name());
  Density d;
  d.form = DensityForm::CosinePerturbed;
  d.axis = axis;
  d.amplitude = amplitude;
  // The perturbation integrates to zero on both manifolds.
  d.normalization = 1.0 / m.volume();
  return d;
}

double Density::rho(const Manifold& m, const Point& x) const {
  if (form == DensityForm::Uniform) return normalization;
  if (m.kind == ManifoldKind::FlatTorus)
    return normalization * (1.0 + amplitude * std::cos(torus_wave(m) * x[axis]));
  return normalization * (1.0 + amplitude * x[axis]);
}

double Density::xi(const Manifold& m, const Point& x) const {
  const double r = rho(m, x);
  return r * r;
}

Point Density::grad_log_xi(const Manifold& m, const Point& x) const {
  Point g{0.0, 0.0, 0.0};
  if (form == DensityForm::Uniform) return g;
  if (m.kind == ManifoldKind::FlatTorus) {
    const double k = torus_wave(m);
    const double c = std::cos(k * x[axis]);
    g[axis] = 2.0 * (-amplitude * k * std::sin(k * x[axis])) / (1.0 + amplitude * c);
    return g;
  }
  // Tangential projection of 2 a e_axis / (1 + a x_axis).
  const double s = 2.0 * amplitude / (1.0 + amplitude * x[axis]);
  Point e{0.0, 0.0, 0.0};
  e[axis] = 1.0;
  const double dot = x[axis];
  for (int i = 0; i < 3; ++i) g[i] = s * (e[i] - dot * x[i]);
  return g;
}

double Density::max_rho(const Manifold&) const {
  return normalization * (1.0 + std::abs(amplitude));
}

std::string Density::name() const { return form == DensityForm::Uniform ? "uniform" : "cosine"; }

// ---------------------------------------------------------------------------
// Sampling and metric

PointCloud sample_points(const Manifold& m, const Density& density, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "sample_points requires n >= 1");
  PointCloud cloud{m, density, {}, seed};
  cloud.points.reserve(n);
  Rng rng(seed);
  const double bound = density.max_rho(m);
  const std::size_t budget = 64 * (n + 16);
  std::size_t attempts = 0;
  while (cloud.points.size() < n) {
    if (++attempts > budget)
      throw Error(ErrorCode::Numerical, "rejection sampling exceeded its attempt budget; density is malformed");
    Point p{0.0, 0.0, 0.0};
    if (m.kind == ManifoldKind::FlatTorus) {
      p[0] = std::min(rng.uniform() * m.side, std::nextafter(m.side, 0.0));
      p[1] = std::min(rng.uniform() * m.side, std::nextafter(m.side, 0.0));
    } else {
      const double z = 2.0 * rng.uniform() - 1.0;
      const double phi = 2.0 * kPi * rng.uniform();
      const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
      p = {s * std::cos(phi), s * std::sin(phi), z};
      const double norm = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
      for (auto& c : p) c /= norm;
    }
    const double accept = rng.uniform();
    if (density.is_uniform() || accept * bound < density.rho(m, p)) cloud.points.push_back(p);
  }
  return cloud;
}

double wrap_delta(double delta, double side) {
  delta = std::fmod(delta, side);
  if (delta >= 0.5 * side) delta -= side;
  if (delta < -0.5 * side) delta += side;
  return delta;
}

double geodesic_distance(const Manifold& m, const Point& x, const Point& y) {
  if (m.kind == ManifoldKind::FlatTorus) {
    const double dx = wrap_delta(x[0] - y[0], m.side);
    const double dy = wrap_delta(x[1] - y[1], m.side);
    return std::hypot(dx, dy);
  }
  // atan2 form is accurate for nearby and antipodal points alike.
  const double cx = x[1] * y[2] - x[2] * y[1];
  const double cy = x[2] * y[0] - x[0] * y[2];
  const double cz = x[0] * y[1] - x[1] * y[0];
  const double dot = x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
  return std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), dot);
}

double kernel_distance(const Manifold& m, const Point& x, const Point& y) {
  if (m.kind == ManifoldKind::FlatTorus) return geodesic_distance(m, x, y);
  const double dx = x[0] - y[0], dy = x[1] - y[1], dz = x[2] - y[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

bool on_manifold(const Manifold& m, const Point& x) {
  if (m.kind == ManifoldKind::FlatTorus)
    return x[0] >= 0 && x[0] < m.side && x[1] >= 0 && x[1] < m.side;
  const double r = std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
  return std::abs(r - 1.0) <= 1e-12;
}

double integrate_density(const Manifold& m, const Density& density) {
  if (m.kind == ManifoldKind::FlatTorus) {
    const std::size_t N = 256;
    const double h = m.side / N;
    double sum = 0;
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j) sum += density.rho(m, {(i + 0.5) * h, (j + 0.5) * h, 0.0});
    return sum * h * h;
  }
  const auto rule = gauss_legendre(64);
  const std::size_t nphi = 128;
  double sum = 0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double z = rule.nodes[i];
    const double s = std::sqrt(1 - z * z);
    for (std::size_t j = 0; j < nphi; ++j) {
      const double phi = 2 * kPi * j / nphi;
      sum += rule.weights[i] * density.rho(m, {s * std::cos(phi), s * std::sin(phi), z});
    }
  }
  return sum * 2 * kPi / nphi;
}

// ---------------------------------------------------------------------------
// CSV

void write_cloud_csv(const PointCloud& cloud, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  const int dim = cloud.manifold.embedding_dim();
  out << (dim == 2 ? "x0,x1\n" : "x0,x1,x2\n");
  for (const auto& p : cloud.points) {
    out << format_double(p[0]) << ',' << format_double(p[1]);
    if (dim == 3) out << ',' << format_double(p[2]);
    out << '\n';
  }
  nlohmann::ordered_json meta;
  meta["manifold"] = cloud.manifold.name();
  meta["side"] = cloud.manifold.side;
  meta["density"] = cloud.density.name();
  meta["density_axis"] = cloud.density.axis;
  meta["density_amplitude"] = cloud.density.amplitude;
  meta["seed"] = cloud.seed;
  meta["n"] = cloud.points.size();
  std::ofstream side(path + ".meta.json");
  if (!side) throw Error(ErrorCode::Io, "cannot write " + path + ".meta.json");
  side << meta.dump(2) << '\n';
}

PointCloud read_cloud_csv(const std::string& path) {
  std::ifstream meta_in(path + ".meta.json");
  if (!meta_in) throw Error(ErrorCode::Io, "missing metadata sidecar " + path + ".meta.json");
  nlohmann::json meta;
  try {
    meta_in >> meta;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::Io, "malformed metadata sidecar: " + std::string(e.what()));
  }
  const Manifold m = meta.at("manifold") == "torus" ? Manifold::torus(meta.at("side").get<double>()) : Manifold::sphere();
  const Density d = meta.at("density") == "uniform"
                        ? Density::uniform(m)
                        : Density::cosine(m, meta.at("density_axis").get<int>(), meta.at("density_amplitude").get<double>());
  PointCloud cloud{m, d, {}, meta.at("seed").get<std::uint64_t>()};
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Point p{0, 0, 0};
    std::stringstream ss(line);
    std::string cell;
    for (int i = 0; i < m.embedding_dim() && std::getline(ss, cell, ','); ++i) p[i] = std::stod(cell);
    cloud.points.push_back(p);
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// Continuum eigensystem

double heat_truncation_eigenvalue(double t) { return kTruncationLog / t; }

ContinuumEigensystem::ContinuumEigensystem(const Manifold& m, const Density& density, std::size_t count)
    : manifold_(m), density_(density) {
  if (!density.is_uniform())
    throw Error(ErrorCode::Unsupported, "closed-form eigensystem requires uniform density; use the grid oracle");
  if (count < 1) throw Error(ErrorCode::InvalidArgument, "eigensystem count must be >= 1");

  struct Entry {
    double lambda;
    long key1, key2;
    Mode mode;
  };
  std::vector<Entry> all;
  if (m.kind == ManifoldKind::FlatTorus) {
    const double k2 = torus_wave(m) * torus_wave(m);
    long R = static_cast<long>(std::sqrt(count / kPi)) + 3;
    for (;;) {
      all.clear();
      for (long a = -R; a <= R; ++a)
        for (long b = -R; b <= R; ++b) {
          const long r2 = a * a + b * b;
          if (r2 > R * R) continue;
          if (a < 0 || (a == 0 && b < 0)) continue;
          all.push_back({k2 * r2, r2, a * 100000 + b, {int(a), int(b), 0}});
          if (r2 > 0) all.push_back({k2 * r2, r2, a * 100000 + b, {int(a), int(b), 1}});
        }
      if (all.size() > count) break;
      R *= 2;
    }
    std::sort(all.begin(), all.end(), [](const Entry& x, const Entry& y) {
      if (x.key1 != y.key1) return x.key1 < y.key1;
      if (x.key2 != y.key2) return x.key2 < y.key2;
      return x.mode.parity < y.mode.parity;
    });
    // Entries with r2 == R^2 border the enumeration disk but are complete by construction.
  } else {
    int L = 0;
    while (static_cast<std::size_t>((L + 1) * (L + 1)) <= count) ++L;
    for (int l = 0; l <= L; ++l)
      for (int mm = -l; mm <= l; ++mm) all.push_back({double(l) * (l + 1), l, mm, {l, mm, 0}});
  }
  if (all.size() < count) throw Error(ErrorCode::InvalidArgument, "eigensystem enumeration too small");
  for (std::size_t i = 0; i < count; ++i) {
    eigenvalues_.push_back(all[i].lambda);
    modes_.push_back(all[i].mode);
    max_degree_ = std::max({max_degree_, std::abs(all[i].mode.a), std::abs(all[i].mode.b)});
  }
  const bool cut = count < all.size() && all[count].lambda == eigenvalues_.back();
  if (!cut) {
    complete_through_ = eigenvalues_.back();
  } else {
    complete_through_ = 0.0;
    for (double v : eigenvalues_)
      if (v < eigenvalues_.back()) complete_through_ = v;
  }
}

void ContinuumEigensystem::evaluate_all(const Point& x, std::span<double> out) const {
  const double vol = manifold_.volume();
  if (manifold_.kind == ManifoldKind::FlatTorus) {
    const double k = torus_wave(manifold_);
    const double base = vol / manifold_.side;
    const double s2 = std::sqrt(2.0) * base;
    for (std::size_t l = 0; l < modes_.size(); ++l) {
      const auto& md = modes_[l];
      if (md.a == 0 && md.b == 0) {
        out[l] = base;
        continue;
      }
      const double arg = k * (md.a * x[0] + md.b * x[1]);
      out[l] = s2 * (md.parity == 0 ? std::cos(arg) : std::sin(arg));
    }
    return;
  }
  const double z = std::clamp(x[2], -1.0, 1.0);
  const double phi = std::atan2(x[1], x[0]);
  const auto table = normalized_legendre_table(max_degree_, z);
  for (std::size_t l = 0; l < modes_.size(); ++l) {
    const int deg = modes_[l].a;
    const int ord = modes_[l].b;
    const double p = table[legendre_index(deg, std::abs(ord))];
    double y;
    if (ord == 0)
      y = p;
    else if (ord > 0)
      y = std::sqrt(2.0) * p * std::cos(ord * phi);
    else
      y = std::sqrt(2.0) * p * std::sin(-ord * phi);
    out[l] = vol * y;
  }
}

double ContinuumEigensystem::evaluate(std::size_t l, const Point& x) const {
  Vector all(size());
  evaluate_all(x, all);
  return all.at(l);
}

std::vector<std::pair<std::size_t, std::size_t>> ContinuumEigensystem::groups() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t begin = 0;
  for (std::size_t i = 1; i <= eigenvalues_.size(); ++i) {
    if (i == eigenvalues_.size() || eigenvalues_[i] != eigenvalues_[begin]) {
      out.emplace_back(begin, i);
      begin = i;
    }
  }
  return out;
}

double ContinuumEigensystem::heat_kernel(double t, const Point& x, const Point& y) const {
  if (!(t > 0)) throw Error(ErrorCode::InvalidArgument, "heat kernel requires t > 0");
  const double vol = manifold_.volume();
  const double cut = kTruncationLog + 4.6;  // e^{-t lambda} <= 1e-16 per term
  if (manifold_.kind == ManifoldKind::FlatTorus) {
    const double k = torus_wave(manifold_);
    auto theta = [&](double delta) {
      double s = 1.0;
      for (int mm = 1;; ++mm) {
        const double decay = t * k * k * mm * mm;
        if (decay > cut) break;
        s += 2.0 * std::exp(-decay) * std::cos(k * mm * delta);
      }
      return s / manifold_.side;
    };
    return vol * vol * theta(x[0] - y[0]) * theta(x[1] - y[1]);
  }
  const double c = std::clamp(x[0] * y[0] + x[1] * y[1] + x[2] * y[2], -1.0, 1.0);
  double sum = 0.0;
  double p_prev = 0.0, p = 1.0;  // P_{l-1}, P_l
  for (int l = 0;; ++l) {
    const double decay = t * l * (l + 1.0);
    if (decay > cut) break;
    sum += std::exp(-decay) * (2.0 * l + 1.0) / (4.0 * kPi) * p;
    const double next = ((2.0 * l + 1.0) * c * p - l * p_prev) / (l + 1.0);
    p_prev = p;
    p = next;
  }
  return vol * vol * sum;
}

Vector ContinuumEigensystem::project(const std::function<double(const Point&)>& f, std::size_t resolution) const {
  const double vol = manifold_.volume();
  Vector coeffs(size(), 0.0);
  if (manifold_.kind == ManifoldKind::FlatTorus) {
    const std::size_t N = resolution ? resolution : next_pow2(std::max<std::size_t>(64, 8 * (max_degree_ + 1)));
    if (N <= 2 * static_cast<std::size_t>(max_degree_))
      throw Error(ErrorCode::InvalidArgument, "projection grid too coarse for the eigensystem band limit");
    const double h = manifold_.side / N;
    const std::size_t half = N / 2 + 1;
    double* in = fftw_alloc_real(N * N);
    fftw_complex* out = fftw_alloc_complex(N * half);
    fftw_plan plan = fftw_plan_dft_r2c_2d(int(N), int(N), in, out, FFTW_ESTIMATE);
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j) in[i * N + j] = f({(i + 0.5) * h, (j + 0.5) * h, 0.0});
    fftw_execute(plan);
    auto fourier = [&](int a, int b) {
      // Mean of f * e^{-i k (a x + b y)} over the cell-centred grid.
      int ia = ((a % int(N)) + int(N)) % int(N);
      int ib = ((b % int(N)) + int(N)) % int(N);
      double re, im;
      if (ib < int(half)) {
        re = out[ia * half + ib][0];
        im = out[ia * half + ib][1];
      } else {
        const int ja = (int(N) - ia) % int(N);
        const int jb = (int(N) - ib) % int(N);
        re = out[ja * half + jb][0];
        im = -out[ja * half + jb][1];
      }
      const double shift = -kPi * (a + b) / double(N);
      const double cr = std::cos(shift), ci = std::sin(shift);
      return std::pair<double, double>{(re * cr - im * ci) / double(N * N), (re * ci + im * cr) / double(N * N)};
    };
    const double area = manifold_.side * manifold_.side;
    for (std::size_t l = 0; l < size(); ++l) {
      const auto& md = modes_[l];
      const auto [re, im] = fourier(md.a, md.b);
      if (md.a == 0 && md.b == 0) {
        coeffs[l] = (1.0 / vol) * (1.0 / manifold_.side) * area * re;
      } else {
        const double norm = std::sqrt(2.0) / manifold_.side;
        coeffs[l] = (1.0 / vol) * norm * area * (md.parity == 0 ? re : -im);
      }
    }
    fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
    return coeffs;
  }
  const std::size_t ntheta = resolution ? resolution : 2 * (max_degree_ + 1);
  const std::size_t nphi = 2 * ntheta;
  const auto rule = gauss_legendre(ntheta);
  const int L = max_degree_;
  std::vector<double> ring_cos(L + 1), ring_sin(L + 1), vals(nphi);
  for (std::size_t i = 0; i < ntheta; ++i) {
    const double z = rule.nodes[i];
    const double s = std::sqrt(std::max(0.0, 1 - z * z));
    for (std::size_t j = 0; j < nphi; ++j) {
      const double phi = 2 * kPi * j / nphi;
      vals[j] = f({s * std::cos(phi), s * std::sin(phi), z});
    }
    for (int mm = 0; mm <= L; ++mm) {
      double a = 0, b = 0;
      for (std::size_t j = 0; j < nphi; ++j) {
        const double phi = 2 * kPi * j / nphi;
        a += vals[j] * std::cos(mm * phi);
        b += vals[j] * std::sin(mm * phi);
      }
      ring_cos[mm] = a * 2 * kPi / nphi;
      ring_sin[mm] = b * 2 * kPi / nphi;
    }
    const auto table = normalized_legendre_table(L, z);
    for (std::size_t l = 0; l < size(); ++l) {
      const int deg = modes_[l].a;
      const int ord = modes_[l].b;
      const double p = table[legendre_index(deg, std::abs(ord))];
      double contrib;
      if (ord == 0)
        contrib = p * ring_cos[0];
      else if (ord > 0)
        contrib = std::sqrt(2.0) * p * ring_cos[ord];
      else
        contrib = std::sqrt(2.0) * p * ring_sin[-ord];
      coeffs[l] += rule.weights[i] * contrib / vol;
    }
  }
  return coeffs;
}

ContinuumEigensystem continuum_eigensystem(const Manifold& m, const Density& density, std::size_t count) {
  return ContinuumEigensystem(m, density, count);
}

Vector continuum_heat_apply_coefficients(const ContinuumEigensystem& eig, double t, std::span<const double> coeffs,
                                         std::span<const Point> query) {
  if (!(t > 0)) throw Error(ErrorCode::InvalidArgument, "continuum heat requires t > 0");
  const double needed = heat_truncation_eigenvalue(t);
  if (eig.complete_through() < needed)
    throw Error(ErrorCode::InvalidArgument,
                "truncation level exceeds the eigensystem: need eigenvalues through " + format_double(needed) +
                    ", have " + format_double(eig.complete_through()));
  std::size_t used = 0;
  while (used < eig.size() && eig.eigenvalue(used) <= needed) ++used;
  Vector weights(used);
  for (std::size_t l = 0; l < used; ++l) weights[l] = std::exp(-t * eig.eigenvalue(l)) * coeffs[l];
  Vector out(query.size());
  Vector vals(eig.size());
  for (std::size_t q = 0; q < query.size(); ++q) {
    eig.evaluate_all(query[q], vals);
    double s = 0;
    for (std::size_t l = 0; l < used; ++l) s += weights[l] * vals[l];
    out[q] = s;
  }
  return out;
}

Vector continuum_heat_apply(const ContinuumEigensystem& eig, double t, const std::function<double(const Point&)>& f,
                            std::span<const Point> query, std::size_t resolution) {
  const Vector coeffs = eig.project(f, resolution);
  return continuum_heat_apply_coefficients(eig, t, coeffs, query);
}

}  // namespace mbolab
