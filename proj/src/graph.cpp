#include "mbolab/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>
#include <unordered_map>

#include <json.hpp>

namespace mbolab {

double KernelProfile::operator()(double r) const {
  if (r < 0 || r > 1) return 0.0;
  switch (form) {
    case KernelForm::Indicator:
      return 1.0;
    case KernelForm::Triangular:
      return 1.0 - r;
    case KernelForm::Quadratic:
      return 1.0 - r * r;
  }
  return 0.0;
}

std::string KernelProfile::name() const {
  switch (form) {
    case KernelForm::Indicator:
      return "indicator";
    case KernelForm::Triangular:
      return "triangular";
    case KernelForm::Quadratic:
      return "quadratic";
  }
  return "?";
}

KernelProfile KernelProfile::parse(const std::string& name) {
  if (name == "indicator") return {KernelForm::Indicator};
  if (name == "triangular") return {KernelForm::Triangular};
  if (name == "quadratic") return {KernelForm::Quadratic};
  throw Error(ErrorCode::Config, "unknown kernel '" + name + "' (indicator, triangular, quadratic)");
}

namespace {

// int_0^1 eta(r) r^p dr
double radial_moment(KernelForm form, int p) {
  const double q = p;
  switch (form) {
    case KernelForm::Indicator:
      return 1.0 / (q + 1);
    case KernelForm::Triangular:
      return 1.0 / ((q + 1) * (q + 2));
    case KernelForm::Quadratic:
      return 2.0 / ((q + 1) * (q + 3));
  }
  return 0.0;
}

// surface area of the unit sphere S^{k-1}
double sphere_area(int k) {
  switch (k) {
    case 1:
      return 2.0;
    case 2:
      return 2.0 * kPi;
    case 3:
      return 4.0 * kPi;
  }
  return 0.0;
}

}  // namespace

KernelConstants kernel_constants(KernelProfile kernel, int k) {
  if (k < 1 || k > 3) throw Error(ErrorCode::InvalidArgument, "kernel constants need k in {1, 2, 3}");
  KernelConstants c;
  const double s = sphere_area(k);
  c.c1 = s * radial_moment(kernel.form, k - 1);
  // y_1^2 averages to |y|^2 / k over directions
  c.c2 = s / k * radial_moment(kernel.form, k + 1);
  c.kappa = c.c2 / (2.0 * c.c1);
  return c;
}

WeightedGraph::WeightedGraph(PointCloud cloud, double epsilon, KernelProfile kernel, std::vector<std::size_t> row_ptr,
                             std::vector<std::uint32_t> cols, Vector weights)
    : cloud_(std::move(cloud)),
      epsilon_(epsilon),
      kernel_(kernel),
      row_ptr_(std::move(row_ptr)),
      cols_(std::move(cols)),
      weights_(std::move(weights)) {
  const std::size_t n = cloud_.size();
  if (row_ptr_.size() != n + 1) throw Error(ErrorCode::InvalidArgument, "row pointer size mismatch");
  degrees_.assign(n, 0.0);
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t e = row_ptr_[i]; e < row_ptr_[i + 1]; ++e) {
      const std::size_t j = cols_[e];
      degrees_[i] += weights_[e];
      degrees_[j] += weights_[e];
      const std::size_t a = find(i), b = find(j);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  }
  const double inv_n = n ? 1.0 / n : 0.0;
  for (auto& d : degrees_) d *= inv_n;
  components_ = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (find(i) == i) ++components_;

  Fnv1a h;
  h.update_value(static_cast<int>(cloud_.manifold.kind));
  h.update_value(cloud_.manifold.side);
  h.update_value(static_cast<std::uint64_t>(n));
  for (const auto& p : cloud_.points) h.update(p.data(), sizeof(double) * 3);
  h.update_value(epsilon_);
  h.update_value(static_cast<int>(kernel_.form));
  hash_ = h.digest();
}

std::size_t WeightedGraph::first_isolated() const {
  for (std::size_t i = 0; i < degrees_.size(); ++i)
    if (!(degrees_[i] > 0)) return i;
  return degrees_.size();
}

double WeightedGraph::weight(std::size_t i, std::size_t j) const {
  if (i == j) return 0.0;
  if (i > j) std::swap(i, j);
  const auto begin = cols_.begin() + row_ptr_[i], end = cols_.begin() + row_ptr_[i + 1];
  const auto it = std::lower_bound(begin, end, static_cast<std::uint32_t>(j));
  if (it == end || *it != j) return 0.0;
  return weights_[it - cols_.begin()];
}

void WeightedGraph::multiply(std::span<const double> x, std::span<double> y) const {
  const std::size_t n = size();
  std::fill(y.begin(), y.end(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    const double xi = x[i];
    for (std::size_t e = row_ptr_[i]; e < row_ptr_[i + 1]; ++e) {
      const std::size_t j = cols_[e];
      acc += weights_[e] * x[j];
      y[j] += weights_[e] * xi;
    }
    y[i] += acc;
  }
}

namespace {

struct RowLists {
  std::vector<std::vector<std::uint32_t>> cols;
  std::vector<Vector> weights;
};

WeightedGraph assemble(const PointCloud& cloud, double epsilon, KernelProfile kernel, RowLists rows) {
  const std::size_t n = cloud.size();
  std::vector<std::size_t> row_ptr(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) row_ptr[i + 1] = row_ptr[i] + rows.cols[i].size();
  std::vector<std::uint32_t> cols(row_ptr[n]);
  Vector weights(row_ptr[n]);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> order(rows.cols[i].size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return rows.cols[i][a] < rows.cols[i][b]; });
    for (std::size_t k = 0; k < order.size(); ++k) {
      cols[row_ptr[i] + k] = rows.cols[i][order[k]];
      weights[row_ptr[i] + k] = rows.weights[i][order[k]];
    }
  }
  return WeightedGraph(cloud, epsilon, kernel, std::move(row_ptr), std::move(cols), std::move(weights));
}

void check_epsilon(const PointCloud& cloud, double epsilon) {
  if (!(epsilon > 0) || !std::isfinite(epsilon)) throw Error(ErrorCode::InvalidArgument, "epsilon must be positive");
  if (cloud.manifold.kind == ManifoldKind::FlatTorus && !(epsilon < 0.5 * cloud.manifold.side))
    throw Error(ErrorCode::InvalidArgument, "epsilon must be below L/2 on the torus");
  if (cloud.size() > std::numeric_limits<std::uint32_t>::max())
    throw Error(ErrorCode::InvalidArgument, "too many points");
}

// Runs fn(i) for i in [0, n) on a few threads; every row is written by exactly one thread.
template <typename Fn>
void parallel_rows(std::size_t n, Fn fn) {
  const std::size_t threads = std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, 16);
  if (threads == 1 || n < 4096) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t block = (n + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t * block; i < std::min(n, (t + 1) * block); ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

WeightedGraph build_graph_bruteforce(const PointCloud& cloud, double epsilon, KernelProfile kernel) {
  check_epsilon(cloud, epsilon);
  const std::size_t n = cloud.size();
  const double scale = std::pow(epsilon, -cloud.manifold.intrinsic_dim());
  RowLists rows{std::vector<std::vector<std::uint32_t>>(n), std::vector<Vector>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double w = scale * kernel(kernel_distance(cloud.manifold, cloud.points[i], cloud.points[j]) / epsilon);
      if (w > 0) {
        rows.cols[i].push_back(static_cast<std::uint32_t>(j));
        rows.weights[i].push_back(w);
      }
    }
  }
  return assemble(cloud, epsilon, kernel, std::move(rows));
}

WeightedGraph build_graph(const PointCloud& cloud, double epsilon, KernelProfile kernel) {
  check_epsilon(cloud, epsilon);
  const std::size_t n = cloud.size();
  const Manifold& m = cloud.manifold;
  const bool torus = m.kind == ManifoldKind::FlatTorus;
  const double extent = torus ? m.side : 2.0;
  // Cells of side >= epsilon; cap the count so that sparse clouds do not allocate huge grids.
  const double cap = torus ? std::sqrt(4.0 * n + 16.0) : std::cbrt(8.0 * n + 64.0);
  const long nb = static_cast<long>(std::min(std::floor(extent / epsilon), std::max(3.0, cap)));
  if (nb < 3) return build_graph_bruteforce(cloud, epsilon, kernel);
  const double cell = extent / nb;
  const int dim = torus ? 2 : 3;

  auto coord = [&](double v) {
    long c = static_cast<long>(std::floor((torus ? v : v + 1.0) / cell));
    return std::clamp(c, 0L, nb - 1);
  };
  auto key = [&](long a, long b, long c) { return (a * nb + b) * nb + c; };

  std::unordered_map<long, std::vector<std::uint32_t>> buckets;
  std::vector<std::array<long, 3>> cell_of(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = cloud.points[i];
    cell_of[i] = {coord(p[0]), coord(p[1]), dim == 3 ? coord(p[2]) : 0};
    buckets[key(cell_of[i][0], cell_of[i][1], cell_of[i][2])].push_back(static_cast<std::uint32_t>(i));
  }

  const double scale = std::pow(epsilon, -m.intrinsic_dim());
  RowLists rows{std::vector<std::vector<std::uint32_t>>(n), std::vector<Vector>(n)};
  parallel_rows(n, [&](std::size_t i) {
    const auto& c = cell_of[i];
    const int zr = dim == 3 ? 1 : 0;
    for (long da = -1; da <= 1; ++da) {
      for (long db = -1; db <= 1; ++db) {
        for (long dc = -zr; dc <= zr; ++dc) {
          long a = c[0] + da, b = c[1] + db, cc = c[2] + dc;
          if (torus) {
            a = (a + nb) % nb;
            b = (b + nb) % nb;
          } else if (a < 0 || b < 0 || cc < 0 || a >= nb || b >= nb || cc >= nb) {
            continue;
          }
          const auto it = buckets.find(key(a, b, cc));
          if (it == buckets.end()) continue;
          for (const std::uint32_t j : it->second) {
            if (j <= i) continue;
            const double w = scale * kernel(kernel_distance(m, cloud.points[i], cloud.points[j]) / epsilon);
            if (w > 0) {
              rows.cols[i].push_back(j);
              rows.weights[i].push_back(w);
            }
          }
        }
      }
    }
  });
  return assemble(cloud, epsilon, kernel, std::move(rows));
}

double inner_product(const WeightedGraph& g, std::span<const double> u, std::span<const double> v) {
  const std::size_t n = g.size();
  if (u.size() != n || v.size() != n) throw Error(ErrorCode::InvalidArgument, "node function size mismatch");
  const auto& d = g.degrees();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += d[i] * u[i] * v[i];
  return n ? s / n : 0.0;
}

Vector laplacian_apply(const WeightedGraph& g, std::span<const double> u) {
  const std::size_t n = g.size();
  if (u.size() != n) throw Error(ErrorCode::InvalidArgument, "node function size mismatch");
  const std::size_t bad = g.first_isolated();
  if (bad < n) throw Error(ErrorCode::Numerical, "node " + std::to_string(bad) + " is isolated (zero degree)");
  Vector wu(n);
  g.multiply(u, wu);
  const double inv_eps2 = 1.0 / (g.epsilon() * g.epsilon());
  const auto& d = g.degrees();
  Vector out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = inv_eps2 * (u[i] - wu[i] / (n * d[i]));
  return out;
}

void write_graph_csv(const WeightedGraph& g, const std::string& edges_path, const std::string& degrees_path,
                     const std::string& meta_path) {
  {
    std::ofstream out(edges_path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + edges_path);
    out << "i,j,w\n";
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::size_t e = g.row_ptr()[i]; e < g.row_ptr()[i + 1]; ++e)
        out << i << ',' << g.cols()[e] << ',' << format_double(g.weights()[e]) << '\n';
  }
  {
    std::ofstream out(degrees_path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + degrees_path);
    out << "i,d\n";
    for (std::size_t i = 0; i < g.size(); ++i) out << i << ',' << format_double(g.degrees()[i]) << '\n';
  }
  nlohmann::ordered_json meta;
  meta["epsilon"] = g.epsilon();
  meta["kernel"] = g.kernel().name();
  meta["n"] = g.size();
  meta["seed"] = g.cloud().seed;
  meta["manifold"] = g.cloud().manifold.name();
  meta["edges"] = g.edge_count();
  meta["connected"] = g.connected();
  meta["components"] = g.component_count();
  meta["content_hash"] = hex64(g.content_hash());
  std::ofstream out(meta_path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + meta_path);
  out << meta.dump(2) << '\n';
}

}  // namespace mbolab
