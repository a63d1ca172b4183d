#include "mbolab/mbolab.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <iomanip>
#include <mutex>
#include <sstream>

#include "mbolab/harness.hpp"

using namespace mbolab;

struct mbolab_cloud {
  PointCloud cloud;
};

struct mbolab_graph {
  std::shared_ptr<const WeightedGraph> graph;
  mutable std::mutex mutex;
  mutable std::optional<HeatOperator> heat;
};

struct mbolab_spectrum {
  SpectralDecomposition dec;
};

namespace {

thread_local std::string g_last_error;

mbolab_status fail(mbolab_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <typename F>
mbolab_status guard(F&& f) {
  try {
    g_last_error.clear();
    return f();
  } catch (const Error& e) {
    return fail(static_cast<mbolab_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(MBOLAB_ERR_NUMERICAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(MBOLAB_ERR_INTERNAL, e.what());
  }
}

#define MBOLAB_REQUIRE(cond, msg) \
  if (!(cond)) return fail(MBOLAB_ERR_INVALID_ARGUMENT, msg)

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<std::string> to_strings(const char* const* items, size_t count) {
  std::vector<std::string> out;
  for (size_t i = 0; i < count; ++i) {
    if (!items[i]) throw Error(ErrorCode::InvalidArgument, "null string in list");
    out.emplace_back(items[i]);
  }
  return out;
}

mbolab_status copy_out(const std::vector<double>& v, double* out, size_t capacity) {
  MBOLAB_REQUIRE(out, "output buffer is null");
  MBOLAB_REQUIRE(capacity >= v.size(), "output buffer too small: need " + std::to_string(v.size()));
  std::copy(v.begin(), v.end(), out);
  return MBOLAB_OK;
}

}  // namespace

extern "C" {

const char* mbolab_version(void) { return kVersion; }
const char* mbolab_last_error(void) { return g_last_error.c_str(); }

int mbolab_exit_code(mbolab_status status) {
  if (status == MBOLAB_OK) return 0;
  if (status == MBOLAB_ERR_INTERNAL) return 3;
  return exit_code_for(static_cast<ErrorCode>(status));
}

const char* mbolab_status_name(mbolab_status status) {
  switch (status) {
    case MBOLAB_OK: return "ok";
    case MBOLAB_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case MBOLAB_ERR_CONFIG: return "config";
    case MBOLAB_ERR_NUMERICAL: return "numerical";
    case MBOLAB_ERR_INFEASIBLE: return "infeasible";
    case MBOLAB_ERR_IO: return "io";
    case MBOLAB_ERR_UNSUPPORTED: return "unsupported";
    case MBOLAB_ERR_CACHE: return "cache";
    case MBOLAB_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

void mbolab_string_free(char* s) { std::free(s); }

void mbolab_domain_default(mbolab_domain* d) {
  if (!d) return;
  d->manifold = "torus";
  d->side = 1.0;
  d->density = "uniform";
  d->amplitude = 0.0;
  d->axis = 0;
}

mbolab_status mbolab_cloud_sample(const mbolab_domain* domain, size_t n, uint64_t seed, mbolab_cloud** out) {
  return guard([&] {
    MBOLAB_REQUIRE(domain && out, "null argument");
    *out = nullptr;
    const std::string mname = domain->manifold ? domain->manifold : "torus";
    const std::string dname = domain->density ? domain->density : "uniform";
    Manifold m;
    if (mname == "torus") {
      MBOLAB_REQUIRE(domain->side > 0, "torus side must be positive");
      m = Manifold::torus(domain->side);
    } else if (mname == "sphere") {
      m = Manifold::sphere();
    } else {
      return fail(MBOLAB_ERR_CONFIG, "unknown manifold '" + mname + "'");
    }
    Density d;
    if (dname == "uniform") d = Density::uniform(m);
    else if (dname == "cosine") d = Density::cosine(m, domain->axis, domain->amplitude);
    else return fail(MBOLAB_ERR_CONFIG, "unknown density '" + dname + "'");
    auto c = std::make_unique<mbolab_cloud>();
    c->cloud = sample_points(m, d, n, seed);
    *out = c.release();
    return MBOLAB_OK;
  });
}

mbolab_status mbolab_cloud_load(const char* path, mbolab_cloud** out) {
  return guard([&] {
    MBOLAB_REQUIRE(path && out, "null argument");
    auto c = std::make_unique<mbolab_cloud>();
    c->cloud = read_cloud_csv(path);
    *out = c.release();
    return MBOLAB_OK;
  });
}

mbolab_status mbolab_cloud_save(const mbolab_cloud* cloud, const char* path) {
  return guard([&] {
    MBOLAB_REQUIRE(cloud && path, "null argument");
    write_cloud_csv(cloud->cloud, path);
    return MBOLAB_OK;
  });
}

size_t mbolab_cloud_size(const mbolab_cloud* cloud) { return cloud ? cloud->cloud.size() : 0; }

mbolab_status mbolab_cloud_point(const mbolab_cloud* cloud, size_t i, double out[3]) {
  return guard([&] {
    MBOLAB_REQUIRE(cloud && out, "null argument");
    MBOLAB_REQUIRE(i < cloud->cloud.size(), "point index out of range");
    const Point& p = cloud->cloud.points[i];
    out[0] = p[0];
    out[1] = p[1];
    out[2] = cloud->cloud.manifold.kind == ManifoldKind::FlatTorus ? 0.0 : p[2];
    return MBOLAB_OK;
  });
}

void mbolab_cloud_free(mbolab_cloud* cloud) { delete cloud; }

mbolab_status mbolab_kernel_constants(const char* kernel, int k, double* c1, double* c2, double* kappa) {
  return guard([&] {
    MBOLAB_REQUIRE(kernel, "null kernel name");
    const KernelConstants c = kernel_constants(KernelProfile::parse(kernel), k);
    if (c1) *c1 = c.c1;
    if (c2) *c2 = c.c2;
    if (kappa) *kappa = c.kappa;
    return MBOLAB_OK;
  });
}

mbolab_status mbolab_graph_build(const mbolab_cloud* cloud, double eps, const char* kernel, mbolab_graph** out) {
  return guard([&] {
    MBOLAB_REQUIRE(cloud && out, "null argument");
    *out = nullptr;
    auto g = std::make_unique<mbolab_graph>();
    g->graph = std::make_shared<const WeightedGraph>(
        build_graph(cloud->cloud, eps, KernelProfile::parse(kernel ? kernel : "indicator")));
    *out = g.release();
    return MBOLAB_OK;
  });
}

size_t mbolab_graph_size(const mbolab_graph* g) { return g ? g->graph->size() : 0; }
size_t mbolab_graph_edges(const mbolab_graph* g) { return g ? g->graph->edge_count() : 0; }
size_t mbolab_graph_components(const mbolab_graph* g) { return g ? g->graph->component_count() : 0; }
uint64_t mbolab_graph_hash(const mbolab_graph* g) { return g ? g->graph->content_hash() : 0; }

mbolab_status mbolab_graph_degrees(const mbolab_graph* g, double* out, size_t capacity) {
  return guard([&] {
    MBOLAB_REQUIRE(g, "null graph");
    return copy_out(g->graph->degrees(), out, capacity);
  });
}

mbolab_status mbolab_graph_save(const mbolab_graph* g, const char* edges_path, const char* degrees_path,
                                const char* meta_path) {
  return guard([&] {
    MBOLAB_REQUIRE(g && edges_path && degrees_path && meta_path, "null argument");
    write_graph_csv(*g->graph, edges_path, degrees_path, meta_path);
    return MBOLAB_OK;
  });
}

mbolab_status mbolab_graph_heat(const mbolab_graph* g, double t, const double* u, double* y) {
  return guard([&] {
    MBOLAB_REQUIRE(g && u && y, "null argument");
    const std::size_t n = g->graph->size();
    const HeatOperator* op;
    {
      std::lock_guard lock(g->mutex);
      if (!g->heat) g->heat = HeatOperator::full(g->graph);
      op = &*g->heat;
    }
    const Vector r = op->apply(t, std::span<const double>(u, n));
    std::copy(r.begin(), r.end(), y);
    return MBOLAB_OK;
  });
}

void mbolab_graph_free(mbolab_graph* g) { delete g; }

mbolab_status mbolab_spectrum_compute(const mbolab_graph* g, size_t K, double tol, mbolab_spectrum** out) {
  return guard([&] {
    MBOLAB_REQUIRE(g && out, "null argument");
    auto s = std::make_unique<mbolab_spectrum>();
    s->dec = partial_eigendecomposition(*g->graph, K, tol);
    *out = s.release();
    return MBOLAB_OK;
  });
}

mbolab_status mbolab_spectrum_cached(const mbolab_graph* g, size_t K, double tol, const char* cache_dir, int* hit,
                                     mbolab_spectrum** out) {
  return guard([&] {
    MBOLAB_REQUIRE(g && cache_dir && out, "null argument");
    CacheStats stats;
    auto s = std::make_unique<mbolab_spectrum>();
    s->dec = cached_spectrum(*g->graph, K, tol, cache_dir, &stats);
    if (hit) *hit = stats.hits > 0;
    *out = s.release();
    return MBOLAB_OK;
  });
}

mbolab_status mbolab_spectrum_save(const mbolab_spectrum* s, const char* path) {
  return guard([&] {
    MBOLAB_REQUIRE(s && path, "null argument");
    spectrum_cache_save(s->dec, path);
    return MBOLAB_OK;
  });
}

mbolab_status mbolab_spectrum_load(const char* path, const mbolab_graph* g, mbolab_spectrum** out) {
  return guard([&] {
    MBOLAB_REQUIRE(path && out, "null argument");
    auto s = std::make_unique<mbolab_spectrum>();
    s->dec = g ? spectrum_cache_load(path, *g->graph) : spectrum_cache_load(path);
    *out = s.release();
    return MBOLAB_OK;
  });
}

size_t mbolab_spectrum_count(const mbolab_spectrum* s) { return s ? s->dec.K : 0; }
size_t mbolab_spectrum_nodes(const mbolab_spectrum* s) { return s ? s->dec.n : 0; }

mbolab_status mbolab_spectrum_eigenvalues(const mbolab_spectrum* s, double* out, size_t capacity) {
  return guard([&] {
    MBOLAB_REQUIRE(s, "null spectrum");
    return copy_out(s->dec.eigenvalues, out, capacity);
  });
}

mbolab_status mbolab_spectrum_residuals(const mbolab_spectrum* s, double* out, size_t capacity) {
  return guard([&] {
    MBOLAB_REQUIRE(s, "null spectrum");
    return copy_out(s->dec.residuals, out, capacity);
  });
}

mbolab_status mbolab_spectrum_vector(const mbolab_spectrum* s, size_t l, double* out, size_t capacity) {
  return guard([&] {
    MBOLAB_REQUIRE(s, "null spectrum");
    MBOLAB_REQUIRE(l < s->dec.K, "eigenvector index out of range");
    std::vector<double> v(s->dec.n);
    for (std::size_t i = 0; i < s->dec.n; ++i) v[i] = s->dec.vec(i, l);
    return copy_out(v, out, capacity);
  });
}

void mbolab_spectrum_free(mbolab_spectrum* s) { delete s; }

mbolab_status mbolab_run_config(const char* config_path, const char* const* overrides, size_t count) {
  return guard([&] {
    MBOLAB_REQUIRE(count == 0 || overrides, "null override list");
    std::string msg;
    const int code = run_config_file(config_path ? config_path : "", to_strings(overrides, count), &msg);
    return code ? fail(static_cast<mbolab_status>(code), msg) : MBOLAB_OK;
  });
}

mbolab_status mbolab_study(const char* config_path, const char* const* overrides, size_t count) {
  return guard([&] {
    MBOLAB_REQUIRE(count == 0 || overrides, "null override list");
    std::string msg;
    const int code = run_study_file(config_path ? config_path : "", to_strings(overrides, count), &msg);
    return code ? fail(static_cast<mbolab_status>(code), msg) : MBOLAB_OK;
  });
}

mbolab_status mbolab_report(const char* const* inputs, size_t count, const char* output) {
  return guard([&] {
    MBOLAB_REQUIRE((count == 0 || inputs) && output, "null argument");
    make_report(to_strings(inputs, count), output);
    return MBOLAB_OK;
  });
}

void mbolab_schedule_default(mbolab_schedule_params* p) {
  if (!p) return;
  const ScheduleParams d;
  p->k = d.k;
  p->s = d.s;
  p->q = d.q;
  p->c_h = d.c_h;
  p->c_eps = d.c_eps;
  p->delta = d.delta;
  p->desk = 0;
}

mbolab_status mbolab_validate_schedule(const mbolab_schedule_params* p, const size_t* ns, size_t count, int csv_only,
                                       char** report) {
  return guard([&] {
    MBOLAB_REQUIRE(p && report && (count == 0 || ns), "null argument");
    *report = nullptr;
    ScheduleParams sp;
    sp.k = p->k;
    sp.s = p->s;
    sp.q = p->q;
    sp.c_h = p->c_h;
    sp.c_eps = p->c_eps;
    sp.delta = p->delta;
    sp.validate();
    const Admissibility a = check_admissible(sp.k, sp.s, sp.q);
    if (!a.admissible) return fail(MBOLAB_ERR_CONFIG, "inadmissible parameters: " + a.reason + " (need " + a.region + ")");
    const Exponents e = exponents(sp.k, sp.s, sp.q);
    std::vector<ScheduleOutput> rows;
    bool all_feasible = true;
    for (size_t i = 0; i < count; ++i) {
      rows.push_back(p->desk ? desk_schedule_for_n(sp, ns[i]) : schedule_for_n(sp, ns[i]));
      all_feasible = all_feasible && rows.back().feasible;
    }
    std::ostringstream os;
    if (csv_only) {
      os << schedule_csv_header() << '\n';
      for (const auto& r : rows) os << schedule_csv_row(r) << '\n';
    } else {
      os << std::setprecision(10);
      os << "parameters: k = " << sp.k << ", s = " << sp.s << ", q = " << sp.q << ", delta = " << sp.delta
         << ", c_h = " << sp.c_h << ", c_eps = " << sp.c_eps << (p->desk ? ", desk eps" : "") << '\n';
      os << "admissible: " << a.reason << '\n';
      os << "exponents: alpha = " << e.alpha << ", beta = " << e.beta << '\n';
      os << schedule_table(rows);
      for (const auto& r : rows) {
        if (r.clamped)
          os << "n = " << r.n << ": K = (ln n)^q = " << r.K_raw << " exceeds n, clamped to " << r.n << '\n';
        if (!r.feasible)
          os << "n = " << r.n << ": eps = " << r.eps << " is below max(lower bounds) = "
             << std::max(r.eps_lb_thm, r.eps_lb_cor) << ", infeasible\n";
        os << "n = " << r.n << ": n eps^(k+4) = " << r.prob_arg_eps << ", n / (ln n)^(2q) = " << r.prob_arg_K << '\n';
      }
      os << "\n" << schedule_csv_header() << '\n';
      for (const auto& r : rows) os << schedule_csv_row(r) << '\n';
    }
    *report = dup_string(os.str());
    if (!all_feasible) return fail(MBOLAB_ERR_INFEASIBLE, "schedule infeasible for at least one n");
    return MBOLAB_OK;
  });
}

mbolab_status mbolab_practical_check(size_t n, double eps, double h, size_t K, int k, int csv_only, char** report,
                                     int* proven, int* practical) {
  return guard([&] {
    MBOLAB_REQUIRE(report, "null argument");
    *report = nullptr;
    const PracticalReport r = practical_override(n, eps, h, K, k);
    std::ostringstream os;
    if (csv_only) {
      os << "check,lhs,rhs,satisfied\n";
      for (const auto& c : r.checks)
        os << '"' << c.name << "\"," << format_double(c.lhs) << ',' << format_double(c.rhs) << ',' << (c.satisfied ? 1 : 0)
           << '\n';
    } else {
      os << std::setprecision(6);
      os << "n = " << n << ", eps = " << eps << ", h = " << h << ", K = " << K << ", k = " << k << '\n';
      for (const auto& c : r.checks)
        os << "  [" << (c.satisfied ? "ok" : "--") << "] " << std::left << std::setw(30) << c.name << std::right
           << c.lhs << " vs " << c.rhs << '\n';
      os << r.verdict << '\n';
    }
    *report = dup_string(os.str());
    if (proven) *proven = r.proven_regime;
    if (practical) *practical = r.practical_regime;
    return MBOLAB_OK;
  });
}

}  // extern "C"
