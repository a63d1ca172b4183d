#include "mbolab/spectral.hpp"

#include <zlib.h>

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace mbolab {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void require_no_isolated(const WeightedGraph& g) {
  const std::size_t bad = g.first_isolated();
  if (bad < g.size()) throw Error(ErrorCode::Numerical, "node " + std::to_string(bad) + " is isolated (zero degree)");
}

// s_i = 1 / sqrt(n d_i), so that (B x)_i = s_i sum_j w_ij s_j x_j.
Vector symmetric_scale(const WeightedGraph& g) {
  require_no_isolated(g);
  const std::size_t n = g.size();
  Vector s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = 1.0 / std::sqrt(n * g.degrees()[i]);
  return s;
}

void apply_b(const WeightedGraph& g, const Vector& s, const double* x, double* y, Vector& scratch) {
  const std::size_t n = g.size();
  scratch.resize(n);
  for (std::size_t i = 0; i < n; ++i) scratch[i] = s[i] * x[i];
  g.multiply(scratch, std::span<double>(y, n));
  for (std::size_t i = 0; i < n; ++i) y[i] *= s[i];
}

MatrixXd dense_b(const WeightedGraph& g, const Vector& s) {
  const std::size_t n = g.size();
  MatrixXd b = MatrixXd::Zero(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t e = g.row_ptr()[i]; e < g.row_ptr()[i + 1]; ++e) {
      const std::size_t j = g.cols()[e];
      const double v = s[i] * g.weights()[e] * s[j];
      b(i, j) = v;
      b(j, i) = v;
    }
  }
  return b;
}

void fix_sign(double* v, std::size_t n, std::size_t stride) {
  std::size_t best = 0;
  double mag = -1;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = std::abs(v[i * stride]);
    if (a > mag * (1 + 1e-12)) {
      mag = a;
      best = i;
    }
  }
  if (v[best * stride] < 0)
    for (std::size_t i = 0; i < n; ++i) v[i * stride] = -v[i * stride];
}

// Converts orthonormal eigenvectors y of B (columns, descending mu) into the decomposition of Delta.
SpectralDecomposition from_b_pairs(const WeightedGraph& g, const VectorXd& mu, const MatrixXd& y, double tol) {
  const std::size_t n = g.size(), K = mu.size();
  SpectralDecomposition dec;
  dec.n = n;
  dec.K = K;
  dec.tolerance = tol;
  dec.graph_hash = g.content_hash();
  const double inv_eps2 = 1.0 / (g.epsilon() * g.epsilon());
  dec.eigenvalues.resize(K);
  dec.eigenvectors.resize(n * K);
  for (std::size_t l = 0; l < K; ++l) {
    dec.eigenvalues[l] = inv_eps2 * (1.0 - mu(l));
    for (std::size_t i = 0; i < n; ++i) dec.vec(i, l) = std::sqrt(n / g.degrees()[i]) * y(i, l);
    fix_sign(&dec.vec(0, l), n, K);
  }
  dec.residuals = eigen_residuals(dec, g);
  return dec;
}

void orthogonalize(const MatrixXd& v, Eigen::Index cols, VectorXd& w, VectorXd* coeffs) {
  for (int pass = 0; pass < 2; ++pass) {
    const VectorXd h = v.leftCols(cols).transpose() * w;
    w.noalias() -= v.leftCols(cols) * h;
    if (coeffs) {
      if (pass == 0)
        *coeffs = h;
      else
        *coeffs += h;
    }
  }
}

}  // namespace

Vector eigen_residuals(const SpectralDecomposition& dec, const WeightedGraph& g) {
  if (dec.n != g.size()) throw Error(ErrorCode::InvalidArgument, "decomposition does not match graph size");
  Vector res(dec.K);
  Vector v(dec.n);
  for (std::size_t l = 0; l < dec.K; ++l) {
    for (std::size_t i = 0; i < dec.n; ++i) v[i] = dec.vec(i, l);
    const Vector lv = laplacian_apply(g, v);
    for (std::size_t i = 0; i < dec.n; ++i) v[i] = lv[i] - dec.eigenvalues[l] * v[i];
    res[l] = std::sqrt(std::max(0.0, inner_product(g, v, v)));
  }
  return res;
}

SpectralDecomposition partial_eigendecomposition(const WeightedGraph& g, std::size_t K, EigenSolverOptions opt) {
  const std::size_t n = g.size();
  if (K < 1 || K > n) throw Error(ErrorCode::InvalidArgument, "K must satisfy 1 <= K <= n");
  if (!(opt.tol > 0)) throw Error(ErrorCode::InvalidArgument, "solver tolerance must be positive");
  const Vector s = symmetric_scale(g);
  std::size_t m = opt.subspace ? opt.subspace : std::max(2 * K + 20, K + 40);

  if (n < opt.dense_below || m >= n) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(dense_b(g, s));
    if (es.info() != Eigen::Success) throw Error(ErrorCode::Numerical, "dense eigensolver failed");
    VectorXd mu(K);
    MatrixXd y(n, K);
    for (std::size_t l = 0; l < K; ++l) {
      mu(l) = es.eigenvalues()(n - 1 - l);
      y.col(l) = es.eigenvectors().col(n - 1 - l);
    }
    return from_b_pairs(g, mu, y, opt.tol);
  }
  m = std::max(m, K + 2);

  Rng rng(g.content_hash() ^ 0x9e3779b97f4a7c15ULL);
  auto random_vector = [&] {
    VectorXd w(n);
    for (std::size_t i = 0; i < n; ++i) w(i) = rng.uniform(-1.0, 1.0);
    return w;
  };

  MatrixXd v(n, m + 1);
  MatrixXd t = MatrixXd::Zero(m, m);
  {
    VectorXd w = random_vector();
    v.col(0) = w / w.norm();
  }
  Vector scratch;
  VectorXd w(n), h;
  std::size_t kept = 0;
  double last_beta = 0.0;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es;
  VectorXd theta;
  MatrixXd ritz;
  Vector residual_profile(K, 0.0);

  for (std::size_t restart = 0; restart <= opt.max_restarts; ++restart) {
    for (std::size_t j = kept; j < m; ++j) {
      apply_b(g, s, v.col(j).data(), w.data(), scratch);
      orthogonalize(v, j + 1, w, &h);
      for (std::size_t i = 0; i <= j; ++i) {
        t(i, j) = h(i);
        t(j, i) = h(i);
      }
      double beta = w.norm();
      if (beta < 1e-12) {
        // invariant subspace found: continue with a fresh direction
        w = random_vector();
        orthogonalize(v, j + 1, w, nullptr);
        w /= w.norm();
        beta = 0.0;
        v.col(j + 1) = w;
      } else {
        v.col(j + 1) = w / beta;
      }
      if (j + 1 < m) {
        t(j + 1, j) = beta;
        t(j, j + 1) = beta;
      }
      last_beta = beta;
    }

    es.compute(t);
    if (es.info() != Eigen::Success) throw Error(ErrorCode::Numerical, "projected eigenproblem failed");
    // descending order of mu
    theta = es.eigenvalues().reverse();
    ritz = es.eigenvectors().rowwise().reverse();

    bool converged = true;
    const double bound = opt.tol * (2.0 - theta(K - 1));
    for (std::size_t l = 0; l < K; ++l) {
      residual_profile[l] = std::abs(last_beta * ritz(m - 1, l));
      if (residual_profile[l] > bound) converged = false;
    }
    if (converged) {
      MatrixXd y = v.leftCols(m) * ritz.leftCols(K);
      for (std::size_t l = 0; l < K; ++l) y.col(l).normalize();
      return from_b_pairs(g, theta.head(K), y, opt.tol);
    }
    if (restart == opt.max_restarts) break;

    const std::size_t p = std::min(m - 1, K + (m - K) / 2);
    MatrixXd kept_basis = v.leftCols(m) * ritz.leftCols(p);
    v.col(p) = v.col(m);
    v.leftCols(p) = kept_basis;
    t.setZero();
    for (std::size_t i = 0; i < p; ++i) {
      t(i, i) = theta(i);
      t(p, i) = last_beta * ritz(m - 1, i);
      t(i, p) = t(p, i);
    }
    kept = p;
  }

  const double inv_eps2 = 1.0 / (g.epsilon() * g.epsilon());
  std::ostringstream os;
  os << "eigensolver did not converge after " << opt.max_restarts << " restarts; residuals:";
  for (double r : residual_profile) os << ' ' << format_double(inv_eps2 * r);
  throw Error(ErrorCode::Numerical, os.str());
}

double truncated_kernel_entry(const SpectralDecomposition& dec, const WeightedGraph& g, double t, std::size_t i,
                              std::size_t j) {
  if (!(t > 0)) throw Error(ErrorCode::InvalidArgument, "time must be positive");
  if (i >= dec.n || j >= dec.n) throw Error(ErrorCode::InvalidArgument, "node index out of range");
  double s = 0.0;
  for (std::size_t l = 0; l < dec.K; ++l) s += std::exp(-t * dec.eigenvalues[l]) * dec.vec(i, l) * dec.vec(j, l);
  return s * g.degrees()[j] / static_cast<double>(dec.n);
}

struct HeatOperator::Dense {
  MatrixXd q;
  VectorXd mu;
};

HeatOperator HeatOperator::full(std::shared_ptr<const WeightedGraph> g, HeatMethod method, double krylov_tol) {
  if (!g) throw Error(ErrorCode::InvalidArgument, "null graph");
  HeatOperator op;
  op.graph_ = std::move(g);
  op.scale_ = symmetric_scale(*op.graph_);
  op.krylov_tol_ = krylov_tol;
  if (method == HeatMethod::Automatic) method = op.graph_->size() <= kDenseCap ? HeatMethod::Dense : HeatMethod::Krylov;
  if (method == HeatMethod::Dense && op.graph_->size() > kDenseCap)
    throw Error(ErrorCode::InvalidArgument, "dense heat operator is capped at n <= " + std::to_string(kDenseCap));
  op.method_ = method;
  if (method == HeatMethod::Dense) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(dense_b(*op.graph_, op.scale_));
    if (es.info() != Eigen::Success) throw Error(ErrorCode::Numerical, "dense eigensolver failed");
    auto d = std::make_shared<Dense>();
    d->q = es.eigenvectors();
    d->mu = es.eigenvalues();
    op.dense_ = std::move(d);
  }
  return op;
}

HeatOperator HeatOperator::truncated(std::shared_ptr<const WeightedGraph> g,
                                     std::shared_ptr<const SpectralDecomposition> dec) {
  if (!g || !dec) throw Error(ErrorCode::InvalidArgument, "null graph or decomposition");
  if (dec->n != g->size() || dec->K > dec->n) throw Error(ErrorCode::InvalidArgument, "decomposition does not fit graph");
  if (dec->graph_hash != g->content_hash()) throw Error(ErrorCode::InvalidArgument, "decomposition belongs to another graph");
  HeatOperator op;
  op.graph_ = std::move(g);
  op.dec_ = std::move(dec);
  return op;
}

std::string HeatOperator::describe() const {
  if (dec_) return "truncated(K=" + std::to_string(dec_->K) + ")";
  return method_ == HeatMethod::Dense ? "full(dense)" : "full(krylov)";
}

namespace {

// e^{-tau (I - B)} y by Lanczos; returns false when m_max was not enough.
bool krylov_step(const WeightedGraph& g, const Vector& s, const VectorXd& y, double tau, double tol, std::size_t m_max,
                 VectorXd& out, std::size_t& dim) {
  const std::size_t n = y.size();
  const double beta0 = y.norm();
  if (beta0 == 0.0) {
    out = VectorXd::Zero(n);
    dim = 0;
    return true;
  }
  m_max = std::min(m_max, n);
  MatrixXd v(n, m_max + 1);
  v.col(0) = y / beta0;
  VectorXd alpha(m_max), beta(m_max);
  VectorXd w(n), h;
  Vector scratch;
  for (std::size_t j = 0; j < m_max; ++j) {
    apply_b(g, s, v.col(j).data(), w.data(), scratch);
    orthogonalize(v, j + 1, w, &h);
    alpha(j) = h(j);
    beta(j) = w.norm();
    const std::size_t m = j + 1;
    MatrixXd t = MatrixXd::Zero(m, m);
    for (std::size_t i = 0; i < m; ++i) {
      t(i, i) = alpha(i);
      if (i + 1 < m) t(i, i + 1) = t(i + 1, i) = beta(i);
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(t);
    const VectorXd ex = (tau * (es.eigenvalues().array() - 1.0)).exp();
    const VectorXd e = es.eigenvectors() * (ex.array() * es.eigenvectors().row(0).transpose().array()).matrix();
    const bool breakdown = beta(j) < 1e-13;
    const double estimate = beta0 * beta(j) * std::abs(e(m - 1));
    if (breakdown || estimate <= tol * beta0 * e.norm() || m == n) {
      out = beta0 * (v.leftCols(m) * e);
      dim = m;
      return true;
    }
    v.col(j + 1) = w / beta(j);
  }
  return false;
}

}  // namespace

Vector HeatOperator::apply(double t, std::span<const double> u, KrylovStats* stats) const {
  if (!(t > 0)) throw Error(ErrorCode::InvalidArgument, "time must be positive");
  const WeightedGraph& g = *graph_;
  const std::size_t n = g.size();
  if (u.size() != n) throw Error(ErrorCode::InvalidArgument, "node function size mismatch");
  Vector out(n, 0.0);

  if (dec_) {
    const SpectralDecomposition& d = *dec_;
    Vector c(d.K, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double wu = g.degrees()[i] * u[i];
      for (std::size_t l = 0; l < d.K; ++l) c[l] += wu * d.vec(i, l);
    }
    for (std::size_t l = 0; l < d.K; ++l) c[l] *= std::exp(-t * d.eigenvalues[l]) / n;
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t l = 0; l < d.K; ++l) acc += c[l] * d.vec(i, l);
      out[i] = acc;
    }
    return out;
  }

  const double tau = t / (g.epsilon() * g.epsilon());
  // similarity: e^{-t Delta} = D^{-1/2} e^{-tau (I - B)} D^{1/2}
  VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) y(i) = std::sqrt(g.degrees()[i]) * u[i];
  VectorXd z;
  if (dense_) {
    const VectorXd c = dense_->q.transpose() * y;
    const VectorXd f = (-tau * (1.0 - dense_->mu.array())).exp();
    z = dense_->q * (f.array() * c.array()).matrix();
  } else {
    KrylovStats local;
    double remaining = tau, sub = tau;
    z = y;
    VectorXd next;
    while (remaining > 0) {
      const double step = std::min(sub, remaining);
      std::size_t dim = 0;
      if (!krylov_step(g, scale_, z, step, krylov_tol_, 100, next, dim)) {
        sub = 0.5 * step;
        ++local.halvings;
        if (local.halvings > 60) throw Error(ErrorCode::Numerical, "Krylov exponential failed to converge");
        continue;
      }
      z = next;
      remaining -= step;
      if (remaining < 1e-15 * tau) remaining = 0;
      ++local.substeps;
      local.max_dim = std::max(local.max_dim, dim);
    }
    if (stats) *stats = local;
  }
  for (std::size_t i = 0; i < n; ++i) out[i] = z(i) / std::sqrt(g.degrees()[i]);
  return out;
}

double mass_defect(const HeatOperator& op, double t) {
  const Vector one(op.graph().size(), 1.0);
  const Vector s = op.apply(t, one);
  double worst = 0.0;
  for (double v : s) worst = std::max(worst, std::abs(v - 1.0));
  return worst;
}

namespace {

constexpr char kMagic[8] = {'M', 'B', 'O', 'S', 'P', 'E', 'C', '1'};

template <typename T>
void put(std::string& buf, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  buf.append(bytes, sizeof(T));
}

template <typename T>
T get(const std::string& buf, std::size_t& pos) {
  if (pos + sizeof(T) > buf.size()) throw Error(ErrorCode::Cache, "spectrum cache is truncated");
  char bytes[sizeof(T)];
  std::memcpy(bytes, buf.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  pos += sizeof(T);
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

std::uint32_t crc(const char* data, std::size_t size) {
  uLong c = crc32(0L, Z_NULL, 0);
  while (size > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    c = crc32(c, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

}  // namespace

void spectrum_cache_save(const SpectralDecomposition& dec, const std::string& path) {
  if (dec.eigenvalues.size() != dec.K || dec.eigenvectors.size() != dec.n * dec.K)
    throw Error(ErrorCode::InvalidArgument, "decomposition arrays do not match its shape");
  std::string buf(kMagic, 8);
  buf.reserve(8 + 32 + 8 * (dec.K + dec.n * dec.K) + 4);
  put<std::uint64_t>(buf, dec.n);
  put<std::uint64_t>(buf, dec.K);
  put<std::uint64_t>(buf, dec.graph_hash);
  put<double>(buf, dec.tolerance);
  for (double v : dec.eigenvalues) put<double>(buf, v);
  for (double v : dec.eigenvectors) put<double>(buf, v);
  put<std::uint32_t>(buf, crc(buf.data(), buf.size()));

  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  Rng rng(reinterpret_cast<std::uintptr_t>(&buf) ^ dec.graph_hash);
  const fs::path tmp = target.string() + ".tmp." + hex64(rng.next());
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw Error(ErrorCode::Io, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error(ErrorCode::Io, "cannot rename cache into place: " + ec.message());
  }
}

SpectralDecomposition spectrum_cache_load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 8 || std::memcmp(buf.data(), kMagic, 8) != 0)
    throw Error(ErrorCode::Cache, "not a spectrum cache (bad magic or version)");
  if (buf.size() < 8 + 32 + 4) throw Error(ErrorCode::Cache, "spectrum cache is truncated");
  std::size_t pos = buf.size() - 4;
  const auto stored = get<std::uint32_t>(buf, pos);
  if (stored != crc(buf.data(), buf.size() - 4)) throw Error(ErrorCode::Cache, "spectrum cache checksum mismatch");
  pos = 8;
  SpectralDecomposition dec;
  dec.n = get<std::uint64_t>(buf, pos);
  dec.K = get<std::uint64_t>(buf, pos);
  dec.graph_hash = get<std::uint64_t>(buf, pos);
  dec.tolerance = get<double>(buf, pos);
  if (dec.K > dec.n || buf.size() != 8 + 32 + 8 * (dec.K + dec.n * dec.K) + 4)
    throw Error(ErrorCode::Cache, "spectrum cache shape mismatch");
  dec.eigenvalues.resize(dec.K);
  for (auto& v : dec.eigenvalues) v = get<double>(buf, pos);
  dec.eigenvectors.resize(dec.n * dec.K);
  for (auto& v : dec.eigenvectors) v = get<double>(buf, pos);
  return dec;
}

SpectralDecomposition spectrum_cache_load(const std::string& path, const WeightedGraph& g) {
  SpectralDecomposition dec = spectrum_cache_load(path);
  if (dec.graph_hash != g.content_hash() || dec.n != g.size())
    throw Error(ErrorCode::Cache, "spectrum cache belongs to graph " + hex64(dec.graph_hash) + ", expected " +
                                      hex64(g.content_hash()));
  dec.residuals = eigen_residuals(dec, g);
  return dec;
}

}  // namespace mbolab
