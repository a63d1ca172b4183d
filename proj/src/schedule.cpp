#include "mbolab/schedule.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace mbolab {

void ScheduleParams::validate() const {
  if (k != 2 && k != 3) throw Error(ErrorCode::Config, "schedule dimension k must be 2 or 3");
  if (!(delta > 0 && delta < 1)) throw Error(ErrorCode::Config, "slack delta must lie in (0, 1)");
  if (!(c_h > 0) || !(c_eps > 0)) throw Error(ErrorCode::Config, "schedule constants must be positive");
}

Admissibility check_admissible(int k, double s, double q) {
  if (k != 2 && k != 3) throw Error(ErrorCode::InvalidArgument, "admissibility is defined for k in {2, 3}");
  Admissibility a;
  const double smax = 2.0 / k;
  std::ostringstream region;
  region << "0 < s < " << smax << " and q > 1/(" << smax << " - s)";
  a.region = region.str();
  a.q_boundary = s < smax ? 1.0 / (smax - s) : std::numeric_limits<double>::infinity();
  std::ostringstream why;
  if (!(s > 0)) {
    why << "s = " << s << " must be positive";
  } else if (!(s < smax)) {
    why << "s = " << s << " must be below 2/k = " << smax;
  } else if (!(q > a.q_boundary)) {
    why << "q = " << q << " must exceed 1/(2/k - s) = " << a.q_boundary;
  } else {
    a.admissible = true;
    why << "q = " << q << " exceeds the boundary " << a.q_boundary;
  }
  a.reason = why.str();
  return a;
}

Exponents exponents(int k, double s, double q) {
  const Admissibility a = check_admissible(k, s, q);
  if (!a.admissible) throw Error(ErrorCode::Config, "inadmissible parameters: " + a.reason);
  Exponents e;
  e.alpha = -1.0 + 2.0 * q / k - s * q;
  e.beta = -0.5 + 4.0 * q + 13.0 * q / k - s * q / 2.0;
  if (e.alpha < 0 || e.beta < 0) throw Error(ErrorCode::Config, "inadmissible exponents (alpha or beta negative)");
  return e;
}

namespace {

ScheduleOutput common_part(const ScheduleParams& p, std::size_t n) {
  p.validate();
  if (n < 3) throw Error(ErrorCode::InvalidArgument, "schedules need n >= 3");
  const Exponents e = exponents(p.k, p.s, p.q);
  ScheduleOutput o;
  o.n = n;
  o.alpha = e.alpha;
  o.beta = e.beta;
  const double ln = std::log(static_cast<double>(n));
  o.K_raw = std::pow(ln, p.q);
  const double kc = std::ceil(o.K_raw);
  o.clamped = kc > static_cast<double>(n);
  o.K = o.clamped ? n : static_cast<std::size_t>(std::max(1.0, kc));
  o.h = p.c_h * std::pow(ln, -(1.0 - p.delta) * e.alpha);
  const double ratio = ln / n;
  o.eps_lb_thm = std::pow(ratio, p.k == 2 ? 1.0 / 8.0 : 1.0 / p.k);
  o.eps_lb_cor = std::pow(ratio, 1.0 / (p.k + 4));
  o.prob_arg_K = n / std::pow(ln, 2.0 * p.q);
  return o;
}

void finish(ScheduleOutput& o, int k) {
  o.feasible = std::max(o.eps_lb_thm, o.eps_lb_cor) < o.eps;
  o.prob_arg_eps = o.n * std::pow(o.eps, k + 4);
}

}  // namespace

ScheduleOutput schedule_for_n(const ScheduleParams& p, std::size_t n) {
  ScheduleOutput o = common_part(p, n);
  o.eps = p.c_eps * std::pow(std::log(static_cast<double>(n)), -(1.0 + p.delta) * o.beta);
  finish(o, p.k);
  return o;
}

ScheduleOutput desk_schedule_for_n(const ScheduleParams& p, std::size_t n) {
  ScheduleOutput o = common_part(p, n);
  const double ratio = std::log(static_cast<double>(n)) / n;
  o.eps = p.c_eps * std::pow(ratio, (1.0 - p.delta) / (p.k + 4));
  finish(o, p.k);
  return o;
}

PracticalReport practical_override(std::size_t n, double eps, double h, std::size_t K, int k) {
  if (n < 3) throw Error(ErrorCode::InvalidArgument, "n must be at least 3");
  if (!(eps > 0) || !(h > 0) || K < 1) throw Error(ErrorCode::InvalidArgument, "eps, h and K must be positive");
  if (K > n) throw Error(ErrorCode::InvalidArgument, "K = " + std::to_string(K) + " exceeds n = " + std::to_string(n));
  if (k != 2 && k != 3) throw Error(ErrorCode::InvalidArgument, "k must be 2 or 3");
  PracticalReport r;
  ScheduleOutput& o = r.values;
  o.n = n;
  o.K = K;
  o.K_raw = static_cast<double>(K);
  o.h = h;
  o.eps = eps;
  const double ln = std::log(static_cast<double>(n));
  o.eps_lb_thm = std::pow(ln / n, k == 2 ? 1.0 / 8.0 : 1.0 / k);
  o.eps_lb_cor = std::pow(ln / n, 1.0 / (k + 4));
  finish(o, k);
  o.alpha = o.beta = std::numeric_limits<double>::quiet_NaN();

  auto add = [&](std::string name, double lhs, double rhs, bool ok) { r.checks.push_back({std::move(name), lhs, rhs, ok}); };
  const double h32 = std::pow(h, 1.5);
  add("eps <= h^(3/2)", eps, h32, eps <= h32);
  add("eps < h", eps, h, eps < h);
  add("eps > theorem lower bound", eps, o.eps_lb_thm, eps > o.eps_lb_thm);
  add("eps > corollary lower bound", eps, o.eps_lb_cor, eps > o.eps_lb_cor);
  const double connect = std::pow(ln / n, 1.0 / k);
  add("eps >= (ln n / n)^(1/k)", eps, connect, eps >= connect);
  add("h >= eps^2", h, eps * eps, h >= eps * eps);
  add("K <= n", double(K), double(n), true);

  r.proven_regime = r.checks[0].satisfied && r.checks[2].satisfied && r.checks[3].satisfied;
  r.practical_regime = r.checks[4].satisfied && r.checks[5].satisfied;
  r.verdict = std::string(r.proven_regime ? "inside" : "outside") + " proven regime, " +
              (r.practical_regime ? "inside" : "outside") + " practical regime";
  return r;
}

std::string schedule_csv_header() { return "n,K,alpha,beta,h,eps,eps_lb_thm,eps_lb_cor,feasible,clamped"; }

std::string schedule_csv_row(const ScheduleOutput& o) {
  std::ostringstream os;
  os << o.n << ',' << o.K << ',' << format_double(o.alpha) << ',' << format_double(o.beta) << ','
     << format_double(o.h) << ',' << format_double(o.eps) << ',' << format_double(o.eps_lb_thm) << ','
     << format_double(o.eps_lb_cor) << ',' << (o.feasible ? 1 : 0) << ',' << (o.clamped ? 1 : 0);
  return os.str();
}

std::string schedule_table(const std::vector<ScheduleOutput>& rows) {
  std::ostringstream os;
  os << std::setw(10) << "n" << std::setw(12) << "K" << std::setw(14) << "(ln n)^q" << std::setw(9) << "alpha"
     << std::setw(9) << "beta" << std::setw(13) << "h" << std::setw(13) << "eps" << std::setw(13) << "eps_lb_thm"
     << std::setw(13) << "eps_lb_cor" << std::setw(10) << "feasible" << std::setw(9) << "clamped" << '\n';
  for (const auto& o : rows) {
    os << std::setw(10) << o.n << std::setw(12) << o.K << std::setw(14) << std::setprecision(5) << o.K_raw
       << std::setw(9) << o.alpha << std::setw(9) << o.beta << std::setw(13) << o.h << std::setw(13) << o.eps
       << std::setw(13) << o.eps_lb_thm << std::setw(13) << o.eps_lb_cor << std::setw(10)
       << (o.feasible ? "yes" : "no") << std::setw(9) << (o.clamped ? "yes" : "no") << '\n';
  }
  return os.str();
}

std::vector<std::pair<double, double>> region_boundary(int k, std::size_t samples) {
  std::vector<std::pair<double, double>> out;
  const double smax = 2.0 / k;
  for (std::size_t i = 1; i <= samples; ++i) {
    const double s = smax * i / (samples + 1.0);
    out.emplace_back(s, 1.0 / (smax - s));
  }
  return out;
}

}  // namespace mbolab
