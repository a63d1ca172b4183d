#pragma once

#include <string>
#include <vector>

#include "mbolab/common.hpp"

namespace mbolab {

struct ScheduleParams {
  int k = 2;
  double s = 0.25;
  double q = 5.0;
  double c_h = 1.0;
  double c_eps = 1.0;
  double delta = 0.1;  // slack on log exponents realizing >> and <<

  void validate() const;
};

struct Admissibility {
  bool admissible = false;
  double q_boundary = 0.0;  // 1 / (2/k - s), infinite when s >= 2/k
  std::string reason;
  std::string region;  // description of the admissible (s, q) set for this k
};

/// Admissible iff 0 < s < 2/k and q > 1/(2/k - s). Requires k in {2, 3}.
Admissibility check_admissible(int k, double s, double q);

struct Exponents {
  double alpha = 0.0;
  double beta = 0.0;
};

/// alpha = -1 + 2q/k - sq, beta = -1/2 + 4q + 13q/k - sq/2. Throws Config for inadmissible input or negative exponents.
Exponents exponents(int k, double s, double q);

struct ScheduleOutput {
  std::size_t n = 0;
  std::size_t K = 0;
  double K_raw = 0.0;  // (ln n)^q before clamping
  double alpha = 0.0;
  double beta = 0.0;
  double h = 0.0;
  double eps = 0.0;
  double eps_lb_thm = 0.0;
  double eps_lb_cor = 0.0;
  bool feasible = false;
  bool clamped = false;
  // magnitudes of the two exponents in the failure-probability bound (constants unknown)
  double prob_arg_eps = 0.0;  // n eps^{k+4}
  double prob_arg_K = 0.0;    // n / (ln n)^{2q}
};

/// Theorem-rate schedule: K = ceil((ln n)^q) clamped to n, h = c_h (ln n)^{-(1-delta) alpha},
/// eps = c_eps (ln n)^{-(1+delta) beta}. Requires admissible params and n >= 3.
ScheduleOutput schedule_for_n(const ScheduleParams& p, std::size_t n);

/// Desk-scale variant: K and h as above, but eps = c_eps (ln n / n)^{(1-delta)/(k+4)}, i.e. just above the
/// corollary's lower rate instead of the (unreachable) theorem upper rate.
ScheduleOutput desk_schedule_for_n(const ScheduleParams& p, std::size_t n);

struct InequalityCheck {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  bool satisfied = false;
};

struct PracticalReport {
  ScheduleOutput values;
  std::vector<InequalityCheck> checks;
  bool proven_regime = false;
  bool practical_regime = false;
  std::string verdict;
};

/// Wraps user-chosen (eps, h, K) and reports which inequalities hold. Throws InvalidArgument if K > n.
PracticalReport practical_override(std::size_t n, double eps, double h, std::size_t K, int k = 2);

std::string schedule_csv_header();
std::string schedule_csv_row(const ScheduleOutput& o);
std::string schedule_table(const std::vector<ScheduleOutput>& rows);

/// Samples of the admissible-region boundary q = 1/(2/k - s) for plotting.
std::vector<std::pair<double, double>> region_boundary(int k, std::size_t samples);

}  // namespace mbolab
