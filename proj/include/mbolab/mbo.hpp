#pragma once

#include <optional>
#include <string>

#include "mbolab/front.hpp"
#include "mbolab/spectral.hpp"

namespace mbolab {

struct ClusterState {
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t ones() const;
  Vector as_vector() const;
  bool operator==(const ClusterState&) const = default;
};

/// chi(x_i) = 1 iff signed_distance(region, x_i) > 0.
ClusterState initial_state_from_region(const PointCloud& cloud, const FrontDescriptor& region);

/// Diffuse for time h, then label 1 where u >= 1/2. The diffused field is returned through `diffused` if given.
ClusterState mbo_step(const HeatOperator& op, double h, const ClusterState& state, Vector* diffused = nullptr);

struct MBOTrace {
  std::vector<ClusterState> states;
  double h = 0.0;
  Vector energies;  // one per state; empty unless the operator is full
  std::vector<std::size_t> changed;  // changed[l] = nodes flipped between states[l-1] and states[l]; changed[0] = 0
  std::optional<std::size_t> pinned_at;
  std::string operator_descriptor;

  std::size_t steps() const { return states.size(); }
  double time(std::size_t l) const { return l * h; }
};

MBOTrace run_mbo(const HeatOperator& op, double h, const ClusterState& chi0, std::size_t max_steps,
                 bool stop_on_fixpoint, bool record_energy = true);

/// Right-continuous piecewise-constant interpolation: chi^{floor(t/h)}(node), for 0 <= t < steps()*h.
int interpolate(const MBOTrace& trace, double t, std::size_t node);

/// E(v) = h^{-1/2} <1 - v, e^{-h Delta} v>_V. Requires the full operator and 0 <= v <= 1.
double thresholding_energy(const HeatOperator& full, double h, std::span<const double> v);

/// `step,time,ones_count,energy,changed_nodes`; with labels_path also `step,node,label`.
void write_trace_csv(const MBOTrace& trace, const std::string& path, const std::string& labels_path = "");

}  // namespace mbolab
