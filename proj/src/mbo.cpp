#include "mbolab/mbo.hpp"

#include <cmath>
#include <fstream>

namespace mbolab {

std::size_t ClusterState::ones() const {
  std::size_t c = 0;
  for (auto v : labels) c += v;
  return c;
}

Vector ClusterState::as_vector() const { return Vector(labels.begin(), labels.end()); }

ClusterState initial_state_from_region(const PointCloud& cloud, const FrontDescriptor& region) {
  region.validate();
  ClusterState s;
  s.labels.resize(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i)
    s.labels[i] = signed_distance(cloud.manifold, region, cloud.points[i]) > 0 ? 1 : 0;
  return s;
}

ClusterState mbo_step(const HeatOperator& op, double h, const ClusterState& state, Vector* diffused) {
  if (!(h > 0)) throw Error(ErrorCode::InvalidArgument, "step size h must be positive");
  if (state.size() != op.graph().size()) throw Error(ErrorCode::InvalidArgument, "state size does not match graph");
  Vector u = op.apply(h, state.as_vector());
  ClusterState next;
  next.labels.resize(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) next.labels[i] = u[i] >= 0.5 ? 1 : 0;
  if (diffused) *diffused = std::move(u);
  return next;
}

namespace {

double energy_from_diffused(const WeightedGraph& g, double h, const ClusterState& s, const Vector& u) {
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) acc += g.degrees()[i] * (1.0 - s.labels[i]) * u[i];
  return acc / g.size() / std::sqrt(h);
}

}  // namespace

MBOTrace run_mbo(const HeatOperator& op, double h, const ClusterState& chi0, std::size_t max_steps,
                 bool stop_on_fixpoint, bool record_energy) {
  if (max_steps < 1) throw Error(ErrorCode::InvalidArgument, "max_steps must be at least 1");
  if (!(h > 0)) throw Error(ErrorCode::InvalidArgument, "step size h must be positive");
  const bool energies = record_energy && op.is_full();
  MBOTrace trace;
  trace.h = h;
  trace.operator_descriptor = op.describe();
  trace.states.push_back(chi0);
  trace.changed.push_back(0);
  Vector u;
  for (std::size_t l = 0; l < max_steps; ++l) {
    ClusterState next = mbo_step(op, h, trace.states.back(), &u);
    if (energies) trace.energies.push_back(energy_from_diffused(op.graph(), h, trace.states.back(), u));
    std::size_t flips = 0;
    for (std::size_t i = 0; i < next.size(); ++i) flips += next.labels[i] != trace.states.back().labels[i];
    const bool fixpoint = flips == 0;
    trace.states.push_back(std::move(next));
    trace.changed.push_back(flips);
    if (fixpoint && stop_on_fixpoint) {
      trace.pinned_at = l;
      break;
    }
  }
  if (energies) {
    if (trace.pinned_at) {
      trace.energies.push_back(trace.energies.back());
    } else {
      const Vector v = trace.states.back().as_vector();
      trace.energies.push_back(thresholding_energy(op, h, v));
    }
  }
  return trace;
}

int interpolate(const MBOTrace& trace, double t, std::size_t node) {
  const std::size_t len = trace.steps();
  if (!(t >= 0) || !(t < len * trace.h)) throw Error(ErrorCode::InvalidArgument, "time outside the trace");
  auto l = static_cast<std::size_t>(std::floor(t / trace.h));
  // guard against t/h rounding across a step boundary
  if (l > 0 && l * trace.h > t) --l;
  if ((l + 1) * trace.h <= t) ++l;
  l = std::min(l, len - 1);
  if (node >= trace.states[l].size()) throw Error(ErrorCode::InvalidArgument, "node index out of range");
  return trace.states[l].labels[node];
}

double thresholding_energy(const HeatOperator& full, double h, std::span<const double> v) {
  if (!full.is_full()) throw Error(ErrorCode::InvalidArgument, "the thresholding energy needs the full heat operator");
  if (!(h > 0)) throw Error(ErrorCode::InvalidArgument, "step size h must be positive");
  for (double x : v)
    if (!(x >= 0.0 && x <= 1.0)) throw Error(ErrorCode::InvalidArgument, "energy argument must take values in [0, 1]");
  const Vector u = full.apply(h, v);
  Vector one_minus(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) one_minus[i] = 1.0 - v[i];
  return inner_product(full.graph(), one_minus, u) / std::sqrt(h);
}

void write_trace_csv(const MBOTrace& trace, const std::string& path, const std::string& labels_path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << "step,time,ones_count,energy,changed_nodes\n";
  for (std::size_t l = 0; l < trace.steps(); ++l) {
    out << l << ',' << format_double(trace.time(l)) << ',' << trace.states[l].ones() << ',';
    if (l < trace.energies.size()) out << format_double(trace.energies[l]);
    out << ',' << trace.changed[l] << '\n';
  }
  if (labels_path.empty()) return;
  std::ofstream lab(labels_path);
  if (!lab) throw Error(ErrorCode::Io, "cannot write " + labels_path);
  lab << "step,node,label\n";
  for (std::size_t l = 0; l < trace.steps(); ++l)
    for (std::size_t i = 0; i < trace.states[l].size(); ++i)
      lab << l << ',' << i << ',' << int(trace.states[l].labels[i]) << '\n';
}

}  // namespace mbolab
