#include "mbolab/front.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mbolab {

FrontDescriptor FrontDescriptor::circle(const Manifold& m, Point center, double radius) {
  FrontDescriptor f;
  f.kind = FrontKind::Circle;
  f.manifold = m;
  f.center = center;
  f.radius = radius;
  f.validate();
  return f;
}

FrontDescriptor FrontDescriptor::band(const Manifold& m, int axis, double lo, double hi) {
  FrontDescriptor f;
  f.kind = FrontKind::Band;
  f.manifold = m;
  f.axis = axis;
  f.lo = lo;
  f.hi = hi;
  f.validate();
  return f;
}

FrontDescriptor FrontDescriptor::cap(double theta0) {
  FrontDescriptor f;
  f.kind = FrontKind::Cap;
  f.manifold = Manifold::sphere();
  f.theta0 = theta0;
  f.validate();
  return f;
}

FrontDescriptor FrontDescriptor::whole(const Manifold& m) {
  FrontDescriptor f;
  f.kind = FrontKind::Whole;
  f.manifold = m;
  return f;
}

FrontDescriptor FrontDescriptor::empty(const Manifold& m) {
  FrontDescriptor f;
  f.kind = FrontKind::Empty;
  f.manifold = m;
  return f;
}

void FrontDescriptor::validate() const {
  const bool torus = manifold.kind == ManifoldKind::FlatTorus;
  switch (kind) {
    case FrontKind::Circle:
      if (!torus) throw Error(ErrorCode::InvalidArgument, "circle fronts live on the torus");
      if (!(radius > 0 && radius < 0.5 * manifold.side))
        throw Error(ErrorCode::InvalidArgument, "circle radius must satisfy 0 < r < L/2");
      break;
    case FrontKind::Band:
      if (!torus) throw Error(ErrorCode::InvalidArgument, "band fronts live on the torus");
      if (axis < 0 || axis > 1) throw Error(ErrorCode::InvalidArgument, "band axis must be 0 or 1");
      if (!(lo >= 0 && lo < hi && hi < manifold.side))
        throw Error(ErrorCode::InvalidArgument, "band edges must satisfy 0 <= a < b < L");
      break;
    case FrontKind::Cap:
      if (torus) throw Error(ErrorCode::InvalidArgument, "cap fronts live on the sphere");
      if (!(theta0 > 0 && theta0 < kPi)) throw Error(ErrorCode::InvalidArgument, "cap angle must satisfy 0 < theta0 < pi");
      break;
    case FrontKind::Whole:
    case FrontKind::Empty:
      break;
  }
}

std::string FrontDescriptor::describe() const {
  std::ostringstream os;
  switch (kind) {
    case FrontKind::Circle:
      os << "circle(center=(" << center[0] << "," << center[1] << "), r=" << radius << ")";
      break;
    case FrontKind::Band:
      os << "band(axis=" << axis << ", [" << lo << "," << hi << "])";
      break;
    case FrontKind::Cap:
      os << "cap(theta0=" << theta0 << ")";
      break;
    case FrontKind::Whole:
      os << "whole";
      break;
    case FrontKind::Empty:
      os << "empty";
      break;
  }
  return os.str();
}

namespace {

double colatitude(const Point& x) { return std::acos(std::clamp(x[2], -1.0, 1.0)); }

}  // namespace

double signed_distance(const Manifold& m, const FrontDescriptor& region, const Point& x) {
  switch (region.kind) {
    case FrontKind::Circle:
      return region.radius - geodesic_distance(m, region.center, x);
    case FrontKind::Band: {
      const double v = x[region.axis];
      if (v >= region.lo && v <= region.hi) return std::min(v - region.lo, region.hi - v);
      const double da = std::abs(wrap_delta(v - region.lo, m.side));
      const double db = std::abs(wrap_delta(v - region.hi, m.side));
      return -std::min(da, db);
    }
    case FrontKind::Cap:
      return region.theta0 - colatitude(x);
    case FrontKind::Whole:
      return std::numeric_limits<double>::infinity();
    case FrontKind::Empty:
      return -std::numeric_limits<double>::infinity();
  }
  return 0.0;
}

Point outer_normal(const FrontDescriptor& region, const Point& p) {
  switch (region.kind) {
    case FrontKind::Circle: {
      const double dx = wrap_delta(p[0] - region.center[0], region.manifold.side);
      const double dy = wrap_delta(p[1] - region.center[1], region.manifold.side);
      const double r = std::hypot(dx, dy);
      return {dx / r, dy / r, 0.0};
    }
    case FrontKind::Band: {
      Point n{0.0, 0.0, 0.0};
      const double da = std::abs(wrap_delta(p[region.axis] - region.lo, region.manifold.side));
      const double db = std::abs(wrap_delta(p[region.axis] - region.hi, region.manifold.side));
      n[region.axis] = da < db ? -1.0 : 1.0;
      return n;
    }
    case FrontKind::Cap: {
      const double theta = colatitude(p);
      const double phi = std::atan2(p[1], p[0]);
      return {std::cos(theta) * std::cos(phi), std::cos(theta) * std::sin(phi), -std::sin(theta)};
    }
    default:
      throw Error(ErrorCode::InvalidArgument, "trivial regions have no boundary");
  }
}

Point geodesic_step(const Manifold& m, const Point& x, const Point& dir, double s) {
  if (m.kind == ManifoldKind::FlatTorus) {
    Point y{x[0] + s * dir[0], x[1] + s * dir[1], 0.0};
    for (int i = 0; i < 2; ++i) {
      y[i] = std::fmod(y[i], m.side);
      if (y[i] < 0) y[i] += m.side;
      if (y[i] >= m.side) y[i] = 0.0;
    }
    return y;
  }
  const double c = std::cos(s), sn = std::sin(s);
  Point y{c * x[0] + sn * dir[0], c * x[1] + sn * dir[1], c * x[2] + sn * dir[2]};
  const double norm = std::sqrt(y[0] * y[0] + y[1] * y[1] + y[2] * y[2]);
  for (auto& v : y) v /= norm;
  return y;
}

std::vector<Point> boundary_samples(const FrontDescriptor& region, std::size_t count) {
  std::vector<Point> out;
  out.reserve(count);
  const double L = region.manifold.side;
  switch (region.kind) {
    case FrontKind::Circle:
      for (std::size_t k = 0; k < count; ++k) {
        const double a = 2 * kPi * (k + 0.5) / count;
        Point p{region.center[0] + region.radius * std::cos(a), region.center[1] + region.radius * std::sin(a), 0.0};
        out.push_back(geodesic_step(region.manifold, p, {0.0, 0.0, 0.0}, 0.0));
      }
      break;
    case FrontKind::Band: {
      const int other = 1 - region.axis;
      for (std::size_t k = 0; k < count; ++k) {
        Point p{0.0, 0.0, 0.0};
        p[region.axis] = (k % 2 == 0) ? region.lo : region.hi;
        p[other] = L * ((k / 2) + 0.5) / ((count + 1) / 2);
        out.push_back(p);
      }
      break;
    }
    case FrontKind::Cap: {
      const double s = std::sin(region.theta0), c = std::cos(region.theta0);
      for (std::size_t k = 0; k < count; ++k) {
        const double phi = 2 * kPi * (k + 0.5) / count;
        out.push_back({s * std::cos(phi), s * std::sin(phi), c});
      }
      break;
    }
    default:
      break;
  }
  return out;
}

}  // namespace mbolab
