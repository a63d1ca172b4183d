#pragma once

#include <string>

#include "mbolab/manifold.hpp"

namespace mbolab {

enum class FrontKind { Circle, Band, Cap, Whole, Empty };

/// Closed-form regions whose boundaries have analytic MCF evolutions.
///
/// Circle: geodesic disk on the torus. Band: {a <= x_axis <= b} on the torus.
/// Cap: {colatitude < theta0} on the sphere. Whole/Empty are the trivial regions.
struct FrontDescriptor {
  FrontKind kind = FrontKind::Empty;
  Manifold manifold;
  Point center{};      // circle
  double radius = 0;   // circle
  int axis = 0;        // band
  double lo = 0;       // band a
  double hi = 0;       // band b
  double theta0 = 0;   // cap

  static FrontDescriptor circle(const Manifold& m, Point center, double radius);
  static FrontDescriptor band(const Manifold& m, int axis, double lo, double hi);
  static FrontDescriptor cap(double theta0);
  static FrontDescriptor whole(const Manifold& m);
  static FrontDescriptor empty(const Manifold& m);

  /// Throws InvalidArgument when the invariants are violated.
  void validate() const;
  std::string describe() const;
};

/// d(x, complement) - d(x, region): positive inside, negative outside.
double signed_distance(const Manifold& m, const FrontDescriptor& region, const Point& x);

/// Outer unit normal at a boundary point, in embedding coordinates.
Point outer_normal(const FrontDescriptor& region, const Point& boundary_point);

/// Moves along the geodesic from x with initial unit tangent `dir` for arc length s.
Point geodesic_step(const Manifold& m, const Point& x, const Point& dir, double s);

/// `count` boundary points spread evenly along the front (both edges for a band).
std::vector<Point> boundary_samples(const FrontDescriptor& region, std::size_t count);

}  // namespace mbolab
