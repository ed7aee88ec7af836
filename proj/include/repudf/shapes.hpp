#pragma once

#include <optional>
#include <string>

#include "repudf/rng.hpp"
#include "repudf/types.hpp"

namespace repudf {

enum class ShapeKind { Sphere, Box, Torus, LProfile };

// Analytic test surfaces with exact unsigned distance. The L-profile is a flat
// L-shaped sheet in the z = 0 plane (an open surface): legs of length a along
// x and b along y, both of width w, centered on the legs' bounding box.
struct Shape {
  ShapeKind kind = ShapeKind::Sphere;
  double p0 = 1.0, p1 = 0.0, p2 = 0.0;

  static Shape sphere(double radius);
  static Shape box(double hx, double hy, double hz);
  static Shape torus(double major, double minor);
  static Shape lprofile(double leg_a, double leg_b, double width);
};

// "name" or "name:p,p,..."; e.g. "torus:1,0.3". Missing parameters take the
// defaults sphere:1, box:1,1,1, torus:1,0.3, lprofile:2,2,0.6.
Shape parse_shape_spec(const std::string& spec);
std::string shape_spec(const Shape& shape);

double eval_udf(const Shape& shape, const Vec3& p);
VecX eval_udf(const Shape& shape, const PointMatrix& points);

// Nearest point on the surface. `ambiguous` (when given) is set when p lies on
// the medial axis within tol, i.e. the nearest point is not unique.
Vec3 closest_surface_point(const Shape& shape, const Vec3& p, bool* ambiguous = nullptr,
                           double tol = 1e-7);

// Unit gradient of the UDF, (p - closest) / udf. Empty when p is within tol of
// the surface or the medial axis.
std::optional<Vec3> eval_grad(const Shape& shape, const Vec3& p, double tol = 1e-7);

// Smooth deterministic position-to-RGB map with channels in (0, 1).
Vec3 position_color(const Vec3& p);

// Area-uniform surface samples with colors from position_color.
PointCloud sample_surface(const Shape& shape, Index count, std::uint64_t seed);

// Samples kept by the hemisphere test normal . view_dir >= 0, then perturbed
// by isotropic Gaussian noise of the given sigma. Colors come from the clean
// surface point. Throws NumericError if the view sees no surface.
PointCloud make_partial_view(const Shape& shape, Index count, const Vec3& view_dir,
                             double noise_sigma, std::uint64_t seed);

}  // namespace repudf
