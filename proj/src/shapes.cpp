#include "repudf/shapes.hpp"

#include <cmath>
#include <sstream>

namespace repudf {

Shape Shape::sphere(double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("sphere: radius must be positive");
  return {ShapeKind::Sphere, radius, 0.0, 0.0};
}

Shape Shape::box(double hx, double hy, double hz) {
  if (!(hx > 0.0 && hy > 0.0 && hz > 0.0))
    throw std::invalid_argument("box: half extents must be positive");
  return {ShapeKind::Box, hx, hy, hz};
}

Shape Shape::torus(double major, double minor) {
  if (!(major > 0.0 && minor > 0.0 && minor < major))
    throw std::invalid_argument("torus: need 0 < minor < major");
  return {ShapeKind::Torus, major, minor, 0.0};
}

Shape Shape::lprofile(double leg_a, double leg_b, double width) {
  if (!(width > 0.0 && leg_a >= width && leg_b >= width))
    throw std::invalid_argument("lprofile: need 0 < width <= min(leg_a, leg_b)");
  return {ShapeKind::LProfile, leg_a, leg_b, width};
}

Shape parse_shape_spec(const std::string& spec) {
  const auto colon = spec.find(':');
  const std::string name = spec.substr(0, colon);
  std::vector<double> params;
  if (colon != std::string::npos) {
    std::stringstream ss(spec.substr(colon + 1));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        throw std::invalid_argument("shape spec: bad number '" + tok + "' in '" + spec + "'");
      }
      if (used != tok.size())
        throw std::invalid_argument("shape spec: bad number '" + tok + "' in '" + spec + "'");
      params.push_back(v);
    }
  }
  auto arg = [&](std::size_t i, double fallback) {
    return i < params.size() ? params[i] : fallback;
  };
  if (name == "sphere" && params.size() <= 1) return Shape::sphere(arg(0, 1.0));
  if (name == "box" && params.size() <= 3)
    return Shape::box(arg(0, 1.0), arg(1, 1.0), arg(2, 1.0));
  if (name == "torus" && params.size() <= 2) return Shape::torus(arg(0, 1.0), arg(1, 0.3));
  if (name == "lprofile" && params.size() <= 3)
    return Shape::lprofile(arg(0, 2.0), arg(1, 2.0), arg(2, 0.6));
  throw std::invalid_argument("shape spec: unrecognized '" + spec + "'");
}

std::string shape_spec(const Shape& shape) {
  std::ostringstream out;
  out.precision(17);
  switch (shape.kind) {
    case ShapeKind::Sphere: out << "sphere:" << shape.p0; break;
    case ShapeKind::Box: out << "box:" << shape.p0 << "," << shape.p1 << "," << shape.p2; break;
    case ShapeKind::Torus: out << "torus:" << shape.p0 << "," << shape.p1; break;
    case ShapeKind::LProfile:
      out << "lprofile:" << shape.p0 << "," << shape.p1 << "," << shape.p2;
      break;
  }
  return out.str();
}

namespace {

// 2D closest point inside/onto an axis-aligned rectangle.
Eigen::Vector2d clamp_rect(const Eigen::Vector2d& u, double x1, double y1) {
  return {std::clamp(u.x(), 0.0, x1), std::clamp(u.y(), 0.0, y1)};
}

struct Closest {
  Vec3 point = Vec3::Zero();
  bool ambiguous = false;
};

Closest closest_impl(const Shape& s, const Vec3& p, double tol) {
  Closest c;
  switch (s.kind) {
    case ShapeKind::Sphere: {
      const double n = p.norm();
      if (n < tol) {
        c.ambiguous = true;
        c.point = Vec3(s.p0, 0, 0);
        return c;
      }
      c.point = p * (s.p0 / n);
      return c;
    }
    case ShapeKind::Box: {
      const Vec3 h(s.p0, s.p1, s.p2);
      const bool inside =
          std::abs(p.x()) <= h.x() && std::abs(p.y()) <= h.y() && std::abs(p.z()) <= h.z();
      if (!inside) {
        c.point = p.cwiseMax(-h).cwiseMin(h);
        return c;
      }
      // Six face distances; nearest face wins, near-ties are medial points.
      double best = INFINITY, second = INFINITY;
      int best_axis = 0;
      double best_sign = 1.0;
      for (int a = 0; a < 3; ++a)
        for (double sign : {1.0, -1.0}) {
          const double d = h[a] - sign * p[a];
          if (d < best) {
            second = best;
            best = d;
            best_axis = a;
            best_sign = sign;
          } else if (d < second) {
            second = d;
          }
        }
      c.ambiguous = second - best < tol;
      c.point = p;
      c.point[best_axis] = best_sign * h[best_axis];
      return c;
    }
    case ShapeKind::Torus: {
      const double rho = std::sqrt(p.x() * p.x() + p.y() * p.y());
      if (rho < tol) {
        c.ambiguous = true;
        c.point = Vec3(s.p0 + s.p1, 0, 0);
        return c;
      }
      const Vec3 ring(p.x() * (s.p0 / rho), p.y() * (s.p0 / rho), 0.0);
      const Vec3 v = p - ring;
      const double vn = v.norm();
      if (vn < tol) {
        c.ambiguous = true;
        c.point = ring + Vec3(0, 0, s.p1);
        return c;
      }
      c.point = ring + v * (s.p1 / vn);
      return c;
    }
    case ShapeKind::LProfile: {
      const Eigen::Vector2d offset(s.p0 / 2.0, s.p1 / 2.0);
      const Eigen::Vector2d u(p.x() + offset.x(), p.y() + offset.y());
      const Eigen::Vector2d cp1 = clamp_rect(u, s.p0, s.p2);  // leg along x
      const Eigen::Vector2d cp2 = clamp_rect(u, s.p2, s.p1);  // leg along y
      const double d1 = (u - cp1).norm(), d2 = (u - cp2).norm();
      const Eigen::Vector2d cp2d = d1 <= d2 ? cp1 : cp2;
      c.ambiguous = std::abs(d1 - d2) < tol && (cp1 - cp2).norm() > tol;
      c.point = Vec3(cp2d.x() - offset.x(), cp2d.y() - offset.y(), 0.0);
      return c;
    }
  }
  throw std::logic_error("closest_impl: unreachable");
}

}  // namespace

Vec3 closest_surface_point(const Shape& shape, const Vec3& p, bool* ambiguous, double tol) {
  const Closest c = closest_impl(shape, p, tol);
  if (ambiguous) *ambiguous = c.ambiguous;
  return c.point;
}

double eval_udf(const Shape& shape, const Vec3& p) {
  switch (shape.kind) {
    case ShapeKind::Sphere: return std::abs(p.norm() - shape.p0);
    case ShapeKind::Box: {
      const Vec3 h(shape.p0, shape.p1, shape.p2);
      const Vec3 q = p.cwiseAbs() - h;
      const double outside = q.cwiseMax(0.0).norm();
      if (outside > 0.0) return outside;
      return -q.maxCoeff();  // nearest face from the inside
    }
    case ShapeKind::Torus: {
      const double rho = std::sqrt(p.x() * p.x() + p.y() * p.y());
      const double d = std::sqrt((rho - shape.p0) * (rho - shape.p0) + p.z() * p.z());
      return std::abs(d - shape.p1);
    }
    case ShapeKind::LProfile: {
      const Closest c = closest_impl(shape, p, 0.0);
      return (p - c.point).norm();
    }
  }
  throw std::logic_error("eval_udf: unreachable");
}

VecX eval_udf(const Shape& shape, const PointMatrix& points) {
  VecX out(points.rows());
  for (Index i = 0; i < points.rows(); ++i) out[i] = eval_udf(shape, Vec3(points.row(i).transpose()));
  return out;
}

std::optional<Vec3> eval_grad(const Shape& shape, const Vec3& p, double tol) {
  bool ambiguous = false;
  const Vec3 cp = closest_surface_point(shape, p, &ambiguous, tol);
  if (ambiguous) return std::nullopt;
  const Vec3 d = p - cp;
  const double n = d.norm();
  if (n < tol) return std::nullopt;  // on or too close to the surface
  return Vec3(d / n);
}

Vec3 position_color(const Vec3& p) {
  const Vec3 k0(2.1, 0.7, 1.3), k1(0.9, 2.3, 0.5), k2(1.7, 1.1, 2.9);
  return {0.5 + 0.5 * std::sin(k0.dot(p)),
          0.5 + 0.5 * std::sin(k1.dot(p) + 2.0),
          0.5 + 0.5 * std::sin(k2.dot(p) + 4.0)};
}

namespace {

void sample_one(const Shape& s, Rng& rng, Vec3& point, Vec3& normal) {
  switch (s.kind) {
    case ShapeKind::Sphere: {
      const double z = rng.uniform(-1.0, 1.0);
      const double phi = rng.uniform(0.0, 2.0 * M_PI);
      const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
      normal = Vec3(rho * std::cos(phi), rho * std::sin(phi), z);
      point = s.p0 * normal;
      return;
    }
    case ShapeKind::Box: {
      const Vec3 h(s.p0, s.p1, s.p2);
      const double areas[3] = {h.y() * h.z(), h.x() * h.z(), h.x() * h.y()};
      const double total = 2.0 * (areas[0] + areas[1] + areas[2]);
      double pick = rng.uniform(0.0, total);
      int axis = 0;
      double sign = 1.0;
      for (int a = 0; a < 3 && pick >= 0.0; ++a)
        for (double sg : {1.0, -1.0}) {
          if (pick < areas[a]) {
            axis = a;
            sign = sg;
            pick = -1.0;
            break;
          }
          pick -= areas[a];
        }
      point[axis] = sign * h[axis];
      const int u = (axis + 1) % 3, v = (axis + 2) % 3;
      point[u] = rng.uniform(-h[u], h[u]);
      point[v] = rng.uniform(-h[v], h[v]);
      normal = Vec3::Zero();
      normal[axis] = sign;
      return;
    }
    case ShapeKind::Torus: {
      double theta = 0.0;
      do {
        theta = rng.uniform(0.0, 2.0 * M_PI);
      } while (rng.uniform01() >= (s.p0 + s.p1 * std::cos(theta)) / (s.p0 + s.p1));
      const double phi = rng.uniform(0.0, 2.0 * M_PI);
      const Vec3 ring(s.p0 * std::cos(phi), s.p0 * std::sin(phi), 0.0);
      normal = Vec3(std::cos(theta) * std::cos(phi), std::cos(theta) * std::sin(phi),
                    std::sin(theta));
      point = ring + s.p1 * normal;
      return;
    }
    case ShapeKind::LProfile: {
      const double area1 = s.p0 * s.p2;             // [0,a] x [0,w]
      const double area2 = s.p2 * (s.p1 - s.p2);    // [0,w] x [w,b]
      Eigen::Vector2d u;
      if (rng.uniform(0.0, area1 + area2) < area1)
        u = {rng.uniform(0.0, s.p0), rng.uniform(0.0, s.p2)};
      else
        u = {rng.uniform(0.0, s.p2), rng.uniform(s.p2, s.p1)};
      point = Vec3(u.x() - s.p0 / 2.0, u.y() - s.p1 / 2.0, 0.0);
      normal = Vec3(0, 0, 1);
      return;
    }
  }
  throw std::logic_error("sample_one: unreachable");
}

}  // namespace

PointCloud sample_surface(const Shape& shape, Index count, std::uint64_t seed) {
  if (count < 0) throw std::invalid_argument("sample_surface: negative count");
  Rng rng(seed);
  PointCloud out;
  out.positions.resize(count, 3);
  out.colors.resize(count, 3);
  Vec3 p, n;
  for (Index i = 0; i < count; ++i) {
    sample_one(shape, rng, p, n);
    out.positions.row(i) = p.transpose();
    out.colors.row(i) = position_color(p).transpose();
  }
  return out;
}

PointCloud make_partial_view(const Shape& shape, Index count, const Vec3& view_dir,
                             double noise_sigma, std::uint64_t seed) {
  if (count < 0) throw std::invalid_argument("make_partial_view: negative count");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("make_partial_view: negative sigma");
  const double vn = view_dir.norm();
  if (vn < 1e-12) throw std::invalid_argument("make_partial_view: zero view direction");
  const Vec3 v = view_dir / vn;
  Rng rng(seed);
  PointCloud out;
  out.positions.resize(count, 3);
  out.colors.resize(count, 3);
  Vec3 p, n;
  Index taken = 0;
  std::uint64_t attempts = 0;
  const std::uint64_t max_attempts = 1000ull * static_cast<std::uint64_t>(count) + 1000ull;
  while (taken < count) {
    if (++attempts > max_attempts)
      throw NumericError("make_partial_view: view direction sees no surface");
    sample_one(shape, rng, p, n);
    if (n.dot(v) < 0.0) continue;
    out.colors.row(taken) = position_color(p).transpose();
    out.positions.row(taken) = (p + noise_sigma * rng.normal_vec3()).transpose();
    ++taken;
  }
  return out;
}

}  // namespace repudf
