#include "repudf/geometry.hpp"

#include <atomic>
#include <cmath>

namespace repudf {

namespace {
std::atomic<int> g_threads{1};
}

int thread_count() { return g_threads.load(); }

void set_thread_count(int n) { g_threads.store(n < 1 ? 1 : n); }

PointMatrix NormalizationTransform::apply(const PointMatrix& p) const {
  return (p.rowwise() - centroid.transpose()) / scale;
}

PointMatrix NormalizationTransform::invert(const PointMatrix& p) const {
  return (p * scale).rowwise() + centroid.transpose();
}

PointCloud NormalizationTransform::apply(const PointCloud& c) const {
  PointCloud out = c;
  out.positions = apply(c.positions);
  return out;
}

PointCloud NormalizationTransform::invert(const PointCloud& c) const {
  PointCloud out = c;
  out.positions = invert(c.positions);
  return out;
}

std::pair<PointCloud, NormalizationTransform> normalize_to_unit(const PointCloud& cloud) {
  cloud.validate();
  if (cloud.size() == 0) throw NumericError("normalize_to_unit: empty cloud");
  NormalizationTransform t;
  t.centroid = cloud.positions.colwise().mean().transpose();
  const double msd =
      (cloud.positions.rowwise() - t.centroid.transpose()).rowwise().squaredNorm().mean();
  if (!(msd / 3.0 > 1e-24))
    throw NumericError("normalize_to_unit: degenerate cloud, mean squared spread " +
                       std::to_string(msd));
  t.scale = std::sqrt(msd / 3.0);
  return {t.apply(cloud), t};
}

PointMatrix sample_query_points(Index count, double range, Rng& rng, bool planar) {
  if (count < 1 || !(range > 0.0))
    throw std::invalid_argument("sample_query_points: count >= 1 and range > 0 required");
  PointMatrix q(count, 3);
  for (Index i = 0; i < count; ++i) {
    q(i, 0) = rng.uniform(-range, range);
    q(i, 1) = rng.uniform(-range, range);
    q(i, 2) = planar ? 0.0 : rng.uniform(-range, range);
  }
  return q;
}

Mat3 AugmentParams::rotation() const {
  const double cx = std::cos(angles[0]), sx = std::sin(angles[0]);
  const double cy = std::cos(angles[1]), sy = std::sin(angles[1]);
  const double cz = std::cos(angles[2]), sz = std::sin(angles[2]);
  Mat3 rx, ry, rz;
  rx << 1, 0, 0, 0, cx, -sx, 0, sx, cx;
  ry << cy, 0, sy, 0, 1, 0, -sy, 0, cy;
  rz << cz, -sz, 0, sz, cz, 0, 0, 0, 1;
  return rz * ry * rx;
}

AugmentParams draw_augment_params(Rng& rng) {
  AugmentParams p;
  p.scale = rng.uniform(0.8, 1.2);
  for (int a = 0; a < 3; ++a) p.angles[a] = rng.uniform(-M_PI, M_PI);
  return p;
}

PointCloud apply_augmentation(const PointCloud& cloud, const AugmentParams& params) {
  cloud.validate();
  PointCloud out = cloud;
  const Mat3 m = params.scale * params.rotation();
  out.positions = cloud.positions * m.transpose();
  return out;
}

PointCloud apply_augmentation(const PointCloud& cloud, std::uint64_t seed) {
  Rng rng(seed);
  return apply_augmentation(cloud, draw_augment_params(rng));
}

}  // namespace repudf
