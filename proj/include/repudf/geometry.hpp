#pragma once

#include "repudf/rng.hpp"
#include "repudf/types.hpp"

namespace repudf {

// Similarity mapping a cloud to zero mean and unit per-axis variance
// (mean squared distance from the centroid equals 3 after applying).
struct NormalizationTransform {
  Vec3 centroid = Vec3::Zero();
  double scale = 1.0;  // divisor; > 0

  PointMatrix apply(const PointMatrix& p) const;
  PointMatrix invert(const PointMatrix& p) const;
  PointCloud apply(const PointCloud& c) const;
  PointCloud invert(const PointCloud& c) const;
};

// Transform computed from the given positions; colors pass through untouched.
// Throws NumericError when the cloud is empty or has near-zero spread.
std::pair<PointCloud, NormalizationTransform> normalize_to_unit(const PointCloud& cloud);

// count points uniform in [-range, range]^3 (or the z = 0 square when planar).
PointMatrix sample_query_points(Index count, double range, Rng& rng, bool planar = false);

struct AugmentParams {
  double scale = 1.0;       // in [0.8, 1.2]
  Vec3 angles = Vec3::Zero();  // radians, each in [-pi, pi]

  Mat3 rotation() const;  // Rz * Ry * Rx
};

AugmentParams draw_augment_params(Rng& rng);

// p -> scale * Rz*Ry*Rx * p about the origin; colors untouched.
PointCloud apply_augmentation(const PointCloud& cloud, const AugmentParams& params);
PointCloud apply_augmentation(const PointCloud& cloud, std::uint64_t seed);

}  // namespace repudf
