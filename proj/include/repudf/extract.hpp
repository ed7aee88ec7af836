#pragma once

#include <json.hpp>

#include "repudf/field.hpp"

namespace repudf {

struct ExtractionConfig {
  Index query_count = 50000;
  double query_range = 3.0;
  double threshold = 0.23;  // strict: points with field value >= this are discarded
  int iterations = 10;      // each iteration shifts, then (optionally) repels
  bool repulsion = true;
  int k_repulsion = 16;     // neighbors per point, excluding the point itself
  double clamp = 0.03;      // per-component displacement bound
  double repulsion_scale = 1.0;
  Index batch_size = 48000;  // evaluation partition; never affects results
  bool planar = false;       // constrain everything to the z = 0 plane
  double zero_grad_eps = 1e-9;

  void validate() const;
  nlohmann::json to_json() const;
  static ExtractionConfig from_json(const nlohmann::json& j);
};

struct ExtractResult {
  PointCloud cloud;  // survivors after all iterations, with final field values
  Index initial_count = 0;
  Index surviving_count = 0;
  int iterations = 0;
  bool empty = false;  // nothing survived the threshold
};

PointMatrix init_queries(Index count, double range, std::uint64_t seed, bool planar);

// One projection step: q -= f(q) * grad_hat(q). Points whose gradient is
// undefined or numerically zero stay put. Evaluation runs in batches of
// batch_size; the partition cannot change any output.
void udf_shift_step(const UdfField& field, PointMatrix& points, Index batch_size);

// Inverse-distance repulsion against the k nearest neighbors in the given
// snapshot, accumulated in ascending neighbor id, scaled, then clamped per
// component. Coincident pairs get a deterministic unit push derived from the
// two ids, opposite in sign for the two members. In planar mode pushes stay
// in the plane.
PointMatrix repulsion_displacements(const PointMatrix& snapshot, int k, double clamp,
                                    double scale, bool planar);

// Applies displacements computed against a frozen copy of `points`.
void repulsion_step(PointMatrix& points, int k, double clamp, double scale, bool planar);

ExtractResult extract_surface(const UdfField& field, const ExtractionConfig& cfg,
                              std::uint64_t seed);

}  // namespace repudf
