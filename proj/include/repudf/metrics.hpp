#pragma once

#include <json.hpp>

#include "repudf/types.hpp"

namespace repudf {

// Sum of the two directional means of L1 distance to the nearest point of the
// other set, nearest also under the L1 norm (smaller id on ties).
double chamfer_l1(const PointMatrix& a, const PointMatrix& b);

// 2 * precision * recall / (precision + recall), in percent. A point matches
// when its Euclidean nearest neighbor in the other set lies strictly within
// `radius`. Zero when either set is empty or nothing matches.
double f1_score(const PointMatrix& pred, const PointMatrix& gt, double radius = 0.1);

struct RgbMetric {
  double value = 0.0;  // mean of the two directional terms
  double matched_pred_fraction = 0.0;
  double matched_gt_fraction = 0.0;
  bool pred_unmatched = false;  // no prediction found a reference within the radius
  bool gt_unmatched = false;
};

// Directional term: over points with a strict-radius Euclidean match in the
// other cloud, the mean L1 color difference to that nearest match. A side
// with no matched points contributes zero and raises its flag.
RgbMetric l1_rgb(const PointCloud& pred, const PointCloud& gt, double radius = 0.1);

// Coefficient of variation (population std / mean) of each point's distance
// to its nearest other point. Needs at least 2 points. Zero for a perfectly
// even arrangement.
double spacing_uniformity_cv(const PointMatrix& points);

// Fraction of `reference` points with a `candidates` point strictly within
// `radius`. Empty candidates cover nothing.
double coverage(const PointMatrix& reference, const PointMatrix& candidates, double radius);

struct EvalReport {
  double chamfer = 0.0;
  double f1 = 0.0;
  RgbMetric rgb;
  double spacing_cv = 0.0;  // of the predicted cloud
  Index pred_count = 0;
  Index gt_count = 0;

  nlohmann::json to_json() const;
  std::string to_csv() const;  // header line + one data line
};

EvalReport evaluate(const PointCloud& pred, const PointCloud& gt, double radius = 0.1);

}  // namespace repudf
