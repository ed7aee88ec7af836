#pragma once

#include "repudf/spatial.hpp"
#include "repudf/tape.hpp"

namespace repudf {

struct TrainTargets {
  VecX udf;                    // distance to the nearest reference point, per query
  std::vector<int> valid_ids;  // queries strictly within the color radius
  Eigen::Matrix<int, Eigen::Dynamic, 3> rgb_classes;  // one row per valid id, bins 0..255
  PointMatrix anchor_targets;                         // FPS subset of the reference cloud
};

// Reference-derived supervision for one batch of queries. Validity is strict:
// a query whose nearest reference point sits exactly at valid_radius gets no
// color target. Ties on the nearest point go to the smaller reference id.
// ref_tree / anchor_ids, when given, must match the reference cloud (they let
// callers hoist the index and FPS out of a loop); anchor FPS starts at id 0.
TrainTargets build_targets(const PointMatrix& queries, const PointCloud& reference,
                           int anchor_count, double valid_radius = 0.1,
                           const KdTree* ref_tree = nullptr,
                           const std::vector<int>* anchor_ids = nullptr);

// Two directional terms, each the mean over the source set of the L1 norm to
// its nearest counterpart (nearest under the same L1 norm, smaller id on
// ties), summed. Differentiates through the predicted locations only.
Tensor anchor_loss(Tensor anchor_locations, const PointMatrix& targets);

// Mean absolute difference after clamping both sides into [0, band].
Tensor udf_loss(Tensor pred, const VecX& target, double band = 0.5);

// Mean cross-entropy over rows and the three 256-way channels. Logit rows
// hold the channel blocks side by side; classes rows align with logit rows.
Tensor rgb_loss(Tensor logits, const Eigen::Matrix<int, Eigen::Dynamic, 3>& classes);

struct LossWeights {
  double rgb = 0.01;
  double anchor = 0.03;
};

// udf + rgb_weight * rgb, then + anchor_weight * anchor, in exactly that
// association so logged components recombine bit-identically.
Tensor total_loss(Tensor udf, Tensor rgb, Tensor anchor, const LossWeights& w);

}  // namespace repudf
