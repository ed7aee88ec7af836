#include "repudf/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>

namespace repudf {

TrainTargets build_targets(const PointMatrix& queries, const PointCloud& reference,
                           int anchor_count, double valid_radius, const KdTree* ref_tree,
                           const std::vector<int>* anchor_ids) {
  reference.validate();
  if (reference.size() == 0)
    throw std::invalid_argument("build_targets: reference cloud is empty");
  if (valid_radius <= 0.0)
    throw std::invalid_argument("build_targets: valid_radius must be positive");

  std::optional<KdTree> local_tree;
  if (!ref_tree) local_tree.emplace(reference.positions);
  const KdTree& tree = ref_tree ? *ref_tree : *local_tree;

  TrainTargets out;
  const Index nq = queries.rows();
  out.udf.resize(nq);
  std::vector<std::array<int, 3>> classes;
  for (Index i = 0; i < nq; ++i) {
    const Neighbor nb = tree.knn(queries.row(i).transpose(), 1)[0];
    out.udf[i] = nb.distance;
    if (nb.distance < valid_radius && reference.has_colors()) {
      out.valid_ids.push_back(static_cast<int>(i));
      std::array<int, 3> cls;
      for (int ch = 0; ch < 3; ++ch) {
        const long bin = std::lround(reference.colors(nb.index, ch) * 255.0);
        cls[ch] = static_cast<int>(std::clamp(bin, 0L, 255L));
      }
      classes.push_back(cls);
    }
  }
  out.rgb_classes.resize(static_cast<Index>(classes.size()), 3);
  for (Index r = 0; r < out.rgb_classes.rows(); ++r)
    for (int ch = 0; ch < 3; ++ch) out.rgb_classes(r, ch) = classes[static_cast<std::size_t>(r)][ch];

  std::vector<int> local_ids;
  if (!anchor_ids) {
    local_ids = fps_sample(reference.positions, anchor_count, 0);
    anchor_ids = &local_ids;
  }
  out.anchor_targets.resize(static_cast<Index>(anchor_ids->size()), 3);
  for (Index r = 0; r < out.anchor_targets.rows(); ++r)
    out.anchor_targets.row(r) = reference.positions.row((*anchor_ids)[static_cast<std::size_t>(r)]);
  return out;
}

namespace {

double l1_dist(const PointMatrix& a, Index i, const PointMatrix& b, Index j) {
  return std::abs(a(i, 0) - b(j, 0)) + std::abs(a(i, 1) - b(j, 1)) + std::abs(a(i, 2) - b(j, 2));
}

// Nearest row of b for each row of a, under the L1 norm, smaller id on ties.
std::vector<int> l1_argmin(const PointMatrix& a, const PointMatrix& b) {
  std::vector<int> ids(static_cast<std::size_t>(a.rows()));
  for (Index i = 0; i < a.rows(); ++i) {
    int best = 0;
    double best_d = l1_dist(a, i, b, 0);
    for (Index j = 1; j < b.rows(); ++j) {
      const double d = l1_dist(a, i, b, j);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(j);
      }
    }
    ids[static_cast<std::size_t>(i)] = best;
  }
  return ids;
}

}  // namespace

Tensor anchor_loss(Tensor anchor_locations, const PointMatrix& targets) {
  if (targets.rows() == 0) throw std::invalid_argument("anchor_loss: empty target set");
  Tape& tape = *anchor_locations.tape;
  const PointMatrix pred = tape.value(anchor_locations);
  if (pred.rows() == 0) throw std::invalid_argument("anchor_loss: empty prediction set");

  const std::vector<int> to_target = l1_argmin(pred, targets);
  PointMatrix matched(pred.rows(), 3);
  for (Index i = 0; i < pred.rows(); ++i) matched.row(i) = targets.row(to_target[static_cast<std::size_t>(i)]);
  Tensor fwd = scale(sum_all(abs(sub(anchor_locations, tape.constant(matched)))),
                     1.0 / static_cast<double>(pred.rows()));

  const std::vector<int> to_pred = l1_argmin(targets, pred);
  Tensor gathered = gather_rows(anchor_locations, to_pred);
  Tensor bwd = scale(sum_all(abs(sub(gathered, tape.constant(targets)))),
                     1.0 / static_cast<double>(targets.rows()));
  return add(fwd, bwd);
}

Tensor udf_loss(Tensor pred, const VecX& target, double band) {
  if (band <= 0.0) throw std::invalid_argument("udf_loss: band must be positive");
  if (pred.rows() != target.size() || pred.cols() != 1)
    throw std::invalid_argument("udf_loss: prediction must be " + std::to_string(target.size()) +
                                " x 1, got " + std::to_string(pred.rows()) + " x " +
                                std::to_string(pred.cols()));
  Tape& tape = *pred.tape;
  MatX clamped = target.cwiseMin(band);
  return mean_all(abs(sub(clamp_max(pred, band), tape.constant(clamped))));
}

Tensor rgb_loss(Tensor logits, const Eigen::Matrix<int, Eigen::Dynamic, 3>& classes) {
  constexpr int bins = 256;
  const Index rows = logits.rows();
  if (rows == 0) throw std::invalid_argument("rgb_loss: no rows; callers skip empty batches");
  if (logits.cols() != 3 * bins || classes.rows() != rows)
    throw std::invalid_argument("rgb_loss: logits " + std::to_string(rows) + " x " +
                                std::to_string(logits.cols()) + " vs classes " +
                                std::to_string(classes.rows()) + " x 3");
  if (classes.minCoeff() < 0 || classes.maxCoeff() >= bins)
    throw std::invalid_argument("rgb_loss: class outside [0, 255]");
  Tape& tape = *logits.tape;
  Tensor acc;
  for (int ch = 0; ch < 3; ++ch) {
    MatX onehot = MatX::Zero(rows, bins);
    for (Index r = 0; r < rows; ++r) onehot(r, classes(r, ch)) = 1.0;
    Tensor picked = sum_all(
        mul(log_softmax_rows(slice_cols(logits, ch * bins, bins)), tape.constant(onehot)));
    acc = ch == 0 ? picked : add(acc, picked);
  }
  return scale(acc, -1.0 / (3.0 * static_cast<double>(rows)));
}

Tensor total_loss(Tensor udf, Tensor rgb, Tensor anchor, const LossWeights& w) {
  return add(add(udf, scale(rgb, w.rgb)), scale(anchor, w.anchor));
}

}  // namespace repudf
