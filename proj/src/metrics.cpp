#include "repudf/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "repudf/spatial.hpp"

namespace repudf {

namespace {

double directional_l1_mean(const PointMatrix& from, const KdTree& to_tree) {
  double sum = 0.0;
  for (Index i = 0; i < from.rows(); ++i)
    sum += to_tree.knn(from.row(i).transpose(), 1)[0].distance;
  return sum / static_cast<double>(from.rows());
}

Index count_matched(const PointMatrix& from, const KdTree& to_tree, double radius) {
  Index matched = 0;
  for (Index i = 0; i < from.rows(); ++i)
    if (to_tree.knn(from.row(i).transpose(), 1)[0].distance < radius) ++matched;
  return matched;
}

}  // namespace

double chamfer_l1(const PointMatrix& a, const PointMatrix& b) {
  if (a.rows() == 0 || b.rows() == 0)
    throw std::invalid_argument("chamfer_l1: both sets must be non-empty");
  const KdTree ta(a, KdTree::Metric::L1);
  const KdTree tb(b, KdTree::Metric::L1);
  return directional_l1_mean(a, tb) + directional_l1_mean(b, ta);
}

double f1_score(const PointMatrix& pred, const PointMatrix& gt, double radius) {
  if (radius <= 0.0) throw std::invalid_argument("f1_score: radius must be positive");
  if (pred.rows() == 0 || gt.rows() == 0) return 0.0;
  const KdTree pred_tree(pred);
  const KdTree gt_tree(gt);
  const double precision =
      static_cast<double>(count_matched(pred, gt_tree, radius)) / static_cast<double>(pred.rows());
  const double recall =
      static_cast<double>(count_matched(gt, pred_tree, radius)) / static_cast<double>(gt.rows());
  if (precision + recall == 0.0) return 0.0;
  return 200.0 * precision * recall / (precision + recall);
}

namespace {

// Mean L1 color distance from each matched `from` point to its nearest
// counterpart; fraction of `from` that matched.
std::pair<double, double> directional_rgb(const PointCloud& from, const PointCloud& to,
                                          const KdTree& to_tree, double radius) {
  double sum = 0.0;
  Index matched = 0;
  for (Index i = 0; i < from.size(); ++i) {
    const Neighbor nb = to_tree.knn(from.positions.row(i).transpose(), 1)[0];
    if (nb.distance >= radius) continue;
    ++matched;
    sum += (from.colors.row(i) - to.colors.row(nb.index)).cwiseAbs().sum();
  }
  const double frac = static_cast<double>(matched) / static_cast<double>(from.size());
  return {matched == 0 ? 0.0 : sum / static_cast<double>(matched), frac};
}

}  // namespace

RgbMetric l1_rgb(const PointCloud& pred, const PointCloud& gt, double radius) {
  pred.validate();
  gt.validate();
  if (radius <= 0.0) throw std::invalid_argument("l1_rgb: radius must be positive");
  if (pred.size() == 0 || gt.size() == 0 || !pred.has_colors() || !gt.has_colors()) {
    RgbMetric r;
    r.pred_unmatched = true;
    r.gt_unmatched = true;
    return r;
  }
  const KdTree pred_tree(pred.positions);
  const KdTree gt_tree(gt.positions);
  const auto [pred_term, pred_frac] = directional_rgb(pred, gt, gt_tree, radius);
  const auto [gt_term, gt_frac] = directional_rgb(gt, pred, pred_tree, radius);
  RgbMetric r;
  r.value = 0.5 * (pred_term + gt_term);
  r.matched_pred_fraction = pred_frac;
  r.matched_gt_fraction = gt_frac;
  r.pred_unmatched = pred_frac == 0.0;
  r.gt_unmatched = gt_frac == 0.0;
  return r;
}

double spacing_uniformity_cv(const PointMatrix& points) {
  const Index n = points.rows();
  if (n < 2) throw std::invalid_argument("spacing_uniformity_cv: need at least 2 points");
  const KdTree tree(points);
  VecX nn(n);
  for (Index i = 0; i < n; ++i) {
    // Two candidates; the one that is not the point itself is the nearest
    // other point (with duplicates it may appear before the point).
    const auto two = tree.knn(points.row(i).transpose(), 2);
    nn[i] = two[0].index != static_cast<int>(i) ? two[0].distance : two[1].distance;
  }
  const double mean = nn.mean();
  if (mean == 0.0) return 0.0;
  const double var = (nn.array() - mean).square().sum() / static_cast<double>(n);
  return std::sqrt(var) / mean;
}

double coverage(const PointMatrix& reference, const PointMatrix& candidates, double radius) {
  if (radius <= 0.0) throw std::invalid_argument("coverage: radius must be positive");
  if (reference.rows() == 0) throw std::invalid_argument("coverage: empty reference");
  if (candidates.rows() == 0) return 0.0;
  const KdTree tree(candidates);
  return static_cast<double>(count_matched(reference, tree, radius)) /
         static_cast<double>(reference.rows());
}

nlohmann::json EvalReport::to_json() const {
  return {{"chamfer_l1", chamfer},
          {"f1", f1},
          {"l1_rgb", rgb.value},
          {"rgb_matched_pred_fraction", rgb.matched_pred_fraction},
          {"rgb_matched_gt_fraction", rgb.matched_gt_fraction},
          {"rgb_pred_unmatched", rgb.pred_unmatched},
          {"rgb_gt_unmatched", rgb.gt_unmatched},
          {"spacing_cv", spacing_cv},
          {"pred_count", pred_count},
          {"gt_count", gt_count}};
}

std::string EvalReport::to_csv() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "chamfer_l1,f1,l1_rgb,rgb_matched_pred_fraction,rgb_matched_gt_fraction,"
                "rgb_pred_unmatched,rgb_gt_unmatched,spacing_cv,pred_count,gt_count\n"
                "%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d,%.17g,%lld,%lld\n",
                chamfer, f1, rgb.value, rgb.matched_pred_fraction, rgb.matched_gt_fraction,
                rgb.pred_unmatched ? 1 : 0, rgb.gt_unmatched ? 1 : 0, spacing_cv,
                static_cast<long long>(pred_count), static_cast<long long>(gt_count));
  return buf;
}

EvalReport evaluate(const PointCloud& pred, const PointCloud& gt, double radius) {
  pred.validate();
  gt.validate();
  EvalReport report;
  report.pred_count = pred.size();
  report.gt_count = gt.size();
  if (pred.size() == 0 || gt.size() == 0) {
    report.rgb.pred_unmatched = true;
    report.rgb.gt_unmatched = true;
    return report;
  }
  report.chamfer = chamfer_l1(pred.positions, gt.positions);
  report.f1 = f1_score(pred.positions, gt.positions, radius);
  report.rgb = l1_rgb(pred, gt, radius);
  report.spacing_cv = pred.size() >= 2 ? spacing_uniformity_cv(pred.positions) : 0.0;
  return report;
}

}  // namespace repudf
