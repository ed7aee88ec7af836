#pragma once

#include <vector>

#include "repudf/types.hpp"

namespace repudf {

struct Neighbor {
  int index = -1;
  double distance = 0.0;
};

// Exact nearest-neighbor index over a fixed set of points. Queries return
// precisely what a brute-force scan with the same arithmetic would: squared
// (or absolute, for L1) distances are accumulated axis by axis in x, y, z
// order, ties are broken by the smaller point id, and no approximation is
// applied anywhere. Duplicate points are legal.
class KdTree {
 public:
  enum class Metric { L2, L1 };

  explicit KdTree(const PointMatrix& points, Metric metric = Metric::L2);

  Index size() const { return points_.rows(); }
  Metric metric() const { return metric_; }

  // k nearest neighbors sorted by (distance, id) ascending. k must be in
  // [1, size()]. Distances are Euclidean (or L1) lengths, not squares.
  std::vector<Neighbor> knn(const Vec3& query, int k) const;

  // All points with distance strictly less than radius, sorted by (distance, id).
  std::vector<Neighbor> radius(const Vec3& query, double r) const;

 private:
  struct Node {
    int axis = -1;       // -1 marks a leaf
    double split = 0.0;  // coordinate threshold on `axis`
    int left = -1, right = -1;
    int begin = 0, end = 0;  // index range into order_ for leaves
  };

  double point_key(const Vec3& q, int id) const;  // squared L2 or plain L1
  double box_key(const Vec3& q, const double* lo, const double* hi) const;
  int build(std::vector<int>& ids, int begin, int end);

  PointMatrix points_;
  Metric metric_;
  std::vector<Node> nodes_;
  std::vector<double> boxes_lo_, boxes_hi_;  // 3 entries per node, tight bounds
  std::vector<int> order_;
  int root_ = -1;
  static constexpr int kLeafSize = 16;
};

// Greedy farthest point sampling under Euclidean distance. The first pick is
// start_id; each next pick maximizes the distance to the selected set, ties
// resolved toward the smaller id. count must be in [1, n].
std::vector<int> fps_sample(const PointMatrix& points, int count, int start_id = 0);

}  // namespace repudf
