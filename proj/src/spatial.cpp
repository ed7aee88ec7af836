#include "repudf/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace repudf {

namespace {

// Worse = farther, with the larger id losing ties. Used as the heap order so
// the top element is always the one a new candidate must beat.
struct WorseFirst {
  bool operator()(const std::pair<double, int>& a, const std::pair<double, int>& b) const {
    if (a.first != b.first) return a.first < b.first;
    return a.second < b.second;
  }
};

}  // namespace

KdTree::KdTree(const PointMatrix& points, Metric metric) : points_(points), metric_(metric) {
  const int n = static_cast<int>(points_.rows());
  order_.resize(n);
  for (int i = 0; i < n; ++i) order_[i] = i;
  if (n > 0) {
    nodes_.reserve(2 * n / kLeafSize + 8);
    root_ = build(order_, 0, n);
  }
}

double KdTree::point_key(const Vec3& q, int id) const {
  const double dx = q[0] - points_(id, 0);
  const double dy = q[1] - points_(id, 1);
  const double dz = q[2] - points_(id, 2);
  if (metric_ == Metric::L2) return dx * dx + dy * dy + dz * dz;
  return std::abs(dx) + std::abs(dy) + std::abs(dz);
}

double KdTree::box_key(const Vec3& q, const double* lo, const double* hi) const {
  double key = 0.0;
  for (int a = 0; a < 3; ++a) {
    double d = 0.0;
    if (q[a] < lo[a]) d = lo[a] - q[a];
    else if (q[a] > hi[a]) d = q[a] - hi[a];
    key += metric_ == Metric::L2 ? d * d : d;
  }
  return key;
}

int KdTree::build(std::vector<int>& ids, int begin, int end) {
  Node node;
  double lo[3] = {INFINITY, INFINITY, INFINITY}, hi[3] = {-INFINITY, -INFINITY, -INFINITY};
  for (int i = begin; i < end; ++i)
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], points_(ids[i], a));
      hi[a] = std::max(hi[a], points_(ids[i], a));
    }
  node.begin = begin;
  node.end = end;
  if (end - begin <= kLeafSize) {
    node.axis = -1;
  } else {
    int axis = 0;
    for (int a = 1; a < 3; ++a)
      if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;
    const int mid = (begin + end) / 2;
    std::nth_element(ids.begin() + begin, ids.begin() + mid, ids.begin() + end,
                     [&](int x, int y) {
                       if (points_(x, axis) != points_(y, axis))
                         return points_(x, axis) < points_(y, axis);
                       return x < y;
                     });
    node.axis = axis;
    node.split = points_(ids[mid], axis);
  }
  const int self = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  boxes_lo_.insert(boxes_lo_.end(), {lo[0], lo[1], lo[2]});
  boxes_hi_.insert(boxes_hi_.end(), {hi[0], hi[1], hi[2]});
  if (node.axis >= 0) {
    const int mid = (begin + end) / 2;
    const int left = build(ids, begin, mid);
    const int right = build(ids, mid, end);
    nodes_[self].left = left;
    nodes_[self].right = right;
  }
  return self;
}

std::vector<Neighbor> KdTree::knn(const Vec3& query, int k) const {
  const int n = static_cast<int>(size());
  if (k < 1 || k > n)
    throw std::invalid_argument("knn: k = " + std::to_string(k) + " outside [1, " +
                                std::to_string(n) + "]");
  std::priority_queue<std::pair<double, int>, std::vector<std::pair<double, int>>, WorseFirst>
      heap;
  auto offer = [&](int id) {
    const double key = point_key(query, id);
    if (static_cast<int>(heap.size()) < k) {
      heap.emplace(key, id);
      return;
    }
    const auto& worst = heap.top();
    if (key < worst.first || (key == worst.first && id < worst.second)) {
      heap.pop();
      heap.emplace(key, id);
    }
  };
  // Iterative best-effort descent: near child first, far child unless its box
  // provably cannot hold a better (distance, id) candidate.
  std::vector<int> stack{root_};
  while (!stack.empty()) {
    const int ni = stack.back();
    stack.pop_back();
    const Node& node = nodes_[ni];
    if (static_cast<int>(heap.size()) == k &&
        box_key(query, &boxes_lo_[3 * ni], &boxes_hi_[3 * ni]) > heap.top().first)
      continue;
    if (node.axis < 0) {
      for (int i = node.begin; i < node.end; ++i) offer(order_[i]);
      continue;
    }
    const bool left_near = query[node.axis] < node.split;
    stack.push_back(left_near ? node.right : node.left);
    stack.push_back(left_near ? node.left : node.right);
  }
  std::vector<Neighbor> out(heap.size());
  for (int i = static_cast<int>(heap.size()) - 1; !heap.empty(); --i) {
    out[i] = {heap.top().second,
              metric_ == Metric::L2 ? std::sqrt(heap.top().first) : heap.top().first};
    heap.pop();
  }
  return out;
}

std::vector<Neighbor> KdTree::radius(const Vec3& query, double r) const {
  if (!(r >= 0.0)) throw std::invalid_argument("radius: r must be non-negative");
  const double r_key = metric_ == Metric::L2 ? r * r : r;
  std::vector<Neighbor> out;
  if (root_ < 0) return out;
  std::vector<int> stack{root_};
  while (!stack.empty()) {
    const int ni = stack.back();
    stack.pop_back();
    const Node& node = nodes_[ni];
    if (box_key(query, &boxes_lo_[3 * ni], &boxes_hi_[3 * ni]) >= r_key) continue;
    if (node.axis < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const int id = order_[i];
        const double key = point_key(query, id);
        if (key < r_key)
          out.push_back({id, metric_ == Metric::L2 ? std::sqrt(key) : key});
      }
      continue;
    }
    stack.push_back(node.left);
    stack.push_back(node.right);
  }
  std::sort(out.begin(), out.end(), [](const Neighbor& a, const Neighbor& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.index < b.index;
  });
  return out;
}

std::vector<int> fps_sample(const PointMatrix& points, int count, int start_id) {
  const int n = static_cast<int>(points.rows());
  if (n == 0) throw std::invalid_argument("fps_sample: empty point set");
  if (count < 1 || count > n)
    throw std::invalid_argument("fps_sample: count = " + std::to_string(count) +
                                " outside [1, " + std::to_string(n) + "]");
  if (start_id < 0 || start_id >= n)
    throw std::invalid_argument("fps_sample: start_id out of range");
  std::vector<int> picked;
  picked.reserve(count);
  std::vector<bool> selected(static_cast<std::size_t>(n), false);
  VecX min_sq = VecX::Constant(n, INFINITY);
  int current = start_id;
  for (int step = 0; step < count; ++step) {
    picked.push_back(current);
    selected[static_cast<std::size_t>(current)] = true;
    min_sq = min_sq.cwiseMin((points.rowwise() - points.row(current)).rowwise().squaredNorm());
    int best = -1;
    double best_key = -1.0;
    // Only unselected candidates compete, so duplicates of picked points are
    // still chosen at most once; strict > gives the smallest id among ties.
    for (int i = 0; i < n; ++i)
      if (!selected[static_cast<std::size_t>(i)] && min_sq[i] > best_key) {
        best_key = min_sq[i];
        best = i;
      }
    current = best;
  }
  return picked;
}

}  // namespace repudf
