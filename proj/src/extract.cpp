#include "repudf/extract.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "repudf/geometry.hpp"
#include "repudf/spatial.hpp"

namespace repudf {

void ExtractionConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("extraction config: " + what);
  };
  require(query_count >= 1, "query_count must be >= 1");
  require(query_range > 0.0, "query_range must be positive");
  require(threshold > 0.0, "threshold must be positive");
  require(iterations >= 0, "iterations must be >= 0");
  require(k_repulsion >= 1, "k_repulsion must be >= 1");
  require(clamp > 0.0, "clamp must be positive");
  require(repulsion_scale > 0.0, "repulsion_scale must be positive");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(zero_grad_eps >= 0.0, "zero_grad_eps must be >= 0");
}

nlohmann::json ExtractionConfig::to_json() const {
  return {{"query_count", query_count},
          {"query_range", query_range},
          {"threshold", threshold},
          {"iterations", iterations},
          {"repulsion", repulsion},
          {"k_repulsion", k_repulsion},
          {"clamp", clamp},
          {"repulsion_scale", repulsion_scale},
          {"batch_size", batch_size},
          {"planar", planar},
          {"zero_grad_eps", zero_grad_eps}};
}

ExtractionConfig ExtractionConfig::from_json(const nlohmann::json& j) {
  ExtractionConfig cfg;
  cfg.query_count = j.value("query_count", cfg.query_count);
  cfg.query_range = j.value("query_range", cfg.query_range);
  cfg.threshold = j.value("threshold", cfg.threshold);
  cfg.iterations = j.value("iterations", cfg.iterations);
  cfg.repulsion = j.value("repulsion", cfg.repulsion);
  cfg.k_repulsion = j.value("k_repulsion", cfg.k_repulsion);
  cfg.clamp = j.value("clamp", cfg.clamp);
  cfg.repulsion_scale = j.value("repulsion_scale", cfg.repulsion_scale);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.planar = j.value("planar", cfg.planar);
  cfg.zero_grad_eps = j.value("zero_grad_eps", cfg.zero_grad_eps);
  cfg.validate();
  return cfg;
}

namespace {

// Fixed batch grid, worker w taking batches w, w + T, ... so every batch
// writes the same preallocated slots no matter how many threads run.
template <typename Fn>
void for_batches(Index total, Index batch_size, const Fn& fn) {
  if (total <= 0) return;
  const Index batches = (total + batch_size - 1) / batch_size;
  const int threads = std::min<Index>(thread_count(), batches);
  auto run = [&](Index first) {
    for (Index b = first; b < batches; b += threads) {
      const Index begin = b * batch_size;
      fn(begin, std::min(batch_size, total - begin));
    }
  };
  if (threads <= 1) {
    run(0);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) pool.emplace_back(run, static_cast<Index>(t));
  for (auto& t : pool) t.join();
}

constexpr double kCoincidentSq = 1e-24;
constexpr std::uint64_t kPushStream = 0x7265706cULL;

// Unit push for a coincident pair, a function of the unordered id pair alone.
Vec3 pseudo_push(int a, int b, bool planar) {
  Rng rng(Rng::derive(Rng::derive(kPushStream, static_cast<std::uint64_t>(a)),
                      static_cast<std::uint64_t>(b)));
  if (planar) {
    const double angle = rng.uniform(0.0, 2.0 * M_PI);
    return Vec3(std::cos(angle), std::sin(angle), 0.0);
  }
  return rng.unit_vec3();
}

}  // namespace

PointMatrix init_queries(Index count, double range, std::uint64_t seed, bool planar) {
  Rng rng(seed);
  return sample_query_points(count, range, rng, planar);
}

void udf_shift_step(const UdfField& field, PointMatrix& points, Index batch_size) {
  if (batch_size < 1) throw std::invalid_argument("udf_shift_step: batch_size must be >= 1");
  for_batches(points.rows(), batch_size, [&](Index begin, Index count) {
    const PointMatrix block = points.middleRows(begin, count);
    const VecX f = field.eval(block);
    std::vector<bool> defined;
    const PointMatrix g = field.gradient(block, defined);
    for (Index i = 0; i < count; ++i)
      if (defined[static_cast<std::size_t>(i)])
        points.row(begin + i) -= f[i] * g.row(i);
  });
}

PointMatrix repulsion_displacements(const PointMatrix& snapshot, int k, double clamp,
                                    double scale, bool planar) {
  if (k < 1) throw std::invalid_argument("repulsion: k must be >= 1");
  if (clamp <= 0.0) throw std::invalid_argument("repulsion: clamp must be positive");
  const Index n = snapshot.rows();
  PointMatrix disp = PointMatrix::Zero(n, 3);
  if (n <= 1) return disp;
  const int kk = std::min<Index>(k, n - 1);

  const KdTree tree(snapshot);
  for_batches(n, 1024, [&](Index begin, Index count) {
    std::vector<int> picked;
    for (Index i = begin; i < begin + count; ++i) {
      // k + 1 candidates so dropping the point itself still leaves k. With
      // duplicates the point may not be among its own candidates; either way
      // the k nearest other ids remain.
      const auto candidates = tree.knn(snapshot.row(i).transpose(), kk + 1);
      picked.clear();
      for (const Neighbor& nb : candidates) {
        if (nb.index == static_cast<int>(i)) continue;
        picked.push_back(nb.index);
        if (static_cast<int>(picked.size()) == kk) break;
      }
      std::sort(picked.begin(), picked.end());

      Vec3 force = Vec3::Zero();
      for (int j : picked) {
        const Vec3 diff = (snapshot.row(i) - snapshot.row(j)).transpose();
        const double d2 = diff.squaredNorm();
        if (d2 < kCoincidentSq) {
          const int lo = std::min<int>(static_cast<int>(i), j);
          const int hi = std::max<int>(static_cast<int>(i), j);
          const double sign = static_cast<int>(i) == lo ? 1.0 : -1.0;
          // Magnitude saturates the clamp; only the direction matters.
          force += sign / kCoincidentSq * pseudo_push(lo, hi, planar);
        } else {
          force += diff / d2;
        }
      }
      Vec3 d = scale * force;
      for (int c = 0; c < 3; ++c) d[c] = std::clamp(d[c], -clamp, clamp);
      if (planar) d.z() = 0.0;
      disp.row(i) = d.transpose();
    }
  });
  return disp;
}

void repulsion_step(PointMatrix& points, int k, double clamp, double scale, bool planar) {
  points += repulsion_displacements(points, k, clamp, scale, planar);
}

ExtractResult extract_surface(const UdfField& field, const ExtractionConfig& cfg,
                              std::uint64_t seed) {
  cfg.validate();
  const PointMatrix queries = init_queries(cfg.query_count, cfg.query_range, seed, cfg.planar);

  VecX f0(queries.rows());
  for_batches(queries.rows(), cfg.batch_size, [&](Index begin, Index count) {
    f0.segment(begin, count) = field.eval(queries.middleRows(begin, count));
  });

  std::vector<Index> keep;
  for (Index i = 0; i < queries.rows(); ++i)
    if (f0[i] < cfg.threshold) keep.push_back(i);

  ExtractResult result;
  result.initial_count = queries.rows();
  result.surviving_count = static_cast<Index>(keep.size());
  result.iterations = cfg.iterations;
  if (keep.empty()) {
    result.empty = true;
    result.cloud.positions.resize(0, 3);
    result.cloud.udf.resize(0);
    if (field.has_colors()) result.cloud.colors.resize(0, 3);
    return result;
  }

  PointMatrix pts(static_cast<Index>(keep.size()), 3);
  for (Index i = 0; i < pts.rows(); ++i) pts.row(i) = queries.row(keep[static_cast<std::size_t>(i)]);

  for (int it = 0; it < cfg.iterations; ++it) {
    udf_shift_step(field, pts, cfg.batch_size);
    if (cfg.repulsion)
      repulsion_step(pts, cfg.k_repulsion, cfg.clamp, cfg.repulsion_scale, cfg.planar);
  }

  result.cloud.positions = pts;
  result.cloud.udf.resize(pts.rows());
  for_batches(pts.rows(), cfg.batch_size, [&](Index begin, Index count) {
    result.cloud.udf.segment(begin, count) = field.eval(pts.middleRows(begin, count));
  });
  if (field.has_colors()) {
    result.cloud.colors.resize(pts.rows(), 3);
    for_batches(pts.rows(), cfg.batch_size, [&](Index begin, Index count) {
      result.cloud.colors.middleRows(begin, count) = field.colors(pts.middleRows(begin, count));
    });
  }
  return result;
}

}  // namespace repudf
