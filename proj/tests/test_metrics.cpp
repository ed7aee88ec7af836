#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "repudf/geometry.hpp"
#include "repudf/metrics.hpp"
#include "repudf/rng.hpp"
#include "repudf/shapes.hpp"

using namespace repudf;

namespace {

PointMatrix random_points(Index n, std::uint64_t seed, double spread = 1.0) {
  Rng rng(seed);
  PointMatrix p(n, 3);
  for (Index i = 0; i < n; ++i) p.row(i) = (rng.normal_vec3() * spread).transpose();
  return p;
}

PointCloud colored_cloud(Index n, std::uint64_t seed) {
  PointCloud c;
  c.positions = random_points(n, seed, 0.8);
  c.colors.resize(n, 3);
  Rng rng(seed + 1000);
  for (Index i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) c.colors(i, j) = rng.uniform01();
  return c;
}

}  // namespace

TEST_CASE("identical clouds score perfectly") {
  PointMatrix p = random_points(80, 1);
  CHECK(chamfer_l1(p, p) == 0.0);
  CHECK(f1_score(p, p, 0.1) == 100.0);
  CHECK(coverage(p, p, 0.1) == 1.0);
  PointCloud c = colored_cloud(40, 2);
  RgbMetric m = l1_rgb(c, c, 0.1);
  CHECK(m.value == 0.0);
  CHECK(m.matched_pred_fraction == 1.0);
  CHECK(m.matched_gt_fraction == 1.0);
  CHECK_FALSE(m.pred_unmatched);
  CHECK_FALSE(m.gt_unmatched);
}

TEST_CASE("chamfer between singletons is twice the L1 distance") {
  PointMatrix a(1, 3), b(1, 3);
  a << 0.0, 0.0, 0.0;
  b << 1.0, 2.0, 3.0;
  CHECK(chamfer_l1(a, b) == doctest::Approx(12.0));
  CHECK_THROWS_AS(chamfer_l1(a, PointMatrix(0, 3)), std::invalid_argument);
  CHECK_THROWS_AS(chamfer_l1(PointMatrix(0, 3), b), std::invalid_argument);
}

TEST_CASE("f1 with one stray prediction") {
  // Two predictions, one on target: precision 1/2, recall 1/1, F1 = 66.66.
  PointMatrix pred(2, 3), gt(1, 3);
  pred << 0.0, 0.0, 0.0, 5.0, 0.0, 0.0;
  gt << 0.01, 0.0, 0.0;
  CHECK(f1_score(pred, gt, 0.1) == doctest::Approx(200.0 / 3.0));
  // Strictness: a match at exactly the radius does not count.
  PointMatrix at(1, 3);
  at << 0.25, 0.0, 0.0;
  PointMatrix origin(1, 3);
  origin << 0.0, 0.0, 0.0;
  CHECK(f1_score(at, origin, 0.25) == 0.0);
  CHECK(f1_score(at, origin, 0.2500001) == 100.0);
  CHECK(f1_score(PointMatrix(0, 3), origin, 0.1) == 0.0);
  CHECK(f1_score(origin, PointMatrix(0, 3), 0.1) == 0.0);
  CHECK_THROWS_AS(f1_score(at, origin, 0.0), std::invalid_argument);
}

TEST_CASE("rgb metric on one matched pair") {
  PointCloud pred, gt;
  pred.positions.resize(1, 3);
  pred.positions << 0.0, 0.0, 0.0;
  pred.colors.resize(1, 3);
  pred.colors << 0.1, 0.2, 0.3;
  gt = pred;
  gt.positions << 0.05, 0.0, 0.0;
  gt.colors << 0.3, 0.4, 0.5;
  RgbMetric m = l1_rgb(pred, gt, 0.1);
  CHECK(m.value == doctest::Approx(0.6));
  CHECK(m.matched_pred_fraction == 1.0);
  CHECK(m.matched_gt_fraction == 1.0);
}

TEST_CASE("rgb metric flags unmatched sides") {
  PointCloud pred = colored_cloud(10, 3);
  PointCloud gt = colored_cloud(10, 4);
  gt.positions.array() += 100.0;
  RgbMetric m = l1_rgb(pred, gt, 0.1);
  CHECK(m.value == 0.0);
  CHECK(m.pred_unmatched);
  CHECK(m.gt_unmatched);
  CHECK(m.matched_pred_fraction == 0.0);
  // Colorless clouds cannot be compared.
  PointCloud bare;
  bare.positions = pred.positions;
  RgbMetric m2 = l1_rgb(bare, gt, 0.1);
  CHECK(m2.pred_unmatched);
  CHECK(m2.gt_unmatched);
}

TEST_CASE("metrics agree with quadratic references on random clouds") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    PointMatrix a = random_points(70, seed * 3 + 1, 0.6);
    PointMatrix b = random_points(55, seed * 3 + 2, 0.6);
    CHECK(chamfer_l1(a, b) == doctest::Approx(oracle::chamfer_l1(a, b)).epsilon(1e-12));
    for (double radius : {0.05, 0.3, 1.0})
      CHECK(f1_score(a, b, radius) == doctest::Approx(oracle::f1(a, b, radius)).epsilon(1e-12));
    PointCloud ca = colored_cloud(40, seed * 3 + 1);
    PointCloud cb = colored_cloud(30, seed * 3 + 2);
    RgbMetric got = l1_rgb(ca, cb, 0.4);
    oracle::RgbOracle want = oracle::l1_rgb(ca, cb, 0.4);
    CHECK(got.value == doctest::Approx(want.value).epsilon(1e-12));
    CHECK(got.matched_pred_fraction == want.matched_pred_fraction);
    CHECK(got.matched_gt_fraction == want.matched_gt_fraction);
  }
}

TEST_CASE("chamfer and f1 are translation invariant") {
  PointMatrix a = random_points(50, 7, 0.5);
  PointMatrix b = random_points(45, 8, 0.5);
  PointMatrix at = a, bt = b;
  at.rowwise() += RowVec3(3.0, -2.0, 1.0);
  bt.rowwise() += RowVec3(3.0, -2.0, 1.0);
  CHECK(chamfer_l1(at, bt) == doctest::Approx(chamfer_l1(a, b)).epsilon(1e-9));
  CHECK(f1_score(at, bt, 0.25) == f1_score(a, b, 0.25));
}

TEST_CASE("spacing cv is zero on a grid and large for an outlier cluster") {
  PointMatrix grid(27, 3);
  int r = 0;
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 3; ++y)
      for (int z = 0; z < 3; ++z) grid.row(r++) = RowVec3(x, y, z) * 0.4;
  CHECK(spacing_uniformity_cv(grid) < 1e-9);

  // 9 tightly packed points plus one far away: spread dominates the mean.
  PointMatrix cluster(10, 3);
  cluster.topRows(9) = random_points(9, 12, 0.01);
  cluster.row(9) = RowVec3(50.0, 0.0, 0.0);
  CHECK(spacing_uniformity_cv(cluster) > 1.0);

  CHECK_THROWS_AS(spacing_uniformity_cv(PointMatrix(1, 3)), std::invalid_argument);
}

TEST_CASE("spacing cv is rigid motion invariant") {
  PointMatrix p = random_points(60, 15, 0.7);
  double before = spacing_uniformity_cv(p);
  Rng rng(3);
  AugmentParams ap = draw_augment_params(rng);
  Mat3 rot = ap.rotation();
  PointMatrix q = p * rot.transpose();
  q.rowwise() += RowVec3(0.5, -0.25, 2.0);
  CHECK(spacing_uniformity_cv(q) == doctest::Approx(before).epsilon(1e-9));
}

TEST_CASE("spacing cv handles exact duplicates") {
  PointMatrix dup(4, 3);
  dup << 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1;
  // Every nearest-other distance is zero; mean zero maps to cv zero.
  CHECK(spacing_uniformity_cv(dup) == 0.0);
}

TEST_CASE("coverage counts strictly covered reference points") {
  PointMatrix ref(4, 3);
  ref << 0, 0, 0, 1, 0, 0, 2, 0, 0, 3, 0, 0;
  PointMatrix cand(2, 3);
  cand << 0.05, 0, 0, 2.0, 0, 0;
  CHECK(coverage(ref, cand, 0.1) == doctest::Approx(0.5));
  CHECK(coverage(ref, PointMatrix(0, 3), 0.1) == 0.0);
  CHECK_THROWS_AS(coverage(PointMatrix(0, 3), cand, 0.1), std::invalid_argument);
  // Exactly-at-radius is not covered.
  PointMatrix one(1, 3), probe(1, 3);
  one << 0, 0, 0;
  probe << 0.25, 0, 0;
  CHECK(coverage(one, probe, 0.25) == 0.0);
}

TEST_CASE("evaluate bundles the full report") {
  PointCloud pred = colored_cloud(60, 21);
  PointCloud gt = colored_cloud(70, 22);
  EvalReport rep = evaluate(pred, gt, 0.5);
  CHECK(rep.pred_count == 60);
  CHECK(rep.gt_count == 70);
  CHECK(rep.chamfer == doctest::Approx(oracle::chamfer_l1(pred.positions, gt.positions)));
  CHECK(rep.f1 == doctest::Approx(oracle::f1(pred.positions, gt.positions, 0.5)));
  CHECK(rep.spacing_cv == doctest::Approx(spacing_uniformity_cv(pred.positions)));

  nlohmann::json j = rep.to_json();
  CHECK(j["chamfer_l1"].get<double>() == rep.chamfer);
  CHECK(j["f1"].get<double>() == rep.f1);
  CHECK(j["pred_count"].get<Index>() == 60);

  std::string csv = rep.to_csv();
  auto newline = csv.find('\n');
  REQUIRE(newline != std::string::npos);
  std::string header = csv.substr(0, newline);
  CHECK(header.find("chamfer_l1") != std::string::npos);
  CHECK(header.find("f1") != std::string::npos);
  // Two lines, both ending in newline.
  CHECK(csv.back() == '\n');
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
}

TEST_CASE("evaluate tolerates an empty prediction") {
  PointCloud pred;
  pred.positions.resize(0, 3);
  PointCloud gt = colored_cloud(10, 30);
  EvalReport rep = evaluate(pred, gt, 0.1);
  CHECK(rep.pred_count == 0);
  CHECK(rep.f1 == 0.0);
  CHECK(rep.rgb.pred_unmatched);
  CHECK(rep.spacing_cv == 0.0);
}
