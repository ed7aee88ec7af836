#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "repudf/model.hpp"
#include "repudf/rng.hpp"
#include "repudf/shapes.hpp"

using namespace repudf;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.d = 16;
  cfg.n_tokens = 6;
  cfg.n_anchors = 10;
  cfg.k_coarse = 3;
  cfg.k_fine = 2;
  cfg.predictor_layers = 1;
  cfg.predictor_heads = 2;
  cfg.head_blocks = 2;
  cfg.head_width = 12;
  cfg.freq_bands = 3;
  cfg.group_hidden = 8;
  cfg.agg_hidden = 8;
  return cfg;
}

PointCloud test_view(Index count, std::uint64_t seed) {
  return make_partial_view(Shape::sphere(1.0), count, Vec3(0, 0, 1), 0.01, seed);
}

// Output heads start at zero by design, which would make every decoded value
// 0 and value comparisons meaningless. Tests that compare decoded numbers
// give the heads random weights first.
void randomize_heads(ParamStore& params, std::uint64_t seed) {
  Rng rng(seed);
  for (const char* name : {"head.udf.w", "head.udf.b", "head.rgb.w", "head.rgb.b"}) {
    MatX& m = params.at(name);
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) m(i, j) = rng.normal() * 0.3;
  }
}

}  // namespace

TEST_CASE("frequency encoding doubles per octave") {
  PointMatrix p(2, 3);
  p << 0.3, -1.2, 2.0, 0.0, 0.0, 0.0;
  MatX enc = frequency_encode(p, 10);
  REQUIRE(enc.cols() == 60);
  // Layout per axis: [sin(x), cos(x), sin(2x), cos(2x), ...].
  for (int band = 0; band < 10; ++band) {
    double f = std::pow(2.0, band);
    CHECK(enc(0, 2 * band) == doctest::Approx(std::sin(f * 0.3)).epsilon(1e-12));
    CHECK(enc(0, 2 * band + 1) == doctest::Approx(std::cos(f * 0.3)).epsilon(1e-12));
    CHECK(enc(0, 20 + 2 * band) == doctest::Approx(std::sin(f * -1.2)).epsilon(1e-12));
    CHECK(enc(0, 40 + 2 * band) == doctest::Approx(std::sin(f * 2.0)).epsilon(1e-12));
  }
  // Origin encodes to alternating 0, 1.
  for (int axis = 0; axis < 3; ++axis)
    for (int band = 0; band < 10; ++band) {
      CHECK(enc(1, 20 * axis + 2 * band) == 0.0);
      CHECK(enc(1, 20 * axis + 2 * band + 1) == 1.0);
    }
}

TEST_CASE("default config is valid and round trips through json") {
  ModelConfig cfg;
  cfg.validate();
  CHECK(cfg.freq_dim() == 60);
  ModelConfig back = ModelConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  cfg.k_coarse = 0;
  cfg.k_fine = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.k_fine = 4;
  CHECK_NOTHROW(cfg.validate());  // coarse alone may be zero
  cfg.d = 63;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("encoder tokens are invariant to input permutation") {
  ModelConfig cfg = tiny_config();
  ParamStore params = init_model_params(cfg, 11);
  PointCloud cloud = test_view(40, 5);

  PointCloud shuffled = cloud;
  std::vector<Index> perm(static_cast<std::size_t>(cloud.size()));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(123);
  for (std::size_t i = perm.size(); i > 1; --i)
    std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    shuffled.positions.row(static_cast<Index>(i)) = cloud.positions.row(perm[i]);
    shuffled.colors.row(static_cast<Index>(i)) = cloud.colors.row(perm[i]);
  }

  Tape t1(false), t2(false);
  BoundParams b1 = bind_params(t1, params), b2 = bind_params(t2, params);
  EncoderTokens e1 = encode_partial_cloud(t1, b1, cfg, cloud);
  EncoderTokens e2 = encode_partial_cloud(t2, b2, cfg, shuffled);
  CHECK(e1.centers == e2.centers);
  CHECK(t1.value(e1.tokens) == t2.value(e2.tokens));
  CHECK(t1.value(e1.global) == t2.value(e2.global));

  // And therefore so are the anchors.
  AnchorPrediction a1 = predict_anchors(t1, b1, cfg, e1);
  AnchorPrediction a2 = predict_anchors(t2, b2, cfg, e2);
  CHECK(t1.value(a1.locations) == t2.value(a2.locations));
  CHECK(t1.value(a1.features) == t2.value(a2.features));
}

TEST_CASE("encoder rejects clouds smaller than the token count") {
  ModelConfig cfg = tiny_config();
  ParamStore params = init_model_params(cfg, 1);
  PointCloud cloud = test_view(5, 2);  // fewer than 6 tokens
  Tape tape(false);
  BoundParams bound = bind_params(tape, params);
  CHECK_THROWS_AS(encode_partial_cloud(tape, bound, cfg, cloud), std::invalid_argument);
}

TEST_CASE("anchor prediction shapes and bounds") {
  ModelConfig cfg = tiny_config();
  ParamStore params = init_model_params(cfg, 3);
  PointCloud cloud = test_view(30, 8);
  Tape tape(false);
  BoundParams bound = bind_params(tape, params);
  EncoderTokens enc = encode_partial_cloud(tape, bound, cfg, cloud);
  CHECK(tape.value(enc.tokens).rows() == cfg.n_tokens);
  CHECK(tape.value(enc.tokens).cols() == cfg.d);
  AnchorPrediction pred = predict_anchors(tape, bound, cfg, enc);
  const MatX& locs = tape.value(pred.locations);
  REQUIRE(locs.rows() == cfg.n_anchors);
  REQUIRE(locs.cols() == 3);
  CHECK(locs.cwiseAbs().maxCoeff() <= cfg.query_range);
  CHECK(tape.value(pred.features).rows() == cfg.n_anchors);
  CHECK(tape.value(pred.global).rows() == 1);
  // Anchors differ from each other (embeddings break symmetry).
  CHECK((locs.row(0) - locs.row(1)).norm() > 0.0);
}

TEST_CASE("neighbor gather puts coarse rows before fine rows") {
  ModelConfig cfg = tiny_config();
  Tape tape(false);
  // Anchors on a line at x = 1..4, fine points at x = -1..-3.
  PointMatrix anchor_locs(4, 3), fine_locs(3, 3);
  anchor_locs << 1, 0, 0, 2, 0, 0, 3, 0, 0, 4, 0, 0;
  fine_locs << -1, 0, 0, -2, 0, 0, -3, 0, 0;
  MatX af = MatX::Random(4, cfg.d), ff = MatX::Random(3, cfg.d);
  Tensor anchors = tape.constant(af), fines = tape.constant(ff);
  Tensor anchor_pos = tape.constant(anchor_locs);
  KdTree coarse_tree(anchor_locs), fine_tree(fine_locs);

  PointMatrix queries(1, 3);
  queries << 0.0, 0.0, 0.0;
  NeighborGather g = gather_neighbors(tape, queries, anchors, anchor_pos, coarse_tree, fines,
                                      fine_locs, &fine_tree, 2, 2);
  CHECK(g.block == 4);
  const MatX& feats = tape.value(g.features);
  const MatX& disp = tape.value(g.displacements);
  REQUIRE(feats.rows() == 4);
  // Nearest two anchors are x=1, x=2; nearest two fine are x=-1, x=-2.
  CHECK(feats.row(0) == af.row(0));
  CHECK(feats.row(1) == af.row(1));
  CHECK(feats.row(2) == ff.row(0));
  CHECK(feats.row(3) == ff.row(1));
  CHECK(disp(0, 0) == 1.0);
  CHECK(disp(1, 0) == 2.0);
  CHECK(disp(2, 0) == -1.0);
  CHECK(disp(3, 0) == -2.0);
}

TEST_CASE("zero fine neighbors is allowed") {
  ModelConfig cfg = tiny_config();
  Tape tape(false);
  PointMatrix anchor_locs(3, 3);
  anchor_locs << 1, 0, 0, 0, 1, 0, 0, 0, 1;
  Tensor anchors = tape.constant(MatX::Random(3, cfg.d));
  Tensor anchor_pos = tape.constant(anchor_locs);
  KdTree coarse_tree(anchor_locs);
  Tensor empty_fine = tape.constant(MatX::Zero(0, cfg.d));
  PointMatrix no_fine(0, 3);
  PointMatrix queries(2, 3);
  queries.setZero();
  NeighborGather g = gather_neighbors(tape, queries, anchors, anchor_pos, coarse_tree,
                                      empty_fine, no_fine, nullptr, 3, 0);
  CHECK(g.block == 3);
  CHECK(tape.value(g.features).rows() == 6);
}

TEST_CASE("attention weights per query sum to one") {
  ModelConfig cfg = tiny_config();
  ParamStore params = init_model_params(cfg, 17);
  Tape tape(false);
  BoundParams bound = bind_params(tape, params);
  Rng rng(4);
  Index nq = 5, block = 4;
  MatX feats(nq * block, cfg.d), disp(nq * block, 3), global(1, cfg.d);
  for (Index i = 0; i < feats.rows(); ++i)
    for (int j = 0; j < cfg.d; ++j) feats(i, j) = rng.uniform(-1, 1);
  for (Index i = 0; i < disp.rows(); ++i) disp.row(i) = rng.normal_vec3().transpose();
  for (int j = 0; j < cfg.d; ++j) global(0, j) = rng.uniform(-1, 1);

  NeighborGather g;
  g.features = tape.constant(feats);
  g.displacements = tape.constant(disp);
  g.block = block;
  Tensor out = aggregate_features(tape, bound, cfg, g, tape.constant(global));
  REQUIRE(tape.value(out).rows() == nq);
  REQUIRE(tape.value(out).cols() == cfg.d);

  // With a single neighbor per query the softmax collapses to weight 1 and the
  // aggregate must equal that neighbor's value projection exactly.
  NeighborGather one;
  one.features = tape.constant(feats.topRows(nq));
  one.displacements = tape.constant(disp.topRows(nq));
  one.block = 1;
  Tensor collapsed = aggregate_features(tape, bound, cfg, one, tape.constant(global));
  MatX values = feats.topRows(nq) * params.at("agg.v.w");
  CHECK((tape.value(collapsed) - values).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("two equal neighbors average their values") {
  ModelConfig cfg = tiny_config();
  ParamStore params = init_model_params(cfg, 23);
  Tape tape(false);
  BoundParams bound = bind_params(tape, params);
  Rng rng(9);
  MatX row(1, cfg.d), global(1, cfg.d);
  for (int j = 0; j < cfg.d; ++j) row(0, j) = rng.uniform(-1, 1);
  for (int j = 0; j < cfg.d; ++j) global(0, j) = rng.uniform(-1, 1);
  MatX feats(2, cfg.d);
  feats << row, row;
  MatX disp(2, 3);
  disp << 0.5, 0.25, -0.5, 0.5, 0.25, -0.5;

  NeighborGather g;
  g.features = tape.constant(feats);
  g.displacements = tape.constant(disp);
  g.block = 2;
  Tensor out = aggregate_features(tape, bound, cfg, g, tape.constant(global));
  MatX expect = row * params.at("agg.v.w");
  CHECK((tape.value(out) - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("decoder state reproduces the tape forward pass") {
  ModelConfig cfg = tiny_config();
  ParamStore params = init_model_params(cfg, 31);
  randomize_heads(params, 32);
  PointCloud cloud = test_view(25, 3);
  DecoderState state = make_decoder_state(cfg, params, cloud);

  CHECK(state.anchor_locations.rows() == cfg.n_anchors);
  CHECK(state.fine_locations.rows() == cloud.size());
  CHECK(state.fine_locations == cloud.positions);

  Rng rng(77);
  PointMatrix queries(40, 3);
  for (Index i = 0; i < queries.rows(); ++i)
    queries.row(i) = (rng.normal_vec3() * 1.2).transpose();

  VecX batch = decode_batch_udf(state, queries);

  // Reference: the same computation assembled by hand on one tape.
  Tape tape(false);
  BoundParams bound = bind_params(tape, params);
  Tensor af = tape.constant(state.anchor_features);
  Tensor al = tape.constant(state.anchor_locations);
  Tensor ff = tape.constant(state.fine_feature_values);
  NeighborGather g =
      gather_neighbors(tape, queries, af, al, state.anchor_tree, ff, state.fine_locations,
                       &state.fine_tree, cfg.k_coarse, cfg.k_fine);
  Tensor agg = aggregate_features(tape, bound, cfg, g, tape.constant(state.global_token));
  DecodeOutput dec = decode_udf(tape, bound, cfg, queries, agg);
  const MatX& want = tape.value(dec.udf);
  REQUIRE(batch.size() == 40);
  for (Index i = 0; i < 40; ++i) CHECK(batch[i] == want(i, 0));
}

TEST_CASE("batch decode is independent of chunking") {
  ModelConfig cfg = tiny_config();
  cfg.n_anchors = 24;
  ParamStore params = init_model_params(cfg, 41);
  randomize_heads(params, 42);
  PointCloud cloud = test_view(30, 4);
  DecoderState state = make_decoder_state(cfg, params, cloud);

  Rng rng(5);
  PointMatrix queries(5000, 3);  // spans two internal chunks
  for (Index i = 0; i < queries.rows(); ++i)
    queries.row(i) = (rng.normal_vec3() * 1.5).transpose();

  VecX whole = decode_batch_udf(state, queries);
  VecX first = decode_batch_udf(state, queries.topRows(1700));
  VecX rest = decode_batch_udf(state, queries.bottomRows(3300));
  CHECK(whole.head(1700) == first);
  CHECK(whole.tail(3300) == rest);

  PointMatrix colors = decode_batch_colors(state, queries.topRows(64));
  CHECK(colors.rows() == 64);
  CHECK(colors.minCoeff() >= 0.0);
  CHECK(colors.maxCoeff() <= 1.0);
  // Colors are bin centers on the 1/255 grid.
  for (Index i = 0; i < colors.size(); ++i) {
    double scaled = colors(i / 3, i % 3) * 255.0;
    CHECK(std::abs(scaled - std::round(scaled)) < 1e-9);
  }
}

TEST_CASE("neighbor counts can differ from the trained defaults") {
  ModelConfig cfg = tiny_config();
  cfg.n_anchors = 16;
  ParamStore params = init_model_params(cfg, 53);
  randomize_heads(params, 54);
  PointCloud cloud = test_view(20, 6);
  DecoderState state = make_decoder_state(cfg, params, cloud);
  PointMatrix queries(7, 3);
  queries.setRandom();
  VecX wide = decode_batch_udf(state, queries, 12, 12);
  CHECK(wide.size() == 7);
  CHECK(wide.allFinite());
  VecX narrow = decode_batch_udf(state, queries, 1, 0);
  CHECK(narrow.allFinite());
  CHECK(wide != narrow);  // different neighborhoods, different values
  CHECK_THROWS_AS(decode_batch_udf(state, queries, 17, 0), std::invalid_argument);
  CHECK_THROWS_AS(decode_batch_udf(state, queries, 0, 0), std::invalid_argument);
}

TEST_CASE("far away parameters do not leak into a local decode") {
  ModelConfig cfg = tiny_config();
  cfg.n_anchors = 12;
  ParamStore params = init_model_params(cfg, 61);
  randomize_heads(params, 62);
  PointCloud cloud = test_view(24, 9);
  DecoderState state = make_decoder_state(cfg, params, cloud);

  PointMatrix query(1, 3);
  query << 0.2, 0.1, 0.8;
  VecX before = decode_batch_udf(state, query);

  // Identify the selected coarse neighbors, then corrupt a non-selected
  // anchor's feature vector. The decode must not change at all.
  auto nn = state.anchor_tree.knn(Vec3(query.row(0).transpose()), cfg.k_coarse);
  std::vector<bool> used(static_cast<std::size_t>(cfg.n_anchors), false);
  for (const auto& n : nn) used[static_cast<std::size_t>(n.index)] = true;
  int victim = -1;
  for (int i = 0; i < cfg.n_anchors; ++i)
    if (!used[static_cast<std::size_t>(i)]) victim = i;
  REQUIRE(victim >= 0);
  state.anchor_features.row(victim).setConstant(1e6);
  VecX after = decode_batch_udf(state, query);
  CHECK(before == after);
}
