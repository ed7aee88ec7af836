#include "repudf/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace repudf {

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("model config: " + what);
  };
  require(d >= 1, "d must be >= 1");
  require(predictor_heads >= 1, "predictor_heads must be >= 1");
  require(d % predictor_heads == 0, "d must be divisible by predictor_heads");
  require(n_tokens >= 1, "n_tokens must be >= 1");
  require(n_anchors >= 1, "n_anchors must be >= 1");
  require(k_coarse >= 0 && k_fine >= 0, "neighbor counts must be >= 0");
  require(k_coarse + k_fine >= 1, "k_coarse + k_fine must be >= 1");
  require(k_coarse <= n_anchors, "k_coarse must not exceed n_anchors");
  require(predictor_layers >= 1, "predictor_layers must be >= 1");
  require(ffn_mult >= 1, "ffn_mult must be >= 1");
  require(head_blocks >= 1, "head_blocks must be >= 1");
  require(head_width >= 1, "head_width must be >= 1");
  require(freq_bands >= 1, "freq_bands must be >= 1");
  require(group_hidden >= 1, "group_hidden must be >= 1");
  require(agg_hidden >= 1, "agg_hidden must be >= 1");
  require(query_range > 0.0, "query_range must be positive");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"d", d},
          {"n_tokens", n_tokens},
          {"n_anchors", n_anchors},
          {"k_coarse", k_coarse},
          {"k_fine", k_fine},
          {"predictor_layers", predictor_layers},
          {"predictor_heads", predictor_heads},
          {"ffn_mult", ffn_mult},
          {"head_blocks", head_blocks},
          {"head_width", head_width},
          {"freq_bands", freq_bands},
          {"group_hidden", group_hidden},
          {"agg_hidden", agg_hidden},
          {"query_range", query_range}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.d = j.value("d", cfg.d);
  cfg.n_tokens = j.value("n_tokens", cfg.n_tokens);
  cfg.n_anchors = j.value("n_anchors", cfg.n_anchors);
  cfg.k_coarse = j.value("k_coarse", cfg.k_coarse);
  cfg.k_fine = j.value("k_fine", cfg.k_fine);
  cfg.predictor_layers = j.value("predictor_layers", cfg.predictor_layers);
  cfg.predictor_heads = j.value("predictor_heads", cfg.predictor_heads);
  cfg.ffn_mult = j.value("ffn_mult", cfg.ffn_mult);
  cfg.head_blocks = j.value("head_blocks", cfg.head_blocks);
  cfg.head_width = j.value("head_width", cfg.head_width);
  cfg.freq_bands = j.value("freq_bands", cfg.freq_bands);
  cfg.group_hidden = j.value("group_hidden", cfg.group_hidden);
  cfg.agg_hidden = j.value("agg_hidden", cfg.agg_hidden);
  cfg.query_range = j.value("query_range", cfg.query_range);
  cfg.validate();
  return cfg;
}

namespace {

MatX glorot(Rng& rng, Index rows, Index cols) {
  const double sd = std::sqrt(2.0 / static_cast<double>(rows + cols));
  MatX w(rows, cols);
  // Column-major fill so the draw order matches the storage order.
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) w(r, c) = sd * rng.normal();
  return w;
}

void add_linear(ParamStore& ps, Rng& rng, const std::string& name, Index in, Index out) {
  ps.add(name + ".w", glorot(rng, in, out));
  ps.add(name + ".b", MatX::Zero(1, out));
}

void add_layer_norm(ParamStore& ps, const std::string& name, Index dim) {
  ps.add(name + ".g", MatX::Ones(1, dim));
  ps.add(name + ".b", MatX::Zero(1, dim));
}

}  // namespace

ParamStore init_model_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamStore ps;
  Rng rng(seed);
  const Index d = cfg.d;

  add_linear(ps, rng, "enc.point0", 6, cfg.group_hidden);
  add_linear(ps, rng, "enc.point1", cfg.group_hidden, d);
  ps.add("enc.center.w", glorot(rng, 3, d));
  add_linear(ps, rng, "enc.global", d, d);

  {
    MatX embed(cfg.n_anchors, d);
    for (Index c = 0; c < d; ++c)
      for (Index r = 0; r < cfg.n_anchors; ++r) embed(r, c) = 0.02 * rng.normal();
    ps.add("pred.embed", embed);
  }
  for (int l = 0; l < cfg.predictor_layers; ++l) {
    const std::string p = "pred.l" + std::to_string(l) + ".";
    add_layer_norm(ps, p + "ln1", d);
    add_linear(ps, rng, p + "attn.q", d, d);
    add_linear(ps, rng, p + "attn.k", d, d);
    add_linear(ps, rng, p + "attn.v", d, d);
    add_linear(ps, rng, p + "attn.o", d, d);
    add_layer_norm(ps, p + "ln2", d);
    add_linear(ps, rng, p + "ffn0", d, d * cfg.ffn_mult);
    add_linear(ps, rng, p + "ffn1", d * cfg.ffn_mult, d);
  }
  add_layer_norm(ps, "pred.ln", d);
  add_linear(ps, rng, "pred.loc", d, 3);

  ps.add("agg.q.w", glorot(rng, d, d));
  ps.add("agg.k.w", glorot(rng, d, d));
  ps.add("agg.v.w", glorot(rng, d, d));
  add_linear(ps, rng, "agg.psi0", d, cfg.agg_hidden);
  add_linear(ps, rng, "agg.psi1", cfg.agg_hidden, d);
  add_linear(ps, rng, "agg.delta0", 3, cfg.agg_hidden);
  add_linear(ps, rng, "agg.delta1", cfg.agg_hidden, d);

  add_linear(ps, rng, "fine.proj", 3, d);

  const Index w = cfg.head_width;
  add_linear(ps, rng, "head.fcp", cfg.freq_dim(), w);
  for (int b = 0; b < cfg.head_blocks; ++b) {
    const std::string p = "head.b" + std::to_string(b) + ".";
    add_linear(ps, rng, p + "cond", d, w);
    add_linear(ps, rng, p + "fc0", w, w);
    // Zero second layer makes every block start as the identity.
    ps.add(p + "fc1.w", MatX::Zero(w, w));
    ps.add(p + "fc1.b", MatX::Zero(1, w));
  }
  // Zero output heads: initial predictions sit at 0, inside the clamping band
  // of the distance loss, so every query starts with a live gradient. Random
  // heads put half the field above the band where the loss is flat and
  // training never recovers. Starting higher (nearer the band edge) also
  // fails: the far queries push the whole field across the band before the
  // trunk can tell near from far.
  ps.add("head.udf.w", MatX::Zero(w, 1));
  ps.add("head.udf.b", MatX::Zero(1, 1));
  ps.add("head.rgb.w", MatX::Zero(w, 3 * ModelConfig::color_bins));
  ps.add("head.rgb.b", MatX::Zero(1, 3 * ModelConfig::color_bins));
  return ps;
}

MatX frequency_encode(const PointMatrix& points, int freq_bands) {
  if (freq_bands < 1) throw std::invalid_argument("frequency_encode: freq_bands must be >= 1");
  const Index n = points.rows();
  MatX out(n, 6 * freq_bands);
  for (Index i = 0; i < n; ++i) {
    Index c = 0;
    for (int axis = 0; axis < 3; ++axis) {
      double scaled = points(i, axis);
      for (int band = 0; band < freq_bands; ++band) {
        out(i, c++) = std::sin(scaled);
        out(i, c++) = std::cos(scaled);
        scaled *= 2.0;
      }
    }
  }
  return out;
}

namespace {

Tensor linear(const BoundParams& params, const std::string& name, Tensor x) {
  return add_rowvec(matmul(x, params[name + ".w"]), params[name + ".b"]);
}

Tensor mlp2(const BoundParams& params, const std::string& name, Tensor x) {
  return linear(params, name + "1", relu(linear(params, name + "0", x)));
}

bool lex_less_row(const PointMatrix& pos, const PointMatrix& col, Index a, Index b) {
  for (int k = 0; k < 3; ++k) {
    if (pos(a, k) != pos(b, k)) return pos(a, k) < pos(b, k);
  }
  if (col.rows() > 0) {
    for (int k = 0; k < 3; ++k) {
      if (col(a, k) != col(b, k)) return col(a, k) < col(b, k);
    }
  }
  return a < b;
}

}  // namespace

EncoderTokens encode_partial_cloud(Tape& tape, const BoundParams& params,
                                   const ModelConfig& cfg, const PointCloud& seen) {
  seen.validate();
  const Index n = seen.size();
  if (n < cfg.n_tokens)
    throw std::invalid_argument("encode_partial_cloud: cloud has " + std::to_string(n) +
                                " points but " + std::to_string(cfg.n_tokens) +
                                " tokens were requested");

  Index start = 0;
  for (Index i = 1; i < n; ++i)
    if (lex_less_row(seen.positions, seen.colors, i, start)) start = i;
  const std::vector<int> center_ids =
      fps_sample(seen.positions, cfg.n_tokens, static_cast<int>(start));

  PointMatrix centers(cfg.n_tokens, 3);
  for (Index g = 0; g < cfg.n_tokens; ++g) centers.row(g) = seen.positions.row(center_ids[g]);

  // Nearest center by squared distance, smaller center id on ties.
  std::vector<std::vector<Index>> groups(static_cast<std::size_t>(cfg.n_tokens));
  for (Index i = 0; i < n; ++i) {
    Index best = 0;
    double best_sq = (seen.positions.row(i) - centers.row(0)).squaredNorm();
    for (Index g = 1; g < cfg.n_tokens; ++g) {
      const double sq = (seen.positions.row(i) - centers.row(g)).squaredNorm();
      if (sq < best_sq) {
        best_sq = sq;
        best = g;
      }
    }
    groups[static_cast<std::size_t>(best)].push_back(i);
  }
  for (auto& g : groups)
    std::sort(g.begin(), g.end(), [&](Index a, Index b) {
      return lex_less_row(seen.positions, seen.colors, a, b);
    });

  MatX feat(n, 6);
  std::vector<Index> offsets;
  offsets.reserve(static_cast<std::size_t>(cfg.n_tokens) + 1);
  offsets.push_back(0);
  Index row = 0;
  for (Index g = 0; g < cfg.n_tokens; ++g) {
    for (Index i : groups[static_cast<std::size_t>(g)]) {
      feat.row(row).head<3>() = seen.positions.row(i) - centers.row(g);
      if (seen.has_colors())
        feat.row(row).tail<3>() = seen.colors.row(i);
      else
        feat.row(row).tail<3>().setZero();
      ++row;
    }
    offsets.push_back(row);
  }

  Tensor per_point = mlp2(params, "enc.point", tape.constant(feat));
  Tensor pooled = ragged_mean_rows(per_point, offsets);
  Tensor tokens = add(pooled, matmul(tape.constant(centers), params["enc.center.w"]));
  Tensor global = linear(params, "enc.global", mean_axis(tokens, 0));
  return {tokens, global, centers};
}

namespace {

Tensor attention(const BoundParams& params, const ModelConfig& cfg, const std::string& p,
                 Tensor x) {
  Tensor q = linear(params, p + "attn.q", x);
  Tensor k = linear(params, p + "attn.k", x);
  Tensor v = linear(params, p + "attn.v", x);
  const int dh = cfg.d / cfg.predictor_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> heads;
  heads.reserve(static_cast<std::size_t>(cfg.predictor_heads));
  for (int h = 0; h < cfg.predictor_heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, dh);
    Tensor kh = slice_cols(k, h * dh, dh);
    Tensor vh = slice_cols(v, h * dh, dh);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    heads.push_back(matmul(softmax(scores, 1), vh));
  }
  return linear(params, p + "attn.o", concat_cols(heads));
}

}  // namespace

AnchorPrediction predict_anchors(Tape& tape, const BoundParams& params,
                                 const ModelConfig& cfg, const EncoderTokens& enc) {
  (void)tape;
  Tensor embed = add_rowvec(params["pred.embed"], enc.global);
  Tensor x = concat_rows({enc.global, enc.tokens, embed});

  for (int l = 0; l < cfg.predictor_layers; ++l) {
    const std::string p = "pred.l" + std::to_string(l) + ".";
    Tensor a = layer_norm_rows(x, params[p + "ln1.g"], params[p + "ln1.b"]);
    x = add(x, attention(params, cfg, p, a));
    Tensor b = layer_norm_rows(x, params[p + "ln2.g"], params[p + "ln2.b"]);
    x = add(x, linear(params, p + "ffn1", relu(linear(params, p + "ffn0", b))));
  }
  Tensor y = layer_norm_rows(x, params["pred.ln.g"], params["pred.ln.b"]);

  std::vector<int> anchor_rows(static_cast<std::size_t>(cfg.n_anchors));
  for (int i = 0; i < cfg.n_anchors; ++i) anchor_rows[static_cast<std::size_t>(i)] = 1 + cfg.n_tokens + i;
  Tensor features = gather_rows(y, anchor_rows);
  Tensor global = gather_rows(y, {0});
  Tensor locations = scale(tanh(linear(params, "pred.loc", features)), cfg.query_range);
  return {features, locations, global};
}

FineFeatures fine_features(Tape& tape, const BoundParams& params, const PointCloud& seen) {
  seen.validate();
  MatX colors = seen.has_colors() ? MatX(seen.colors) : MatX::Zero(seen.size(), 3);
  Tensor feats = linear(params, "fine.proj", tape.constant(colors));
  return {feats, seen.positions};
}

NeighborGather gather_neighbors(Tape& tape, const PointMatrix& queries,
                                Tensor coarse_features, Tensor coarse_locations,
                                const KdTree& coarse_tree, Tensor fine_feats,
                                const PointMatrix& fine_locations, const KdTree* fine_tree,
                                int m, int n) {
  if (m < 0 || n < 0 || m + n < 1)
    throw std::invalid_argument("gather_neighbors: need m >= 0, n >= 0, m + n >= 1");
  if (n > 0 && fine_tree == nullptr)
    throw std::invalid_argument("gather_neighbors: fine neighbors requested without a fine tree");
  const Index nq = queries.rows();
  const int coarse_count = static_cast<int>(coarse_features.rows());
  const Index block = m + n;

  std::vector<int> ids;
  ids.reserve(static_cast<std::size_t>(nq * block));
  for (Index i = 0; i < nq; ++i) {
    const Vec3 q = queries.row(i).transpose();
    if (m > 0)
      for (const Neighbor& nb : coarse_tree.knn(q, m)) ids.push_back(nb.index);
    if (n > 0)
      for (const Neighbor& nb : fine_tree->knn(q, n)) ids.push_back(coarse_count + nb.index);
  }
  return gather_with_ids(tape, queries, coarse_features, coarse_locations, fine_feats,
                         fine_locations, ids, block);
}

NeighborGather gather_with_ids(Tape& tape, const PointMatrix& queries, Tensor coarse_features,
                               Tensor coarse_locations, Tensor fine_feats,
                               const PointMatrix& fine_locations, const std::vector<int>& ids,
                               Index block) {
  const Index nq = queries.rows();
  if (block < 1 || static_cast<Index>(ids.size()) != nq * block)
    throw std::invalid_argument("gather_with_ids: expected " + std::to_string(nq) + " x " +
                                std::to_string(block) + " ids, got " +
                                std::to_string(ids.size()));
  const int coarse_count = static_cast<int>(coarse_features.rows());
  bool any_fine = false;
  for (int id : ids) any_fine |= id >= coarse_count;

  Tensor all_feats = any_fine ? concat_rows({coarse_features, fine_feats}) : coarse_features;
  Tensor all_locs = any_fine ? concat_rows({coarse_locations, tape.constant(fine_locations)})
                             : coarse_locations;
  Tensor feats = gather_rows(all_feats, ids);
  Tensor locs = gather_rows(all_locs, ids);

  PointMatrix query_rep(nq * block, 3);
  for (Index i = 0; i < nq; ++i)
    query_rep.middleRows(i * block, block) = queries.row(i).replicate(block, 1);
  Tensor displacements = sub(locs, tape.constant(query_rep));
  return {feats, displacements, block};
}

Tensor aggregate_features(Tape& tape, const BoundParams& params, const ModelConfig& cfg,
                          const NeighborGather& gather, Tensor global) {
  (void)tape;
  (void)cfg;
  Tensor zq = matmul(global, params["agg.q.w"]);
  Tensor keys = add_rowvec(matmul(gather.features, params["agg.k.w"]), zq);
  Tensor pos = mlp2(params, "agg.delta", gather.displacements);
  Tensor scores = mlp2(params, "agg.psi", add(keys, pos));
  Tensor weights = segment_softmax_rows(scores, gather.block);
  Tensor values = matmul(gather.features, params["agg.v.w"]);
  return segment_sum_rows(mul(weights, values), gather.block);
}

DecodeOutput decode_udf(Tape& tape, const BoundParams& params, const ModelConfig& cfg,
                        const PointMatrix& queries, Tensor aggregated) {
  Tensor net =
      linear(params, "head.fcp", tape.constant(frequency_encode(queries, cfg.freq_bands)));
  for (int b = 0; b < cfg.head_blocks; ++b) {
    const std::string p = "head.b" + std::to_string(b) + ".";
    net = add(net, linear(params, p + "cond", aggregated));
    Tensor h = linear(params, p + "fc1", relu(linear(params, p + "fc0", relu(net))));
    net = add(net, h);
  }
  Tensor trunk = relu(net);
  Tensor udf = linear(params, "head.udf", trunk);
  return {udf, trunk};
}

Tensor decode_rgb_logits(Tape& tape, const BoundParams& params, Tensor trunk) {
  (void)tape;
  return linear(params, "head.rgb", trunk);
}

DecoderState make_decoder_state(const ModelConfig& cfg, const ParamStore& params,
                                const PointCloud& seen) {
  cfg.validate();
  Tape tape(false);
  BoundParams bound = bind_params(tape, params);
  EncoderTokens enc = encode_partial_cloud(tape, bound, cfg, seen);
  AnchorPrediction anchors = predict_anchors(tape, bound, cfg, enc);
  FineFeatures fine = fine_features(tape, bound, seen);

  MatX anchor_feats = tape.value(anchors.features);
  PointMatrix anchor_locs = tape.value(anchors.locations);
  MatX fine_feats = tape.value(fine.features);
  return {cfg,
          params,
          std::move(anchor_feats),
          anchor_locs,
          std::move(fine_feats),
          fine.locations,
          tape.value(anchors.global),
          KdTree(anchor_locs, KdTree::Metric::L2),
          KdTree(fine.locations, KdTree::Metric::L2)};
}

namespace {

// Decoding is chunked so intermediate tensors stay small; results are
// independent of the chunk size because each query row is self-contained.
constexpr Index kDecodeChunk = 4096;

template <typename Fn>
void decode_chunks(const DecoderState& state, const PointMatrix& queries, int m, int n,
                   Fn&& consume) {
  if (m < 0) m = state.cfg.k_coarse;
  if (n < 0) n = state.cfg.k_fine;
  const Index total = queries.rows();
  for (Index begin = 0; begin < total; begin += kDecodeChunk) {
    const Index count = std::min(kDecodeChunk, total - begin);
    const PointMatrix chunk = queries.middleRows(begin, count);
    Tape tape(false);
    BoundParams bound = bind_params(tape, state.params);
    NeighborGather gather = gather_neighbors(
        tape, chunk, tape.constant(state.anchor_features),
        tape.constant(state.anchor_locations), state.anchor_tree,
        tape.constant(state.fine_feature_values), state.fine_locations, &state.fine_tree, m, n);
    Tensor agg =
        aggregate_features(tape, bound, state.cfg, gather, tape.constant(state.global_token));
    DecodeOutput out = decode_udf(tape, bound, state.cfg, chunk, agg);
    consume(begin, tape, out, bound);
  }
}

}  // namespace

VecX decode_batch_udf(const DecoderState& state, const PointMatrix& queries, int m, int n) {
  VecX result(queries.rows());
  decode_chunks(state, queries, m, n,
                [&](Index begin, Tape& tape, const DecodeOutput& out, const BoundParams&) {
                  const MatX& v = tape.value(out.udf);
                  result.segment(begin, v.rows()) = v.col(0);
                });
  return result;
}

PointMatrix decode_batch_colors(const DecoderState& state, const PointMatrix& queries, int m,
                                int n) {
  constexpr int bins = ModelConfig::color_bins;
  PointMatrix result(queries.rows(), 3);
  decode_chunks(state, queries, m, n,
                [&](Index begin, Tape& tape, const DecodeOutput& out, const BoundParams& bound) {
                  Tensor logits = decode_rgb_logits(tape, bound, out.trunk);
                  const MatX& v = tape.value(logits);
                  for (Index r = 0; r < v.rows(); ++r)
                    for (int ch = 0; ch < 3; ++ch) {
                      Index best;
                      v.row(r).segment(ch * bins, bins).maxCoeff(&best);
                      result(begin + r, ch) = static_cast<double>(best) / 255.0;
                    }
                });
  return result;
}

}  // namespace repudf
