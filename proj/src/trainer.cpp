#include "repudf/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <stdexcept>

#include "repudf/checkpoint.hpp"
#include "repudf/optim.hpp"

namespace repudf {

namespace {

// Stream tags; every random decision hangs off (seed, tag[, step]).
constexpr std::uint64_t kReferenceStream = 1;
constexpr std::uint64_t kViewStream = 2;
constexpr std::uint64_t kQueryStream = 3;
constexpr std::uint64_t kAugmentStream = 4;
constexpr std::uint64_t kParamStream = 5;
constexpr std::uint64_t kConditionStream = 6;

}  // namespace

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("train config: " + what);
  };
  require(steps >= 1, "steps must be >= 1");
  require(query_count >= 1, "query_count must be >= 1");
  require(gt_count >= 1, "gt_count must be >= 1");
  require(view_count >= 1, "view_count must be >= 1");
  require(view_dir.norm() > 1e-12, "view_dir must be nonzero");
  require(view_noise >= 0.0, "view_noise must be >= 0");
  require(lr > 0.0, "lr must be positive");
  require(warmup_frac >= 0.0 && warmup_frac <= 1.0, "warmup_frac must be in [0, 1]");
  require(weights.rgb >= 0.0 && weights.anchor >= 0.0, "loss weights must be >= 0");
  require(udf_band > 0.0, "udf_band must be positive");
  require(valid_radius > 0.0, "valid_radius must be positive");
  require(log_every >= 1, "log_every must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"steps", steps},
          {"query_count", query_count},
          {"gt_count", gt_count},
          {"view_count", view_count},
          {"view_dir", {view_dir.x(), view_dir.y(), view_dir.z()}},
          {"view_noise", view_noise},
          {"augment", augment},
          {"lr", lr},
          {"warmup_frac", warmup_frac},
          {"rgb_weight", weights.rgb},
          {"anchor_weight", weights.anchor},
          {"udf_band", udf_band},
          {"valid_radius", valid_radius},
          {"log_every", log_every}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig tc;
  tc.steps = j.value("steps", tc.steps);
  tc.query_count = j.value("query_count", tc.query_count);
  tc.gt_count = j.value("gt_count", tc.gt_count);
  tc.view_count = j.value("view_count", tc.view_count);
  if (j.contains("view_dir")) {
    const auto& v = j.at("view_dir");
    if (!v.is_array() || v.size() != 3)
      throw std::invalid_argument("train config: view_dir must be an array of 3 numbers");
    tc.view_dir = Vec3(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
  }
  tc.view_noise = j.value("view_noise", tc.view_noise);
  tc.augment = j.value("augment", tc.augment);
  tc.lr = j.value("lr", tc.lr);
  tc.warmup_frac = j.value("warmup_frac", tc.warmup_frac);
  tc.weights.rgb = j.value("rgb_weight", tc.weights.rgb);
  tc.weights.anchor = j.value("anchor_weight", tc.weights.anchor);
  tc.udf_band = j.value("udf_band", tc.udf_band);
  tc.valid_radius = j.value("valid_radius", tc.valid_radius);
  tc.log_every = j.value("log_every", tc.log_every);
  tc.validate();
  return tc;
}

FitResult fit_shape(const Shape& shape, const ModelConfig& mc, const TrainConfig& tc,
                    std::uint64_t seed, std::ostream* progress) {
  mc.validate();
  tc.validate();

  PointCloud reference =
      sample_surface(shape, tc.gt_count, Rng::derive(seed, kReferenceStream));
  auto [ref_norm, transform] = normalize_to_unit(reference);

  FitResult fit;
  fit.model = mc;
  fit.normalization = transform;
  fit.params = init_model_params(mc, Rng::derive(seed, kParamStream));

  AdamConfig acfg;
  acfg.lr = tc.lr;
  acfg.total_steps = tc.steps;
  acfg.warmup_steps = static_cast<long>(std::ceil(tc.warmup_frac * static_cast<double>(tc.steps)));
  Adam opt(fit.params, acfg);

  // With augmentation off the reference geometry never changes, so its index
  // and anchor-target subset are hoisted out of the loop.
  std::optional<KdTree> ref_tree;
  std::optional<std::vector<int>> anchor_ids;
  if (!tc.augment) {
    ref_tree.emplace(ref_norm.positions);
    anchor_ids = fps_sample(ref_norm.positions, mc.n_anchors, 0);
  }

  const std::uint64_t view_base = Rng::derive(seed, kViewStream);
  const std::uint64_t query_base = Rng::derive(seed, kQueryStream);
  const std::uint64_t augment_base = Rng::derive(seed, kAugmentStream);

  for (long step = 1; step <= tc.steps; ++step) {
    const std::uint64_t s = static_cast<std::uint64_t>(step);
    PointCloud view = transform.apply(make_partial_view(
        shape, tc.view_count, tc.view_dir, tc.view_noise, Rng::derive(view_base, s)));

    PointCloud ref_step;
    const PointCloud* ref = &ref_norm;
    if (tc.augment) {
      Rng arng(Rng::derive(augment_base, s));
      const AugmentParams ap = draw_augment_params(arng);
      ref_step = apply_augmentation(ref_norm, ap);
      view = apply_augmentation(view, ap);
      ref = &ref_step;
    }

    Rng qrng(Rng::derive(query_base, s));
    const PointMatrix queries = sample_query_points(tc.query_count, mc.query_range, qrng);
    const TrainTargets targets =
        build_targets(queries, *ref, mc.n_anchors, tc.valid_radius,
                      ref_tree ? &*ref_tree : nullptr, anchor_ids ? &*anchor_ids : nullptr);

    Tape tape(true);
    BoundParams bound = bind_params(tape, fit.params);
    EncoderTokens enc = encode_partial_cloud(tape, bound, mc, view);
    AnchorPrediction anchors = predict_anchors(tape, bound, mc, enc);
    FineFeatures fine = fine_features(tape, bound, view);

    KdTree anchor_tree(tape.value(anchors.locations));
    KdTree fine_tree(fine.locations);
    NeighborGather gather =
        gather_neighbors(tape, queries, anchors.features, anchors.locations, anchor_tree,
                         fine.features, fine.locations, &fine_tree, mc.k_coarse, mc.k_fine);
    Tensor agg = aggregate_features(tape, bound, mc, gather, anchors.global);
    DecodeOutput out = decode_udf(tape, bound, mc, queries, agg);

    Tensor udf_term = udf_loss(out.udf, targets.udf, tc.udf_band);
    Tensor rgb_term =
        targets.valid_ids.empty()
            ? tape.constant(MatX::Zero(1, 1))
            : rgb_loss(decode_rgb_logits(tape, bound, gather_rows(out.trunk, targets.valid_ids)),
                       targets.rgb_classes);
    Tensor anchor_term = anchor_loss(anchors.locations, targets.anchor_targets);
    Tensor total = total_loss(udf_term, rgb_term, anchor_term, tc.weights);

    StepLoss log;
    log.step = step;
    log.anchor = tape.value(anchor_term)(0, 0);
    log.udf = tape.value(udf_term)(0, 0);
    log.rgb = tape.value(rgb_term)(0, 0);
    log.total = tape.value(total)(0, 0);

    if (!std::isfinite(log.total)) {
      fit.aborted = true;
      fit.abort_reason = "non-finite loss at step " + std::to_string(step);
      break;
    }

    tape.backward(total);
    try {
      opt.step(fit.params, collect_grads(bound, fit.params));
    } catch (const NumericError& e) {
      fit.aborted = true;
      fit.abort_reason = std::string(e.what()) + " at step " + std::to_string(step);
      break;
    }
    log.lr = opt.last_lr();
    fit.history.push_back(log);

    if (progress && (step == 1 || step % tc.log_every == 0 || step == tc.steps))
      *progress << "step " << step << "/" << tc.steps << " total " << log.total << " udf "
                << log.udf << " rgb " << log.rgb << " anchor " << log.anchor << "\n";
  }
  return fit;
}

void write_loss_csv(const std::string& path, const std::vector<StepLoss>& history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "step,anchor,udf,rgb,total,lr\n";
  char buf[256];
  for (const StepLoss& h : history) {
    std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%.17g,%.17g,%.17g\n", h.step, h.anchor,
                  h.udf, h.rgb, h.total, h.lr);
    out << buf;
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

void save_fit(const std::string& path, const FitResult& fit, const Shape& shape,
              const TrainConfig& tc, std::uint64_t seed) {
  nlohmann::json meta = {
      {"kind", "fit"},
      {"shape", shape_spec(shape)},
      {"seed", seed},
      {"model", fit.model.to_json()},
      {"train", tc.to_json()},
      {"normalization",
       {{"centroid",
         {fit.normalization.centroid.x(), fit.normalization.centroid.y(),
          fit.normalization.centroid.z()}},
        {"scale", fit.normalization.scale}}},
      {"aborted", fit.aborted}};
  if (fit.aborted) meta["abort_reason"] = fit.abort_reason;
  save_checkpoint(path, fit.params, meta);
}

LoadedFit load_fit(const std::string& path) {
  auto [params, meta] = load_checkpoint(path);
  if (meta.value("kind", "") != "fit")
    throw ParseError("checkpoint is not a fit: " + path, 0);
  LoadedFit fit;
  fit.params = std::move(params);
  fit.model = ModelConfig::from_json(meta.at("model"));
  fit.train = TrainConfig::from_json(meta.at("train"));
  fit.shape = parse_shape_spec(meta.at("shape").get<std::string>());
  fit.seed = meta.at("seed").get<std::uint64_t>();
  const auto& n = meta.at("normalization");
  const auto& c = n.at("centroid");
  fit.normalization.centroid = Vec3(c[0].get<double>(), c[1].get<double>(), c[2].get<double>());
  fit.normalization.scale = n.at("scale").get<double>();
  return fit;
}

PointCloud conditioning_view(const Shape& shape, const TrainConfig& tc, std::uint64_t seed,
                             const NormalizationTransform& normalization) {
  return normalization.apply(make_partial_view(shape, tc.view_count, tc.view_dir, tc.view_noise,
                                               Rng::derive(seed, kConditionStream)));
}

DecoderState decoder_state_from_fit(const LoadedFit& fit) {
  return make_decoder_state(fit.model, fit.params,
                            conditioning_view(fit.shape, fit.train, fit.seed, fit.normalization));
}

PipelineCheck make_pipeline_check(std::uint64_t seed) {
  PipelineCheck check;
  ModelConfig& mc = check.model;
  mc.d = 8;
  mc.n_tokens = 4;
  mc.n_anchors = 6;
  mc.k_coarse = 2;
  mc.k_fine = 2;
  mc.predictor_layers = 1;
  mc.predictor_heads = 2;
  mc.head_blocks = 2;
  mc.head_width = 8;
  mc.freq_bands = 2;
  mc.group_hidden = 8;
  mc.agg_hidden = 8;
  check.params = init_model_params(mc, Rng::derive(seed, kParamStream));

  const Shape shape = Shape::sphere(1.0);
  const PointCloud view =
      make_partial_view(shape, 24, Vec3(0, 0, 1), 0.01, Rng::derive(seed, kViewStream));
  const PointCloud reference = sample_surface(shape, 40, Rng::derive(seed, kReferenceStream));

  // Mostly near-surface queries so the color loss has valid rows; two far
  // ones exercise the distance band.
  Rng qrng(Rng::derive(seed, kQueryStream));
  PointMatrix queries(6, 3);
  for (Index i = 0; i < 4; ++i)
    queries.row(i) =
        reference.positions.row(static_cast<Index>(qrng.uniform_int(0, 39))) +
        0.03 * qrng.normal_vec3().transpose();
  for (Index i = 4; i < 6; ++i)
    queries.row(i) = Vec3(qrng.uniform(-3, 3), qrng.uniform(-3, 3), qrng.uniform(-3, 3))
                         .transpose();

  const TrainTargets targets = build_targets(queries, reference, mc.n_anchors);

  // Neighbor ids frozen at the initial parameters so perturbations during a
  // finite-difference probe cannot flip the discrete assignment.
  std::vector<int> frozen_ids;
  {
    Tape tape(false);
    BoundParams bound = bind_params(tape, check.params);
    EncoderTokens enc = encode_partial_cloud(tape, bound, mc, view);
    AnchorPrediction anchors = predict_anchors(tape, bound, mc, enc);
    const KdTree anchor_tree(tape.value(anchors.locations));
    const KdTree fine_tree(view.positions);
    for (Index i = 0; i < queries.rows(); ++i) {
      const Vec3 q = queries.row(i).transpose();
      for (const Neighbor& nb : anchor_tree.knn(q, mc.k_coarse)) frozen_ids.push_back(nb.index);
      for (const Neighbor& nb : fine_tree.knn(q, mc.k_fine))
        frozen_ids.push_back(mc.n_anchors + nb.index);
    }
  }

  const LossWeights weights;
  check.loss = [mc, view, queries, targets, frozen_ids, weights](
                   Tape& tape, const BoundParams& bound) -> Tensor {
    EncoderTokens enc = encode_partial_cloud(tape, bound, mc, view);
    AnchorPrediction anchors = predict_anchors(tape, bound, mc, enc);
    FineFeatures fine = fine_features(tape, bound, view);
    NeighborGather gather =
        gather_with_ids(tape, queries, anchors.features, anchors.locations, fine.features,
                        fine.locations, frozen_ids, mc.k_coarse + mc.k_fine);
    Tensor agg = aggregate_features(tape, bound, mc, gather, anchors.global);
    DecodeOutput out = decode_udf(tape, bound, mc, queries, agg);
    Tensor udf_term = udf_loss(out.udf, targets.udf);
    Tensor rgb_term =
        targets.valid_ids.empty()
            ? tape.constant(MatX::Zero(1, 1))
            : rgb_loss(decode_rgb_logits(tape, bound, gather_rows(out.trunk, targets.valid_ids)),
                       targets.rgb_classes);
    Tensor anchor_term = anchor_loss(anchors.locations, targets.anchor_targets);
    return total_loss(udf_term, rgb_term, anchor_term, weights);
  };
  return check;
}

}  // namespace repudf
