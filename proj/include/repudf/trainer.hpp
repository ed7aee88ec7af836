#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "repudf/geometry.hpp"
#include "repudf/losses.hpp"
#include "repudf/model.hpp"
#include "repudf/shapes.hpp"

namespace repudf {

struct TrainConfig {
  long steps = 5000;
  Index query_count = 550;
  Index gt_count = 20000;
  Index view_count = 1024;
  Vec3 view_dir = Vec3(0.0, 0.0, 1.0);
  double view_noise = 0.01;
  bool augment = false;  // joint rigid+scale augmentation of reference and view
  double lr = 1e-4;
  double warmup_frac = 0.05;  // linear warmup over this fraction of steps, then cosine
  LossWeights weights;
  double udf_band = 0.5;
  double valid_radius = 0.1;
  int log_every = 250;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct StepLoss {
  long step = 0;
  double anchor = 0.0;
  double udf = 0.0;
  double rgb = 0.0;
  double total = 0.0;
  double lr = 0.0;
};

struct FitResult {
  ModelConfig model;
  ParamStore params;
  NormalizationTransform normalization;
  std::vector<StepLoss> history;
  bool aborted = false;  // non-finite loss or gradient stopped the run early
  std::string abort_reason;
};

// Auto-decodes one shape: a fresh noisy partial view every step, targets from
// a fixed dense reference cloud, everything derived deterministically from
// `seed`. On a non-finite loss or gradient the run stops and returns what it
// has, flagged, so callers can still checkpoint the last healthy state.
FitResult fit_shape(const Shape& shape, const ModelConfig& mc, const TrainConfig& tc,
                    std::uint64_t seed, std::ostream* progress = nullptr);

// step,anchor,udf,rgb,total,lr with full round-trip precision. Identical runs
// produce byte-identical files.
void write_loss_csv(const std::string& path, const std::vector<StepLoss>& history);

void save_fit(const std::string& path, const FitResult& fit, const Shape& shape,
              const TrainConfig& tc, std::uint64_t seed);

struct LoadedFit {
  ModelConfig model;
  ParamStore params;
  NormalizationTransform normalization;
  Shape shape;
  TrainConfig train;
  std::uint64_t seed = 0;
};

LoadedFit load_fit(const std::string& path);

// The deterministic partial view a loaded fit conditions on at inference
// time: same generation settings as the training views, its own stream.
PointCloud conditioning_view(const Shape& shape, const TrainConfig& tc, std::uint64_t seed,
                             const NormalizationTransform& normalization);

DecoderState decoder_state_from_fit(const LoadedFit& fit);

// Tiny frozen training problem (model, data, neighbor assignment all fixed)
// whose closure rebuilds the full encode -> anchors -> aggregate -> decode ->
// total-loss graph, for finite-difference gradient verification.
struct PipelineCheck {
  ModelConfig model;
  ParamStore params;
  std::function<Tensor(Tape&, const BoundParams&)> loss;
};

PipelineCheck make_pipeline_check(std::uint64_t seed);

}  // namespace repudf
