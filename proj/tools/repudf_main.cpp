#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "repudf/demo2d.hpp"
#include "repudf/extract.hpp"
#include "repudf/gradcheck.hpp"
#include "repudf/metrics.hpp"
#include "repudf/ply.hpp"
#include "repudf/trainer.hpp"

namespace {

using namespace repudf;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

nlohmann::json load_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open config: " + path);
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("config " + path + ": " + e.what(), e.byte);
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

struct FitArgs {
  std::string shape = "torus";
  std::string config;
  std::string out = ".";
  std::uint64_t seed = 0;
  long steps = -1;
  long queries = -1;
};

int cmd_fit(const FitArgs& a) {
  const Shape shape = parse_shape_spec(a.shape);
  nlohmann::json cfg = a.config.empty() ? nlohmann::json::object() : load_config(a.config);
  ModelConfig mc = cfg.contains("model") ? ModelConfig::from_json(cfg.at("model")) : ModelConfig{};
  TrainConfig tc = cfg.contains("train") ? TrainConfig::from_json(cfg.at("train")) : TrainConfig{};
  if (a.steps >= 0) tc.steps = a.steps;
  if (a.queries >= 0) tc.query_count = a.queries;

  const FitResult fit = fit_shape(shape, mc, tc, a.seed, &std::cerr);

  std::filesystem::create_directories(a.out);
  const auto base = std::filesystem::path(a.out);
  save_fit((base / "checkpoint.rudf").string(), fit, shape, tc, a.seed);
  write_loss_csv((base / "loss_log.csv").string(), fit.history);

  nlohmann::json summary = {{"shape", shape_spec(shape)},
                            {"seed", a.seed},
                            {"steps_completed", fit.history.size()},
                            {"aborted", fit.aborted},
                            {"checkpoint", "checkpoint.rudf"},
                            {"loss_log", "loss_log.csv"}};
  if (fit.aborted) summary["abort_reason"] = fit.abort_reason;
  if (!fit.history.empty()) {
    const StepLoss& last = fit.history.back();
    summary["final"] = {{"anchor", last.anchor},
                        {"udf", last.udf},
                        {"rgb", last.rgb},
                        {"total", last.total}};
  }
  write_json(base / "fit_summary.json", summary);

  if (fit.aborted) {
    std::cerr << "fit aborted: " << fit.abort_reason << "\n";
    return kExitNumeric;
  }
  return kExitOk;
}

struct ExtractArgs {
  std::string field;
  std::string config;
  std::string out = ".";
  std::uint64_t seed = 0;
  std::string repulsion = "on";
  long iterations = -1;
  double threshold = -1.0;
  long k_repulsion = -1;
  double clamp = -1.0;
  long k_coarse = -1;
  long k_fine = -1;
  long queries = -1;
  bool ascii_ply = false;
};

int cmd_extract(const ExtractArgs& a) {
  nlohmann::json cfg = a.config.empty() ? nlohmann::json::object() : load_config(a.config);
  ExtractionConfig ex = cfg.contains("extraction")
                            ? ExtractionConfig::from_json(cfg.at("extraction"))
                            : ExtractionConfig{};
  ex.repulsion = a.repulsion == "on";
  if (a.iterations >= 0) ex.iterations = static_cast<int>(a.iterations);
  if (a.threshold >= 0.0) ex.threshold = a.threshold;
  if (a.k_repulsion >= 0) ex.k_repulsion = static_cast<int>(a.k_repulsion);
  if (a.clamp >= 0.0) ex.clamp = a.clamp;
  if (a.queries >= 0) ex.query_count = a.queries;

  LearnedFieldConfig lcfg;
  if (cfg.contains("field")) {
    lcfg.fd_step = cfg.at("field").value("fd_step", lcfg.fd_step);
    lcfg.zero_grad_eps = cfg.at("field").value("zero_grad_eps", lcfg.zero_grad_eps);
  }
  if (a.k_coarse >= 0) lcfg.k_coarse = static_cast<int>(a.k_coarse);
  if (a.k_fine >= 0) lcfg.k_fine = static_cast<int>(a.k_fine);

  // Learned fields live in the fit's normalized frame; results are mapped
  // back to the shape's frame (positions inverted, distances rescaled).
  std::unique_ptr<UdfField> field;
  NormalizationTransform to_original;
  constexpr const char* kAnalyticPrefix = "analytic:";
  if (a.field.rfind(kAnalyticPrefix, 0) == 0) {
    field = std::make_unique<AnalyticField>(
        parse_shape_spec(a.field.substr(std::string(kAnalyticPrefix).size())));
  } else {
    const LoadedFit fit = load_fit(a.field);
    to_original = fit.normalization;
    field = std::make_unique<LearnedField>(decoder_state_from_fit(fit), lcfg);
  }

  ExtractResult result = extract_surface(*field, ex, a.seed);
  result.cloud.positions = to_original.invert(result.cloud.positions);
  if (result.cloud.has_udf()) result.cloud.udf *= to_original.scale;

  std::filesystem::create_directories(a.out);
  const auto base = std::filesystem::path(a.out);
  write_ply((base / "extracted.ply").string(), result.cloud, a.ascii_ply);
  write_json(base / "extract_summary.json",
             {{"field", a.field},
              {"seed", a.seed},
              {"repulsion", ex.repulsion},
              {"iterations", result.iterations},
              {"threshold", ex.threshold},
              {"query_count", ex.query_count},
              {"initial_count", result.initial_count},
              {"surviving_count", result.surviving_count},
              {"empty", result.empty},
              {"output", "extracted.ply"}});
  return kExitOk;
}

struct EvalArgs {
  std::string pred;
  std::string gt;
  std::string out = ".";
  double radius = 0.1;
};

int cmd_eval(const EvalArgs& a) {
  const PointCloud pred = read_ply(a.pred);
  const PointCloud gt = read_ply(a.gt);
  const EvalReport report = evaluate(pred, gt, a.radius);

  std::filesystem::create_directories(a.out);
  const auto base = std::filesystem::path(a.out);
  write_json(base / "report.json", report.to_json());
  std::ofstream csv(base / "report.csv", std::ios::binary);
  if (!csv) throw std::runtime_error("cannot open for writing: report.csv");
  csv << report.to_csv();
  std::cout << report.to_json().dump(2) << "\n";
  return kExitOk;
}

struct Demo2dArgs {
  std::string out = "demo2d";
  std::uint64_t seed = 0;
  long queries = -1;
  long iterations = -1;
  double threshold = -1.0;
  long k_repulsion = -1;
  double clamp = -1.0;
};

int cmd_demo2d(const Demo2dArgs& a) {
  Demo2dConfig cfg;
  if (a.queries >= 0) cfg.query_count = a.queries;
  if (a.iterations >= 0) cfg.extraction.iterations = static_cast<int>(a.iterations);
  if (a.threshold >= 0.0) cfg.extraction.threshold = a.threshold;
  if (a.k_repulsion >= 0) cfg.extraction.k_repulsion = static_cast<int>(a.k_repulsion);
  if (a.clamp >= 0.0) cfg.extraction.clamp = a.clamp;
  const Demo2dSummary summary = run_demo2d(cfg, a.seed, a.out);
  std::cout << summary.to_json().dump(2) << "\n";
  return kExitOk;
}

struct GradcheckArgs {
  std::uint64_t seed = 0;
  int seeds = 10;
  int samples = 4;
  double h = 1e-6;
  double tolerance = 1e-4;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  double worst = 0.0;
  std::string worst_name;
  for (int i = 0; i < a.seeds; ++i) {
    const PipelineCheck check = make_pipeline_check(a.seed + static_cast<std::uint64_t>(i));
    const GradCheckReport report =
        grad_check(check.loss, check.params, a.h, a.samples, a.seed + 1000 + i);
    if (report.max_rel_error > worst) {
      worst = report.max_rel_error;
      worst_name = report.worst_name;
    }
    std::cerr << "seed " << i << " max error " << report.max_rel_error << " ("
              << report.worst_name << ")\n";
  }
  std::cout << "max relative error " << worst << " over " << a.seeds << " seeds\n";
  if (worst >= a.tolerance) {
    std::cerr << "gradient check failed at " << worst_name << "\n";
    return kExitNumeric;
  }
  return kExitOk;
}

int run(int argc, char** argv) {
  CLI::App app{"Anchor-conditioned distance-field fitting and repulsive surface extraction"};
  app.require_subcommand(1);

  FitArgs fit;
  CLI::App* sfit = app.add_subcommand("fit", "train a model on one shape");
  sfit->add_option("--shape", fit.shape, "shape spec, e.g. torus:1,0.3");
  sfit->add_option("--config", fit.config, "JSON config with model/train sections");
  sfit->add_option("--out", fit.out, "output directory");
  sfit->add_option("--seed", fit.seed, "root seed");
  sfit->add_option("--steps", fit.steps, "override training steps");
  sfit->add_option("--queries", fit.queries, "override per-step query count");

  ExtractArgs ext;
  CLI::App* sext = app.add_subcommand("extract", "extract a surface point cloud");
  sext->add_option("--field", ext.field, "analytic:<shape> or fit checkpoint path")->required();
  sext->add_option("--config", ext.config, "JSON config with extraction/field sections");
  sext->add_option("--out", ext.out, "output directory");
  sext->add_option("--seed", ext.seed, "root seed");
  sext->add_option("--repulsion", ext.repulsion, "on|off")
      ->check(CLI::IsMember({"on", "off"}));
  sext->add_option("--iterations", ext.iterations, "shift/repulsion iterations");
  sext->add_option("--threshold", ext.threshold, "initial survival threshold");
  sext->add_option("--k-repulsion", ext.k_repulsion, "repulsion neighbors");
  sext->add_option("--clamp", ext.clamp, "per-component displacement clamp");
  sext->add_option("--k-coarse", ext.k_coarse, "anchors per query (learned fields)");
  sext->add_option("--k-fine", ext.k_fine, "seen points per query (learned fields)");
  sext->add_option("--queries", ext.queries, "initial query count");
  sext->add_flag("--ascii-ply", ext.ascii_ply, "write ASCII instead of binary PLY");

  EvalArgs ev;
  CLI::App* sev = app.add_subcommand("eval", "compare two PLY point clouds");
  sev->add_option("pred", ev.pred, "predicted cloud")->required();
  sev->add_option("gt", ev.gt, "reference cloud")->required();
  sev->add_option("--out", ev.out, "output directory");
  sev->add_option("--radius", ev.radius, "match radius");

  Demo2dArgs demo;
  CLI::App* sdemo = app.add_subcommand("demo2d", "planar repulsion study on the L profile");
  sdemo->add_option("--out", demo.out, "output directory");
  sdemo->add_option("--seed", demo.seed, "root seed");
  sdemo->add_option("--queries", demo.queries, "initial query count");
  sdemo->add_option("--iterations", demo.iterations, "shift/repulsion iterations");
  sdemo->add_option("--threshold", demo.threshold, "initial survival threshold");
  sdemo->add_option("--k-repulsion", demo.k_repulsion, "repulsion neighbors");
  sdemo->add_option("--clamp", demo.clamp, "per-component displacement clamp");

  GradcheckArgs gc;
  CLI::App* sgc = app.add_subcommand("gradcheck", "finite-difference pipeline gradient check");
  sgc->add_option("--seed", gc.seed, "base seed");
  sgc->add_option("--seeds", gc.seeds, "number of seeds");
  sgc->add_option("--samples", gc.samples, "entries probed per tensor");
  sgc->add_option("--fd-step", gc.h, "central-difference half step");
  sgc->add_option("--tolerance", gc.tolerance, "failure threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::cerr << e.what() << "\n";
    return kExitUsage;
  }

  if (sfit->parsed()) return cmd_fit(fit);
  if (sext->parsed()) return cmd_extract(ext);
  if (sev->parsed()) return cmd_eval(ev);
  if (sdemo->parsed()) return cmd_demo2d(demo);
  return cmd_gradcheck(gc);
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* env = std::getenv("REPUDF_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || n < 1) {
      std::cerr << "REPUDF_THREADS must be a positive integer, got \"" << env << "\"\n";
      return kExitUsage;
    }
    repudf::set_thread_count(static_cast<int>(n));
  }
  try {
    return run(argc, argv);
  } catch (const repudf::ParseError& e) {
    std::cerr << "parse error at byte " << e.byte_offset << ": " << e.what() << "\n";
    return kExitData;
  } catch (const repudf::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}
