#include "repudf/demo2d.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "repudf/field.hpp"
#include "repudf/geometry.hpp"

namespace repudf {

namespace {

constexpr std::uint64_t kReferenceStream = 11;

void write_csv(const std::string& path, const std::string& header, const MatX& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << header << "\n";
  char buf[64];
  for (Index r = 0; r < rows.rows(); ++r) {
    for (Index c = 0; c < rows.cols(); ++c) {
      std::snprintf(buf, sizeof buf, c + 1 < rows.cols() ? "%.17g," : "%.17g\n", rows(r, c));
      out << buf;
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

Index cell_count(const PointMatrix& points, double cx, double cy, double half) {
  Index n = 0;
  for (Index i = 0; i < points.rows(); ++i)
    if (std::abs(points(i, 0) - cx) <= half && std::abs(points(i, 1) - cy) <= half) ++n;
  return n;
}

}  // namespace

void Demo2dConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("demo2d config: " + what);
  };
  require(shape.kind == ShapeKind::LProfile, "shape must be an L profile");
  require(query_count >= 1, "query_count must be >= 1");
  require(reference_count >= 1, "reference_count must be >= 1");
  require(coverage_radius > 0.0, "coverage_radius must be positive");
  require(census_cell > 0.0, "census_cell must be positive");
  require(potential_resolution >= 2, "potential_resolution must be >= 2");
  require(gradient_resolution >= 2, "gradient_resolution must be >= 2");
  extraction.validate();
}

nlohmann::json Demo2dSummary::to_json() const {
  return {{"initial_count", initial_count},
          {"survivors_off", survivors_off},
          {"survivors_on", survivors_on},
          {"coverage_off", coverage_off},
          {"coverage_on", coverage_on},
          {"spacing_cv_off", spacing_cv_off},
          {"spacing_cv_on", spacing_cv_on},
          {"corner_flat_ratio_off", corner_flat_ratio_off},
          {"corner_flat_ratio_on", corner_flat_ratio_on}};
}

double corner_flat_ratio(const PointMatrix& points, const Shape& lp, double cell) {
  if (lp.kind != ShapeKind::LProfile)
    throw std::invalid_argument("corner_flat_ratio: shape must be an L profile");
  if (cell <= 0.0) throw std::invalid_argument("corner_flat_ratio: cell must be positive");
  const double a = lp.p0, b = lp.p1;
  const double half = 0.5 * cell;
  // Outer convex corner of the L versus the midpoint of the bottom edge.
  const Index corner = cell_count(points, -0.5 * a, -0.5 * b, half);
  const Index flat = cell_count(points, 0.0, -0.5 * b, half);
  return static_cast<double>(corner) / static_cast<double>(std::max<Index>(flat, 1));
}

Demo2dSummary run_demo2d(const Demo2dConfig& cfg, std::uint64_t seed,
                         const std::string& out_dir) {
  cfg.validate();
  const AnalyticField field(cfg.shape);

  ExtractionConfig ex = cfg.extraction;
  ex.planar = true;
  ex.query_count = cfg.query_count;

  ExtractionConfig ex_off = ex;
  ex_off.repulsion = false;
  const ExtractResult off = extract_surface(field, ex_off, seed);

  ExtractionConfig ex_on = ex;
  ex_on.repulsion = true;
  const ExtractResult on = extract_surface(field, ex_on, seed);

  const PointCloud reference =
      sample_surface(cfg.shape, cfg.reference_count, Rng::derive(seed, kReferenceStream));

  Demo2dSummary s;
  s.initial_count = off.initial_count;
  s.survivors_off = off.surviving_count;
  s.survivors_on = on.surviving_count;
  s.coverage_off = coverage(reference.positions, off.cloud.positions, cfg.coverage_radius);
  s.coverage_on = coverage(reference.positions, on.cloud.positions, cfg.coverage_radius);
  s.spacing_cv_off =
      off.cloud.size() >= 2 ? spacing_uniformity_cv(off.cloud.positions) : 0.0;
  s.spacing_cv_on = on.cloud.size() >= 2 ? spacing_uniformity_cv(on.cloud.positions) : 0.0;
  s.corner_flat_ratio_off = corner_flat_ratio(off.cloud.positions, cfg.shape, cfg.census_cell);
  s.corner_flat_ratio_on = corner_flat_ratio(on.cloud.positions, cfg.shape, cfg.census_cell);

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    const auto base = std::filesystem::path(out_dir);

    const PointMatrix queries =
        init_queries(ex.query_count, ex.query_range, seed, /*planar=*/true);
    const VecX f0 = field.eval(queries);
    std::vector<Index> keep;
    for (Index i = 0; i < queries.rows(); ++i)
      if (f0[i] < ex.threshold) keep.push_back(i);
    MatX init(static_cast<Index>(keep.size()), 2);
    for (Index i = 0; i < init.rows(); ++i)
      init.row(i) = queries.row(keep[static_cast<std::size_t>(i)]).head<2>();
    write_csv((base / "init_points.csv").string(), "x,y", init);

    write_csv((base / "final_repulsion_off.csv").string(), "x,y",
              off.cloud.positions.leftCols<2>());
    write_csv((base / "final_repulsion_on.csv").string(), "x,y",
              on.cloud.positions.leftCols<2>());

    {
      const int res = cfg.potential_resolution;
      MatX grid(static_cast<Index>(res) * res, 3);
      Index r = 0;
      for (int iy = 0; iy < res; ++iy)
        for (int ix = 0; ix < res; ++ix) {
          const double x = -ex.query_range + 2.0 * ex.query_range * ix / (res - 1);
          const double y = -ex.query_range + 2.0 * ex.query_range * iy / (res - 1);
          grid(r, 0) = x;
          grid(r, 1) = y;
          grid(r, 2) = eval_udf(cfg.shape, Vec3(x, y, 0.0));
          ++r;
        }
      write_csv((base / "potential_grid.csv").string(), "x,y,udf", grid);
    }
    {
      const int res = cfg.gradient_resolution;
      MatX grid(static_cast<Index>(res) * res, 4);
      Index r = 0;
      for (int iy = 0; iy < res; ++iy)
        for (int ix = 0; ix < res; ++ix) {
          const double x = -ex.query_range + 2.0 * ex.query_range * ix / (res - 1);
          const double y = -ex.query_range + 2.0 * ex.query_range * iy / (res - 1);
          grid(r, 0) = x;
          grid(r, 1) = y;
          const auto g = eval_grad(cfg.shape, Vec3(x, y, 0.0));
          grid(r, 2) = g ? g->x() : 0.0;
          grid(r, 3) = g ? g->y() : 0.0;
          ++r;
        }
      write_csv((base / "gradient_grid.csv").string(), "x,y,gx,gy", grid);
    }

    std::ofstream sum((base / "summary.json").string(), std::ios::binary);
    if (!sum) throw std::runtime_error("cannot open for writing: summary.json");
    sum << s.to_json().dump(2) << "\n";
  }
  return s;
}

}  // namespace repudf
