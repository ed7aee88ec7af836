#pragma once

#include <string>

#include "repudf/extract.hpp"
#include "repudf/metrics.hpp"
#include "repudf/shapes.hpp"

namespace repudf {

// Planar extraction study on a flat L-shaped region: the same seed is run
// once without and once with repulsion, and the two results are compared on
// surface coverage, spacing uniformity, and crowding at the outer corner.
struct Demo2dConfig {
  Shape shape = Shape::lprofile(2.0, 2.0, 0.6);
  Index query_count = 20000;
  Index reference_count = 20000;  // dense surface sampling for coverage
  double coverage_radius = 0.05;
  double census_cell = 0.15;  // side of the corner / flat-edge counting cells
  int potential_resolution = 120;
  int gradient_resolution = 24;
  ExtractionConfig extraction;  // planar is forced on

  void validate() const;
};

struct Demo2dSummary {
  Index initial_count = 0;
  Index survivors_off = 0;
  Index survivors_on = 0;
  double coverage_off = 0.0;
  double coverage_on = 0.0;
  double spacing_cv_off = 0.0;
  double spacing_cv_on = 0.0;
  double corner_flat_ratio_off = 0.0;
  double corner_flat_ratio_on = 0.0;

  nlohmann::json to_json() const;
};

// Points per axis-aligned census cell at the outer corner of the L divided by
// the count at the bottom edge midpoint (floored at 1 to stay finite).
double corner_flat_ratio(const PointMatrix& points, const Shape& lprofile, double cell);

// Runs both passes and, when out_dir is non-empty, writes init_points.csv,
// final_repulsion_off.csv, final_repulsion_on.csv, potential_grid.csv,
// gradient_grid.csv and summary.json there. Identical configs and seeds
// reproduce every file byte for byte.
Demo2dSummary run_demo2d(const Demo2dConfig& cfg, std::uint64_t seed,
                         const std::string& out_dir);

}  // namespace repudf
