#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace repudf {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using RowVec3 = Eigen::RowVector3d;
// One point per row. Positions and colors share this layout; colors are in [0, 1].
using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using Index = Eigen::Index;

// Malformed data from outside the process (files, streams). byte_offset points
// at the first byte the parser could not accept.
struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, std::size_t offset)
      : std::runtime_error(msg), byte_offset(offset) {}
  std::size_t byte_offset = 0;
};

// Non-finite values or numerically impossible requests discovered mid-computation.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Points with optional per-point colors and UDF values. Empty matrices mean
// "absent"; when present, row counts must match the position count.
struct PointCloud {
  PointMatrix positions;
  PointMatrix colors;
  VecX udf;

  Index size() const { return positions.rows(); }
  bool has_colors() const { return colors.rows() > 0; }
  bool has_udf() const { return udf.size() > 0; }

  void validate() const {
    if (has_colors() && colors.rows() != positions.rows())
      throw std::invalid_argument("point cloud: color rows " + std::to_string(colors.rows()) +
                                  " != position rows " + std::to_string(positions.rows()));
    if (has_udf() && udf.size() != positions.rows())
      throw std::invalid_argument("point cloud: udf length " + std::to_string(udf.size()) +
                                  " != position rows " + std::to_string(positions.rows()));
  }
};

// Worker cap for the batched inference/extraction paths. Defaults to 1; the
// CLI seeds it from REPUDF_THREADS. Results do not depend on the value.
int thread_count();
void set_thread_count(int n);

}  // namespace repudf
