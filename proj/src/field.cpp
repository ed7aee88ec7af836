#include "repudf/field.hpp"

#include <stdexcept>

namespace repudf {

PointMatrix UdfField::colors(const PointMatrix&) const {
  throw std::logic_error("field has no colors");
}

VecX AnalyticField::eval(const PointMatrix& points) const {
  return eval_udf(shape_, points);
}

PointMatrix AnalyticField::gradient(const PointMatrix& points, std::vector<bool>& defined) const {
  const Index n = points.rows();
  PointMatrix g = PointMatrix::Zero(n, 3);
  defined.assign(static_cast<std::size_t>(n), false);
  for (Index i = 0; i < n; ++i) {
    if (auto d = eval_grad(shape_, Vec3(points.row(i).transpose()))) {
      g.row(i) = d->transpose();
      defined[static_cast<std::size_t>(i)] = true;
    }
  }
  return g;
}

PointMatrix AnalyticField::colors(const PointMatrix& points) const {
  PointMatrix c(points.rows(), 3);
  for (Index i = 0; i < points.rows(); ++i)
    c.row(i) = position_color(Vec3(points.row(i).transpose())).transpose();
  return c;
}

LearnedField::LearnedField(DecoderState state, const LearnedFieldConfig& cfg)
    : state_(std::move(state)), cfg_(cfg) {
  if (cfg_.fd_step <= 0.0)
    throw std::invalid_argument("learned field: fd_step must be positive");
  if (cfg_.zero_grad_eps < 0.0)
    throw std::invalid_argument("learned field: zero_grad_eps must be >= 0");
}

VecX LearnedField::raw(const PointMatrix& points) const {
  return decode_batch_udf(state_, points, cfg_.k_coarse, cfg_.k_fine);
}

VecX LearnedField::eval(const PointMatrix& points) const {
  return raw(points).cwiseMax(0.0);
}

PointMatrix LearnedField::gradient(const PointMatrix& points, std::vector<bool>& defined) const {
  const Index n = points.rows();
  // Six shifted copies evaluated as one batch keep the decode chunking warm.
  PointMatrix shifted(6 * n, 3);
  for (int axis = 0; axis < 3; ++axis) {
    PointMatrix plus = points, minus = points;
    plus.col(axis).array() += cfg_.fd_step;
    minus.col(axis).array() -= cfg_.fd_step;
    shifted.middleRows((2 * axis) * n, n) = plus;
    shifted.middleRows((2 * axis + 1) * n, n) = minus;
  }
  const VecX f = raw(shifted);
  PointMatrix g(n, 3);
  for (int axis = 0; axis < 3; ++axis)
    g.col(axis) =
        (f.segment((2 * axis) * n, n) - f.segment((2 * axis + 1) * n, n)) / (2.0 * cfg_.fd_step);

  defined.assign(static_cast<std::size_t>(n), false);
  for (Index i = 0; i < n; ++i) {
    const double norm = g.row(i).norm();
    if (norm > cfg_.zero_grad_eps) {
      g.row(i) /= norm;
      defined[static_cast<std::size_t>(i)] = true;
    } else {
      g.row(i).setZero();
    }
  }
  return g;
}

PointMatrix LearnedField::colors(const PointMatrix& points) const {
  return decode_batch_colors(state_, points, cfg_.k_coarse, cfg_.k_fine);
}

}  // namespace repudf
