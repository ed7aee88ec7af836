#pragma once

#include <memory>
#include <vector>

#include "repudf/model.hpp"
#include "repudf/shapes.hpp"

namespace repudf {

// A queryable unsigned distance field. eval() is non-negative; gradient()
// returns one direction row per point with defined[i] false wherever no
// reliable direction exists (ambiguous closest point, vanishing numeric
// gradient). Implementations must be safe to call concurrently.
class UdfField {
 public:
  virtual ~UdfField() = default;

  virtual VecX eval(const PointMatrix& points) const = 0;
  virtual PointMatrix gradient(const PointMatrix& points, std::vector<bool>& defined) const = 0;

  virtual bool has_colors() const { return false; }
  virtual PointMatrix colors(const PointMatrix& points) const;  // throws unless has_colors
};

class AnalyticField : public UdfField {
 public:
  explicit AnalyticField(const Shape& shape) : shape_(shape) {}

  VecX eval(const PointMatrix& points) const override;
  PointMatrix gradient(const PointMatrix& points, std::vector<bool>& defined) const override;
  bool has_colors() const override { return true; }
  PointMatrix colors(const PointMatrix& points) const override;

  const Shape& shape() const { return shape_; }

 private:
  Shape shape_;
};

struct LearnedFieldConfig {
  double fd_step = 1e-3;       // central-difference half-step
  double zero_grad_eps = 1e-9;  // gradient norms below this count as undefined
  int k_coarse = -1;           // -1 keeps the trained value
  int k_fine = -1;
};

// Decoder predictions as a field. eval clamps the raw prediction at zero (a
// distance cannot be negative); gradients are central differences of the raw,
// unclamped prediction so directions survive where the network dips negative.
class LearnedField : public UdfField {
 public:
  LearnedField(DecoderState state, const LearnedFieldConfig& cfg = {});

  VecX eval(const PointMatrix& points) const override;
  PointMatrix gradient(const PointMatrix& points, std::vector<bool>& defined) const override;
  bool has_colors() const override { return true; }
  PointMatrix colors(const PointMatrix& points) const override;

  const DecoderState& state() const { return state_; }

 private:
  VecX raw(const PointMatrix& points) const;

  DecoderState state_;
  LearnedFieldConfig cfg_;
};

}  // namespace repudf
