#pragma once

#include <vector>

#include "repudf/tape.hpp"

namespace repudf {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long warmup_steps = 0;  // linear ramp over the first steps
  long total_steps = 1;   // cosine decay horizon after warmup
};

// Adam with linear warmup then cosine decay to zero at total_steps.
class Adam {
 public:
  Adam(const ParamStore& params, AdamConfig cfg);

  // step is 1-based: step 1 during warmup gives lr * 1 / warmup_steps.
  double effective_lr(long step) const;
  long step_count() const { return t_; }
  double last_lr() const { return last_lr_; }

  // grads must be in params.names() order. Throws NumericError on any
  // non-finite gradient entry, leaving parameters untouched.
  void step(ParamStore& params, const std::vector<MatX>& grads);

 private:
  AdamConfig cfg_;
  std::vector<MatX> m_, v_;
  long t_ = 0;
  double last_lr_ = 0.0;
};

}  // namespace repudf
