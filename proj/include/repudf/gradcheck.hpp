#pragma once

#include <functional>

#include "repudf/rng.hpp"
#include "repudf/tape.hpp"

namespace repudf {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_name;
  Index worst_row = 0, worst_col = 0;
  long entries_checked = 0;
};

// Builds a scalar loss from bound parameters; called once with gradients on
// and twice per probed entry with gradients off.
using TapeLoss = std::function<Tensor(Tape&, const BoundParams&)>;

// Compares tape gradients against central differences at step h. Per tensor,
// up to samples_per_tensor entries are probed (all of them when the tensor is
// small). The error for one entry is |ad - fd| / max(1, |ad|, |fd|), i.e.
// relative for large gradients and absolute for tiny ones.
GradCheckReport grad_check(const TapeLoss& loss_fn, ParamStore params, double h,
                           int samples_per_tensor, std::uint64_t seed);

}  // namespace repudf
