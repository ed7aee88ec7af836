#pragma once

// One gradient-check fixture per differentiable primitive. Inputs are sized
// and signed so every case sits away from kinks (relu/abs at zero, clamp
// edges) by a margin far larger than the probe step.

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "repudf/rng.hpp"
#include "repudf/tape.hpp"

namespace cases {

using repudf::BoundParams;
using repudf::Index;
using repudf::MatX;
using repudf::ParamStore;
using repudf::Rng;
using repudf::Tape;
using repudf::Tensor;

struct PrimitiveCase {
  std::string name;
  ParamStore params;
  std::function<Tensor(Tape&, const BoundParams&)> loss;
};

inline MatX random_mat(Rng& rng, Index rows, Index cols, double lo = -1.0, double hi = 1.0) {
  MatX m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = rng.uniform(lo, hi);
  return m;
}

// Keeps |x| >= margin so elementwise kinks stay out of probe range.
inline MatX random_offzero(Rng& rng, Index rows, Index cols, double margin = 0.05) {
  MatX m = random_mat(rng, rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) {
      if (m(r, c) >= 0.0 && m(r, c) < margin) m(r, c) += margin;
      if (m(r, c) < 0.0 && m(r, c) > -margin) m(r, c) -= margin;
    }
  return m;
}

inline std::vector<PrimitiveCase> primitive_cases(std::uint64_t seed) {
  using namespace repudf;
  std::vector<PrimitiveCase> out;
  Rng rng(seed);

  auto make = [&](const std::string& name, ParamStore ps,
                  std::function<Tensor(Tape&, const BoundParams&)> fn) {
    out.push_back({name, std::move(ps), std::move(fn)});
  };

  {
    ParamStore ps;
    ps.add("a", random_mat(rng, 3, 4));
    ps.add("b", random_mat(rng, 4, 2));
    make("matmul", ps,
         [](Tape&, const BoundParams& p) { return sum_all(matmul(p["a"], p["b"])); });
  }
  {
    ParamStore ps;
    ps.add("a", random_mat(rng, 3, 4));
    ps.add("w", random_mat(rng, 3, 4));
    make("transpose", ps, [](Tape& t, const BoundParams& p) {
      return sum_all(mul(transpose(p["a"]), t.constant(MatX::Ones(4, 3) * 0.5)));
    });
  }
  {
    ParamStore ps;
    ps.add("a", random_mat(rng, 3, 3));
    ps.add("b", random_mat(rng, 3, 3));
    make("add_sub_mul", ps, [](Tape&, const BoundParams& p) {
      return sum_all(mul(add(p["a"], p["b"]), sub(p["a"], p["b"])));
    });
  }
  {
    ParamStore ps;
    ps.add("a", random_mat(rng, 2, 5));
    make("scale", ps, [](Tape&, const BoundParams& p) { return sum_all(scale(p["a"], -1.7)); });
  }
  {
    ParamStore ps;
    ps.add("a", random_mat(rng, 4, 3));
    ps.add("v", random_mat(rng, 1, 3));
    make("add_rowvec", ps, [](Tape&, const BoundParams& p) {
      return sum_all(tanh(add_rowvec(p["a"], p["v"])));
    });
  }
  {
    ParamStore ps;
    ps.add("a", random_offzero(rng, 4, 4));
    make("relu", ps, [](Tape&, const BoundParams& p) { return sum_all(relu(p["a"])); });
  }
  {
    ParamStore ps;
    ps.add("a", random_offzero(rng, 4, 4));
    make("abs", ps, [](Tape&, const BoundParams& p) { return sum_all(abs(p["a"])); });
  }
  {
    ParamStore ps;
    ps.add("a", random_mat(rng, 3, 3));
    make("tanh", ps, [](Tape&, const BoundParams& p) { return sum_all(tanh(p["a"])); });
  }
  {
    ParamStore ps;
    ps.add("a", random_mat(rng, 3, 3, 0.2, 2.0));
    make("log", ps, [](Tape&, const BoundParams& p) { return sum_all(log(p["a"])); });
  }
  {
    ParamStore ps;
    MatX a = random_mat(rng, 4, 4, -1.0, 1.0);
    // Clamp bounds at +-0.4: keep entries at least 0.05 away from them.
    for (Index c = 0; c < 4; ++c)
      for (Index r = 0; r < 4; ++r)
        if (std::abs(std::abs(a(r, c)) - 0.4) < 0.05) a(r, c) += 0.1;
    ps.add("a", a);
    make("clamp", ps, [](Tape&, const BoundParams& p) {
      return sum_all(add(clamp_min(p["a"], -0.4), clamp_max(p["a"], 0.4)));
    });
  }
  {
    ParamStore ps;
    ps.add("a", random_mat(rng, 4, 5));
    make("softmax_rows", ps, [](Tape& t, const BoundParams& p) {
      return sum_all(mul(softmax(p["a"], 1), t.constant(MatX::Ones(4, 5) * 0.3)));
    });
  }
  {
    ParamStore ps;
    ps.add("a", random_mat(rng, 4, 5));
    ps.add("w", random_mat(rng, 4, 5));
    make("softmax_cols", ps, [](Tape&, const BoundParams& p) {
      return sum_all(mul(softmax(p["a"], 0), p["w"]));
    });
  }
  {
    ParamStore ps;
    ps.add("a", random_mat(rng, 3, 6));
    ps.add("w", random_mat(rng, 3, 6));
    make("log_softmax_rows", ps, [](Tape&, const BoundParams& p) {
      return sum_all(mul(log_softmax_rows(p["a"]), p["w"]));
    });
  }
  {
    ParamStore ps;
    ps.add("a", random_mat(rng, 2, 3));
    ps.add("b", random_mat(rng, 3, 3));
    make("concat_rows", ps, [](Tape&, const BoundParams& p) {
      return sum_all(tanh(concat_rows({p["a"], p["b"], p["a"]})));
    });
  }
  {
    ParamStore ps;
    ps.add("a", random_mat(rng, 3, 2));
    ps.add("b", random_mat(rng, 3, 4));
    make("concat_cols", ps, [](Tape&, const BoundParams& p) {
      return sum_all(tanh(concat_cols({p["a"], p["b"]})));
    });
  }
  {
    ParamStore ps;
    ps.add("a", random_mat(rng, 3, 8));
    make("slice_cols", ps, [](Tape&, const BoundParams& p) {
      return sum_all(mul(slice_cols(p["a"], 2, 3), slice_cols(p["a"], 4, 3)));
    });
  }
  {
    ParamStore ps;
    ps.add("a", random_mat(rng, 5, 3));
    make("gather_rows", ps, [](Tape&, const BoundParams& p) {
      // Repeated ids exercise gradient accumulation in the scatter.
      return sum_all(tanh(gather_rows(p["a"], {4, 0, 2, 0, 0})));
    });
  }
  {
    ParamStore ps;
    ps.add("a", random_mat(rng, 4, 3));
    make("sum_mean_all", ps, [](Tape&, const BoundParams& p) {
      return add(sum_all(p["a"]), scale(mean_all(p["a"]), 2.0));
    });
  }
  {
    ParamStore ps;
    ps.add("a", random_mat(rng, 4, 3));
    ps.add("w0", random_mat(rng, 1, 3));
    ps.add("w1", random_mat(rng, 4, 1));
    make("sum_mean_axis", ps, [](Tape&, const BoundParams& p) {
      Tensor r0 = sum_all(mul(sum_axis(p["a"], 0), p["w0"]));
      Tensor r1 = sum_all(mul(mean_axis(p["a"], 1), p["w1"]));
      return add(r0, r1);
    });
  }
  {
    ParamStore ps;
    ps.add("x", random_mat(rng, 5, 6));
    ps.add("g", random_mat(rng, 1, 6, 0.5, 1.5));
    ps.add("b", random_mat(rng, 1, 6));
    ps.add("w", random_mat(rng, 5, 6));
    make("layer_norm_rows", ps, [](Tape&, const BoundParams& p) {
      return sum_all(mul(layer_norm_rows(p["x"], p["g"], p["b"]), p["w"]));
    });
  }
  {
    ParamStore ps;
    ps.add("a", random_mat(rng, 8, 3));
    ps.add("w", random_mat(rng, 8, 3));
    make("segment_softmax_rows", ps, [](Tape&, const BoundParams& p) {
      return sum_all(mul(segment_softmax_rows(p["a"], 4), p["w"]));
    });
  }
  {
    ParamStore ps;
    ps.add("a", random_mat(rng, 6, 4));
    ps.add("w", random_mat(rng, 2, 4));
    make("segment_sum_rows", ps, [](Tape&, const BoundParams& p) {
      return sum_all(mul(segment_sum_rows(p["a"], 3), p["w"]));
    });
  }
  {
    ParamStore ps;
    ps.add("a", random_mat(rng, 6, 3));
    ps.add("w", random_mat(rng, 4, 3));
    make("ragged_mean_rows", ps, [](Tape&, const BoundParams& p) {
      // Group sizes 2, 0, 3, 1; the empty group contributes zeros.
      return sum_all(mul(ragged_mean_rows(p["a"], {0, 2, 2, 5, 6}), p["w"]));
    });
  }
  return out;
}

}  // namespace cases
