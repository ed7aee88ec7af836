#include "repudf/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace repudf {

namespace {

double eval_loss(const TapeLoss& fn, const ParamStore& params) {
  Tape tape(false);
  BoundParams bound = bind_params(tape, params);
  Tensor loss = fn(tape, bound);
  const MatX& v = tape.value(loss);
  if (v.rows() != 1 || v.cols() != 1)
    throw std::invalid_argument("grad_check: loss must be scalar");
  return v(0, 0);
}

}  // namespace

GradCheckReport grad_check(const TapeLoss& loss_fn, ParamStore params, double h,
                           int samples_per_tensor, std::uint64_t seed) {
  if (!(h > 0.0)) throw std::invalid_argument("grad_check: h must be positive");
  if (samples_per_tensor < 1)
    throw std::invalid_argument("grad_check: samples_per_tensor must be >= 1");
  Tape tape(true);
  BoundParams bound = bind_params(tape, params);
  Tensor loss = loss_fn(tape, bound);
  tape.backward(loss);
  const std::vector<MatX> grads = collect_grads(bound, params);

  Rng rng(seed);
  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.count(); ++pi) {
    const std::string& name = params.names()[pi];
    MatX& p = params.at(name);
    const Index total = p.size();
    std::vector<Index> entries;
    if (total <= samples_per_tensor) {
      entries.resize(total);
      for (Index e = 0; e < total; ++e) entries[e] = e;
    } else {
      // Distinct flat indices via floyd-style rejection; counts are tiny.
      while (static_cast<int>(entries.size()) < samples_per_tensor) {
        const Index e = static_cast<Index>(rng.next_u64() % static_cast<std::uint64_t>(total));
        if (std::find(entries.begin(), entries.end(), e) == entries.end()) entries.push_back(e);
      }
    }
    for (const Index e : entries) {
      const Index r = e % p.rows(), c = e / p.rows();
      const double saved = p(r, c);
      p(r, c) = saved + h;
      const double up = eval_loss(loss_fn, params);
      p(r, c) = saved - h;
      const double down = eval_loss(loss_fn, params);
      p(r, c) = saved;
      const double fd = (up - down) / (2.0 * h);
      const double ad = grads[pi](r, c);
      const double rel = std::abs(ad - fd) / std::max({1.0, std::abs(ad), std::abs(fd)});
      ++report.entries_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_name = name;
        report.worst_row = r;
        report.worst_col = c;
      }
    }
  }
  return report;
}

}  // namespace repudf
