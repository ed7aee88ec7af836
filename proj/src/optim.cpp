#include "repudf/optim.hpp"

#include <cmath>

namespace repudf {

Adam::Adam(const ParamStore& params, AdamConfig cfg) : cfg_(cfg) {
  if (!(cfg_.lr > 0.0)) throw std::invalid_argument("adam: lr must be positive");
  if (cfg_.warmup_steps < 0 || cfg_.total_steps < 1)
    throw std::invalid_argument("adam: bad schedule bounds");
  m_.reserve(params.count());
  v_.reserve(params.count());
  for (const auto& name : params.names()) {
    const MatX& p = params.at(name);
    m_.push_back(MatX::Zero(p.rows(), p.cols()));
    v_.push_back(MatX::Zero(p.rows(), p.cols()));
  }
}

double Adam::effective_lr(long step) const {
  if (cfg_.warmup_steps > 0 && step <= cfg_.warmup_steps)
    return cfg_.lr * static_cast<double>(step) / static_cast<double>(cfg_.warmup_steps);
  if (cfg_.total_steps <= cfg_.warmup_steps) return cfg_.lr;
  const double progress = static_cast<double>(step - cfg_.warmup_steps) /
                          static_cast<double>(cfg_.total_steps - cfg_.warmup_steps);
  return cfg_.lr * 0.5 * (1.0 + std::cos(M_PI * std::min(progress, 1.0)));
}

void Adam::step(ParamStore& params, const std::vector<MatX>& grads) {
  if (grads.size() != params.count())
    throw std::invalid_argument("adam: got " + std::to_string(grads.size()) +
                                " gradients for " + std::to_string(params.count()) +
                                " parameters");
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!grads[i].allFinite())
      throw NumericError("adam: non-finite gradient for " + params.names()[i]);
  ++t_;
  last_lr_ = effective_lr(t_);
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    MatX& p = params.at(params.names()[i]);
    const MatX& g = grads[i];
    if (g.rows() != p.rows() || g.cols() != p.cols())
      throw std::invalid_argument("adam: gradient shape mismatch for " + params.names()[i]);
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    p.array() -= last_lr_ * (m_[i].array() / c1) /
                 ((v_[i].array() / c2).sqrt() + cfg_.eps);
  }
}

}  // namespace repudf
