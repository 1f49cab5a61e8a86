#include "lazyrec/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace lazyrec {

AdamW::AdamW(ParameterStore& params, AdamWConfig cfg) : params_(params), cfg_(cfg) {
  if (!(cfg_.lr >= 0.0) || !(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0) ||
      !(cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0) || !(cfg_.eps > 0.0) || cfg_.weight_decay < 0.0) {
    throw std::invalid_argument("AdamW: invalid hyperparameters");
  }
  for (const auto& p : params_.vars()) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  auto& vars = params_.vars();
  for (std::size_t i = 0; i < vars.size(); ++i) {
    const ad::Node& node = *vars[i].shared();
    if (!node.has_grad) continue;
    const auto& g = node.grad.data();
    auto w = vars[i].mutable_value().mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    const double decay = params_.decays(i) ? cfg_.lr * cfg_.weight_decay : 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= decay * w[j] + cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void AdamW::zero_grad() { ad::zero_grad(params_.vars()); }

double global_grad_norm(const ParameterStore& params) {
  double sq = 0.0;
  for (const auto& p : params.vars()) {
    const ad::Node& node = *p.shared();
    if (!node.has_grad) continue;
    for (double g : node.grad.data()) sq += g * g;
  }
  return std::sqrt(sq);
}

double clip_grad_norm(ParameterStore& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& p : params.vars()) {
      ad::Node& node = *p.shared();
      if (!node.has_grad) continue;
      for (double& g : node.grad.mutable_data()) g *= s;
    }
  }
  return norm;
}

}  // namespace lazyrec
