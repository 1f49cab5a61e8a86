#pragma once

#include <cstdint>
#include <vector>

#include "lazyrec/lazy_model.hpp"

namespace lazyrec {

struct AdamWConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.01;  // applied only to parameters flagged for decay
};

class AdamW {
 public:
  AdamW(ParameterStore& params, AdamWConfig cfg);

  // One update from the gradients currently stored on the parameters.
  // Parameters without a gradient are skipped.
  void step();
  void zero_grad();

  std::uint64_t steps() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

 private:
  ParameterStore& params_;
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
};

// L2 norm over all parameter gradients.
double global_grad_norm(const ParameterStore& params);

// Rescales gradients so their global norm is at most max_norm. Returns the
// norm before clipping.
double clip_grad_norm(ParameterStore& params, double max_norm);

}  // namespace lazyrec
