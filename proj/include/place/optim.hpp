#pragma once

#include <cstdint>
#include <vector>

#include "place/nn.hpp"

namespace place {

struct AdamWConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// First/second moments, one buffer per parameter in ParamStore order.
struct AdamWState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;

  static AdamWState zeros_like(const ParamStore& params);
};

// One AdamW update using the gradients currently held by `params`
// (missing gradients count as zero). Weight decay is decoupled:
// w <- w * (1 - lr * wd), then w <- w - lr * m_hat / (sqrt(v_hat) + eps).
void adamw_step(ParamStore& params, AdamWState& state, const AdamWConfig& cfg);

// Rescales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(ParamStore& params, double max_norm);

}  // namespace place
