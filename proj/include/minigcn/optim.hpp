#pragma once

#include <cstdint>
#include <vector>

#include "minigcn/nn.hpp"

namespace minigcn {

/// First and second moments for every trainable array of a layer stack.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step_count = 0;
  std::vector<LayerGrads> m;
  std::vector<LayerGrads> v;
};

AdamState make_adam_state(const std::vector<LayerParams>& params);

/// Bias-corrected Adam update of weights, bias, gamma and beta.
void adam_step(std::vector<LayerParams>& params, const std::vector<LayerGrads>& grads, AdamState& state, double lr);

/// base_lr * (1 - floor(epoch / interval) * interval / max_iter)^0.5.
struct LrPolicy {
  double base_lr = 0.001;
  std::int64_t max_iter = 200;
  std::int64_t interval = 50;
};

double schedule_lr(const LrPolicy& policy, std::int64_t epoch);

}  // namespace minigcn
