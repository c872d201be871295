#pragma once

#include "chargecast/nn/graph.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace chargecast::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::int64_t step_count = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;

  explicit AdamState(AdamConfig cfg = {}) : config(cfg) {}
};

/// One bias-corrected Adam update over `params` (moments matched by
/// position), then clears their gradients. Throws TrainingError naming the
/// first parameter with a non-finite gradient; nothing is updated then.
void adam_step(std::span<ParamTensor* const> params, AdamState& state);

/// Clears gradients without updating.
void zero_grads(std::span<ParamTensor* const> params);

}  // namespace chargecast::nn
