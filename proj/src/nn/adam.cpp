#include "chargecast/nn/adam.hpp"

#include "chargecast/errors.hpp"

#include <cmath>

namespace chargecast::nn {

void zero_grads(std::span<ParamTensor* const> params) {
  for (ParamTensor* p : params) p->grad.setZero(p->value.rows(), p->value.cols());
}

void adam_step(std::span<ParamTensor* const> params, AdamState& state) {
  for (const ParamTensor* p : params) {
    if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols()) {
      throw ConfigError("adam: gradient of " + p->name + " has the wrong shape");
    }
    if (!p->grad.allFinite()) throw TrainingError("adam: non-finite gradient in parameter " + p->name);
  }
  if (state.first_moment.empty()) {
    for (const ParamTensor* p : params) {
      state.first_moment.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      state.second_moment.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ConfigError("adam: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                      " parameters, got " + std::to_string(params.size()));
  }

  const AdamConfig& c = state.config;
  ++state.step_count;
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step_count));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    ParamTensor& p = *params[i];
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    if (m.rows() != p.value.rows() || m.cols() != p.value.cols()) {
      throw ConfigError("adam: moment shape mismatch for " + p.name);
    }
    m = c.beta1 * m + (1.0 - c.beta1) * p.grad;
    v = c.beta2 * v + (1.0 - c.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= c.learning_rate * (m.array() / correction1) / ((v.array() / correction2).sqrt() + c.epsilon);
    p.grad.setZero();
  }
}

}  // namespace chargecast::nn
