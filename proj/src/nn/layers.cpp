#include "chargecast/nn/layers.hpp"

#include "chargecast/errors.hpp"

#include <cmath>

namespace chargecast::nn {

void init_uniform(ParamTensor& p, Eigen::Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = dist(rng);
  p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
}

Linear::Linear(const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng)
    : weight(name + ".weight", out, in), bias(name + ".bias", 1, out) {
  init_uniform(weight, in, rng);
  init_uniform(bias, in, rng);
}

Lstm::Lstm(const std::string& name, Eigen::Index in, Eigen::Index hidden, Rng& rng)
    : w_ih(name + ".w_ih", 4 * hidden, in), w_hh(name + ".w_hh", 4 * hidden, hidden), bias(name + ".bias", 1, 4 * hidden) {
  // PyTorch convention: every LSTM tensor uses 1/sqrt(hidden).
  init_uniform(w_ih, hidden, rng);
  init_uniform(w_hh, hidden, rng);
  init_uniform(bias, hidden, rng);
}

AttentionBlock::AttentionBlock(const std::string& name, Eigen::Index dim, int head_count, Rng& rng)
    : w_q(name + ".w_q", dim, dim), w_k(name + ".w_k", dim, dim), w_v(name + ".w_v", dim, dim), heads(head_count) {
  if (head_count <= 0 || dim % head_count != 0) {
    throw ConfigError(name + ": hidden dim " + std::to_string(dim) + " not divisible by " +
                      std::to_string(head_count) + " heads");
  }
  init_uniform(w_q, dim, rng);
  init_uniform(w_k, dim, rng);
  init_uniform(w_v, dim, rng);
  out = Linear(name + ".out", dim, dim, rng);
}

}  // namespace chargecast::nn
