#include "chargecast/schedule.hpp"

#include "chargecast/errors.hpp"

#include <cmath>
#include <string>

namespace chargecast {

NoiseSchedule NoiseSchedule::quadratic(int steps, double beta_start, double beta_end) {
  if (steps < 2) throw ConfigError("schedule: need at least 2 diffusion steps, got " + std::to_string(steps));
  if (!(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0)) {
    throw ConfigError("schedule: require 0 < beta_start < beta_end < 1");
  }
  NoiseSchedule s;
  s.config_ = {steps, beta_start, beta_end};
  s.beta_.resize(static_cast<std::size_t>(steps));
  const double lo = std::sqrt(beta_start);
  const double hi = std::sqrt(beta_end);
  for (int t = 1; t <= steps; ++t) {
    const double r = lo + (static_cast<double>(t - 1) / static_cast<double>(steps - 1)) * (hi - lo);
    s.beta_[static_cast<std::size_t>(t - 1)] = r * r;
  }
  s.beta_.front() = beta_start;
  s.beta_.back() = beta_end;
  s.fill_tables();
  return s;
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  if (betas.size() < 2) throw ConfigError("schedule: need at least 2 diffusion steps");
  for (std::size_t i = 0; i < betas.size(); ++i) {
    if (!(betas[i] >= 0.0 && betas[i] < 1.0)) throw ConfigError("schedule: beta outside [0, 1)");
    if (i > 0 && betas[i] < betas[i - 1]) throw ConfigError("schedule: betas must be nondecreasing");
  }
  NoiseSchedule s;
  s.config_ = {static_cast<int>(betas.size()), betas.front(), betas.back()};
  s.beta_ = std::move(betas);
  s.fill_tables();
  return s;
}

void NoiseSchedule::fill_tables() {
  const std::size_t n = beta_.size();
  alpha_bar_.assign(n + 1, 1.0);
  beta_tilde_.assign(n, 0.0);
  for (std::size_t t = 1; t <= n; ++t) {
    alpha_bar_[t] = alpha_bar_[t - 1] * (1.0 - beta_[t - 1]);
    const double denom = 1.0 - alpha_bar_[t];
    beta_tilde_[t - 1] = denom > 0.0 ? (1.0 - alpha_bar_[t - 1]) / denom * beta_[t - 1] : 0.0;
  }
}

void NoiseSchedule::check_step(int t) const {
  if (t < 1 || t > steps()) {
    throw DomainError("schedule: step " + std::to_string(t) + " outside 1.." + std::to_string(steps()));
  }
}

double NoiseSchedule::beta(int t) const {
  check_step(t);
  return beta_[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t == 0) return 1.0;
  check_step(t);
  return alpha_bar_[static_cast<std::size_t>(t)];
}

double NoiseSchedule::beta_tilde(int t) const {
  check_step(t);
  return beta_tilde_[static_cast<std::size_t>(t - 1)];
}

}  // namespace chargecast
