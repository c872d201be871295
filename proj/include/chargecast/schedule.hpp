#pragma once

#include <vector>

namespace chargecast {

struct ScheduleConfig {
  int steps = 200;
  double beta_start = 1e-4;
  double beta_end = 0.5;
};

/// Variance schedule of the forward process.
///
/// Steps are indexed 1..T; index 0 denotes clean data, so alpha_bar(0) == 1.
/// alpha_bar(t) is the cumulative product of (1 - beta_s) for s <= t and
/// beta_tilde(t) = (1 - alpha_bar(t-1)) / (1 - alpha_bar(t)) * beta(t) is the
/// fixed reverse-process variance.
class NoiseSchedule {
 public:
  /// Quadratic in sqrt(beta): sqrt(beta_t) is linear in t between the
  /// endpoints, which are stored exactly.
  static NoiseSchedule quadratic(int steps, double beta_start, double beta_end);
  static NoiseSchedule quadratic(const ScheduleConfig& cfg) {
    return quadratic(cfg.steps, cfg.beta_start, cfg.beta_end);
  }
  /// Arbitrary nondecreasing betas in (0, 1); used for tests and ablations.
  static NoiseSchedule from_betas(std::vector<double> betas);

  int steps() const { return static_cast<int>(beta_.size()); }
  double beta(int t) const;
  double alpha_bar(int t) const;
  double beta_tilde(int t) const;

  const ScheduleConfig& config() const { return config_; }

 private:
  NoiseSchedule() = default;
  void fill_tables();
  void check_step(int t) const;

  ScheduleConfig config_;
  std::vector<double> beta_;        // beta_[t-1]
  std::vector<double> alpha_bar_;   // alpha_bar_[t], alpha_bar_[0] = 1
  std::vector<double> beta_tilde_;  // beta_tilde_[t-1]
};

/// Posterior variance beta_tilde_t; t outside 1..T is a DomainError.
inline double posterior_variance(const NoiseSchedule& sched, int t) { return sched.beta_tilde(t); }

}  // namespace chargecast
