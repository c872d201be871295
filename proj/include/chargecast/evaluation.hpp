#pragma once

#include "chargecast/nn/graph.hpp"

#include <array>
#include <span>
#include <vector>

namespace chargecast {

inline constexpr std::array<double, 5> kQuantileLevels{0.05, 0.25, 0.5, 0.75, 0.95};

/// Linear interpolation between order statistics at rank (N-1)q.
/// Throws DomainError on empty input or q outside [0, 1].
double quantile(std::span<const double> values, double q);
/// Same on already sorted values.
double quantile_sorted(std::span<const double> sorted, double q);

/// N sampled trajectories with per-step quantile tracks.
struct ForecastEnsemble {
  nn::Matrix trajectories;  // N x tau
  nn::Matrix quantiles;     // one row per level of kQuantileLevels
  std::vector<double> median;

  static ForecastEnsemble from_trajectories(nn::Matrix trajectories);

  int size() const { return static_cast<int>(trajectories.rows()); }
  int horizon() const { return static_cast<int>(trajectories.cols()); }
};

double mae(std::span<const double> prediction, std::span<const double> truth);

/// Empirical CRPS of one step: mean|X_i - y| - 1/(2N^2) sum_ij |X_i - X_j|,
/// with the pair sum taken from the sorted members in O(N log N).
double crps(std::span<const double> members, double y);
/// Mean of the per-step CRPS over the horizon.
double crps_profile(const nn::Matrix& trajectories, std::span<const double> truth);

struct IntervalScore {
  double coverage = 0.0;
  double mean_width = 0.0;
};

/// Central interval from the quantile tracks: level 0.9 uses (5%, 95%),
/// level 0.5 uses (25%, 75%). Bounds are inclusive.
IntervalScore coverage_and_width(const nn::Matrix& quantiles, std::span<const double> truth, double level);
inline IntervalScore coverage_and_width(const ForecastEnsemble& ens, std::span<const double> truth, double level) {
  return coverage_and_width(ens.quantiles, truth, level);
}

double pinball_loss(double prediction, double truth, double q);

/// CRPS of a set of quantile tracks, approximated per step by
/// (2/K) sum_k pinball(q_k) and averaged over the horizon.
double quantile_crps(const nn::Matrix& quantiles, std::span<const double> truth);

/// Fraction of (step, adjacent level pair) with a decreasing quantile.
double crossing_rate(const nn::Matrix& quantiles);

/// Per-step running energy in kWh of a kW profile.
std::vector<double> cumulative_energy(std::span<const double> kw, int resolution_min);

}  // namespace chargecast
