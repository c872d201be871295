#include "chargecast/evaluation.hpp"

#include "chargecast/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace chargecast {

namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DomainError(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
  if (a == 0) throw DomainError(std::string(what) + ": empty input");
}

double sorted_crps(std::span<const double> sorted, double y) {
  const auto n = static_cast<double>(sorted.size());
  double abs_err = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    abs_err += std::abs(sorted[i] - y);
    pairs += (2.0 * static_cast<double>(i + 1) - n - 1.0) * sorted[i];
  }
  return abs_err / n - pairs / (n * n);
}

}  // namespace

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw DomainError("quantile: empty input");
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("quantile: level outside [0, 1]");
  const double h = static_cast<double>(sorted.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = h - static_cast<double>(lo);
  return std::min(sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]), sorted[lo + 1]);
}

double quantile(std::span<const double> values, double q) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return quantile_sorted(sorted, q);
}

ForecastEnsemble ForecastEnsemble::from_trajectories(nn::Matrix trajectories) {
  if (trajectories.rows() < 1 || trajectories.cols() < 1) throw DomainError("ensemble: no trajectories");
  ForecastEnsemble ens;
  ens.trajectories = std::move(trajectories);
  const Eigen::Index steps = ens.trajectories.cols();
  ens.quantiles.resize(static_cast<Eigen::Index>(kQuantileLevels.size()), steps);
  ens.median.resize(static_cast<std::size_t>(steps));
  std::vector<double> column(static_cast<std::size_t>(ens.trajectories.rows()));
  for (Eigen::Index j = 0; j < steps; ++j) {
    for (Eigen::Index n = 0; n < ens.trajectories.rows(); ++n) column[static_cast<std::size_t>(n)] = ens.trajectories(n, j);
    std::sort(column.begin(), column.end());
    for (std::size_t k = 0; k < kQuantileLevels.size(); ++k) {
      ens.quantiles(static_cast<Eigen::Index>(k), j) = quantile_sorted(column, kQuantileLevels[k]);
    }
    ens.median[static_cast<std::size_t>(j)] = ens.quantiles(2, j);
  }
  return ens;
}

double mae(std::span<const double> prediction, std::span<const double> truth) {
  check_lengths(prediction.size(), truth.size(), "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) s += std::abs(prediction[i] - truth[i]);
  return s / static_cast<double>(truth.size());
}

double crps(std::span<const double> members, double y) {
  if (members.empty()) throw DomainError("crps: empty ensemble");
  std::vector<double> sorted(members.begin(), members.end());
  std::sort(sorted.begin(), sorted.end());
  return sorted_crps(sorted, y);
}

double crps_profile(const nn::Matrix& trajectories, std::span<const double> truth) {
  check_lengths(static_cast<std::size_t>(trajectories.cols()), truth.size(), "crps_profile");
  if (trajectories.rows() == 0) throw DomainError("crps: empty ensemble");
  std::vector<double> column(static_cast<std::size_t>(trajectories.rows()));
  double total = 0.0;
  for (Eigen::Index j = 0; j < trajectories.cols(); ++j) {
    for (Eigen::Index n = 0; n < trajectories.rows(); ++n) column[static_cast<std::size_t>(n)] = trajectories(n, j);
    std::sort(column.begin(), column.end());
    total += sorted_crps(column, truth[static_cast<std::size_t>(j)]);
  }
  return total / static_cast<double>(truth.size());
}

IntervalScore coverage_and_width(const nn::Matrix& quantiles, std::span<const double> truth, double level) {
  check_lengths(static_cast<std::size_t>(quantiles.cols()), truth.size(), "coverage");
  if (quantiles.rows() != static_cast<Eigen::Index>(kQuantileLevels.size())) {
    throw DomainError("coverage: expected one quantile track per level");
  }
  Eigen::Index lo_row = 0, hi_row = 4;
  if (level == 0.5) {
    lo_row = 1;
    hi_row = 3;
  } else if (level != 0.9) {
    throw DomainError("coverage: level must be 0.5 or 0.9");
  }
  IntervalScore s;
  for (Eigen::Index j = 0; j < quantiles.cols(); ++j) {
    const double lo = quantiles(lo_row, j);
    const double hi = quantiles(hi_row, j);
    const double y = truth[static_cast<std::size_t>(j)];
    if (y >= lo && y <= hi) s.coverage += 1.0;
    s.mean_width += hi - lo;
  }
  s.coverage /= static_cast<double>(truth.size());
  s.mean_width /= static_cast<double>(truth.size());
  return s;
}

double pinball_loss(double prediction, double truth, double q) {
  return truth >= prediction ? q * (truth - prediction) : (1.0 - q) * (prediction - truth);
}

double quantile_crps(const nn::Matrix& quantiles, std::span<const double> truth) {
  check_lengths(static_cast<std::size_t>(quantiles.cols()), truth.size(), "quantile_crps");
  if (quantiles.rows() != static_cast<Eigen::Index>(kQuantileLevels.size())) {
    throw DomainError("quantile_crps: expected one quantile track per level");
  }
  const auto k = static_cast<double>(kQuantileLevels.size());
  double total = 0.0;
  for (Eigen::Index j = 0; j < quantiles.cols(); ++j) {
    double step = 0.0;
    for (std::size_t r = 0; r < kQuantileLevels.size(); ++r) {
      step += pinball_loss(quantiles(static_cast<Eigen::Index>(r), j), truth[static_cast<std::size_t>(j)],
                           kQuantileLevels[r]);
    }
    total += 2.0 / k * step;
  }
  return total / static_cast<double>(truth.size());
}

double crossing_rate(const nn::Matrix& quantiles) {
  if (quantiles.rows() < 2 || quantiles.cols() < 1) return 0.0;
  double crossed = 0.0;
  for (Eigen::Index j = 0; j < quantiles.cols(); ++j) {
    for (Eigen::Index r = 0; r + 1 < quantiles.rows(); ++r) {
      if (quantiles(r, j) > quantiles(r + 1, j)) crossed += 1.0;
    }
  }
  return crossed / static_cast<double>((quantiles.rows() - 1) * quantiles.cols());
}

std::vector<double> cumulative_energy(std::span<const double> kw, int resolution_min) {
  std::vector<double> out(kw.size());
  const double hours = resolution_min / 60.0;
  double total = 0.0;
  for (std::size_t i = 0; i < kw.size(); ++i) {
    total += kw[i] * hours;
    out[i] = total;
  }
  return out;
}

}  // namespace chargecast
