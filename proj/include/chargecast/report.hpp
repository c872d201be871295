#pragma once

#include "chargecast/evaluation.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace chargecast {

struct SampleMetrics {
  std::string anchor;
  double mae = 0.0;
  double crps = 0.0;
  double coverage_90 = 0.0;
  double coverage_50 = 0.0;
  double width_90 = 0.0;
  double width_50 = 0.0;
  double crossing_rate = 0.0;
  double energy_kwh = 0.0;  // forecast energy over the horizon
};

/// MAE of the median, sample CRPS, interval scores; energy is the ensemble
/// mean.
SampleMetrics score_ensemble(const std::string& anchor, const ForecastEnsemble& ens, std::span<const double> truth,
                             int resolution_min);
/// Median-track MAE and the discrete-quantile CRPS; energy of the median.
SampleMetrics score_quantiles(const std::string& anchor, const nn::Matrix& quantiles, std::span<const double> truth,
                              int resolution_min);
/// A point forecast scored as a one-member ensemble.
SampleMetrics score_point(const std::string& anchor, std::span<const double> forecast, std::span<const double> truth,
                          int resolution_min);

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // population
};

struct EvalReport {
  std::string name;
  std::vector<SampleMetrics> samples;
  Aggregate mae, crps, coverage_90, coverage_50, width_90, width_50, crossing_rate, energy_kwh;
};

EvalReport make_report(std::string name, std::vector<SampleMetrics> samples);

/// Running-sum view in kWh; quantiles are recomputed from the summed
/// trajectories.
ForecastEnsemble cumulative_view(const ForecastEnsemble& ens, int resolution_min);
nn::Matrix cumulative_rows(const nn::Matrix& rows, int resolution_min);

/// Per-sample rows, then "mean" and "std" footer rows. The first line is a
/// comment holding the effective config.
void write_report_csv(const std::filesystem::path& path, const EvalReport& report, const nlohmann::json& config);
std::string format_summary(std::span<const EvalReport> reports);

/// Band plot: 90% and 50% intervals, median and truth.
void write_band_svg(const std::filesystem::path& path, const nn::Matrix& quantiles, std::span<const double> truth,
                    const std::string& title);

/// N x tau ensemble as CSV, one trajectory per row.
void write_ensemble_csv(const std::filesystem::path& path, const nn::Matrix& trajectories);

}  // namespace chargecast
