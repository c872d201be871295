#pragma once

#include "chargecast/config.hpp"
#include "chargecast/data.hpp"

#include <span>
#include <string>
#include <vector>

namespace chargecast {

/// Sessions and weather on one grid, windowed and split in time.
struct Dataset {
  std::vector<ChargingSession> sessions;
  LoadSeries load;
  WeatherSeries weather;
  std::vector<std::string> dropped;
  TimePoint split;
  WindowSplit windows;
};

/// Aggregates the sessions onto full days, resamples the weather onto the
/// same grid, builds windows and splits them at the configured date (or at
/// 80% of the covered days when none is given).
Dataset assemble_dataset(std::vector<ChargingSession> sessions, std::span<const WeatherRecord> weather,
                         const DataConfig& cfg);
/// Reads both CSVs named in the config. Throws DataError.
Dataset load_dataset(const DataConfig& cfg);

/// Copy of the window with the EV count multiplied by `scale`.
ForecastWindow scale_ev_count(const ForecastWindow& w, double scale);

}  // namespace chargecast
