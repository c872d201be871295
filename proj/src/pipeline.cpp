#include "chargecast/pipeline.hpp"

#include "chargecast/errors.hpp"

namespace chargecast {

Dataset assemble_dataset(std::vector<ChargingSession> sessions, std::span<const WeatherRecord> weather,
                         const DataConfig& cfg) {
  cfg.window.validate();
  Dataset ds;
  ds.sessions = std::move(sessions);
  ds.load = aggregate_sessions(ds.sessions, cfg.window.resolution_min);
  ds.weather = resample_weather(weather, ds.load.start, ds.load.kw.size(), cfg.window.resolution_min);
  WindowBuildResult built = build_windows(ds.load, ds.weather, ds.sessions, cfg.window);
  ds.dropped = std::move(built.dropped);
  if (cfg.split_date.empty()) {
    const auto days = std::chrono::floor<std::chrono::days>(ds.load.end() - ds.load.start).count();
    ds.split = ds.load.start + std::chrono::days(days * 4 / 5);
  } else {
    ds.split = TimePoint(parse_date(cfg.split_date));
  }
  ds.windows = split_windows(built.windows, ds.split, cfg.window);
  return ds;
}

Dataset load_dataset(const DataConfig& cfg) {
  if (cfg.sessions_csv.empty() || cfg.weather_csv.empty()) {
    throw ConfigError("data.sessions_csv and data.weather_csv must be set");
  }
  auto sessions = read_sessions_csv(cfg.sessions_csv);
  const auto weather = read_weather_csv(cfg.weather_csv);
  return assemble_dataset(std::move(sessions), weather, cfg);
}

ForecastWindow scale_ev_count(const ForecastWindow& w, double scale) {
  ForecastWindow out = w;
  out.ev_count = w.ev_count * scale;
  return out;
}

}  // namespace chargecast
