#pragma once

#include "chargecast/denoiser.hpp"
#include "chargecast/random.hpp"

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace chargecast {

using TimePoint = std::chrono::sys_time<std::chrono::minutes>;
using Day = std::chrono::sys_days;

/// Accepts "YYYY-MM-DDTHH:MM[:SS]" or a space separator; seconds are
/// truncated. Throws DataError.
TimePoint parse_timestamp(std::string_view text);
/// "YYYY-MM-DDTHH:MM:00".
std::string format_timestamp(TimePoint t);
Day parse_date(std::string_view text);
/// Monday = 0 ... Sunday = 6.
int weekday_index(Day day);

struct ChargingSession {
  TimePoint start;
  double duration_min = 0.0;
  double energy_kwh = 0.0;
};

/// Load in kW on a regular grid; bin i covers [start + i*res, start + (i+1)*res).
struct LoadSeries {
  TimePoint start;
  int resolution_min = 15;
  std::vector<double> kw;

  TimePoint time_at(std::size_t i) const { return start + std::chrono::minutes(resolution_min * static_cast<int>(i)); }
  TimePoint end() const { return time_at(kw.size()); }
};

/// Constant-power aggregation: each session draws energy/duration over
/// [start, start + duration) and each bin holds the time-weighted sum of
/// the active powers. The grid spans whole days covering every session.
/// Throws DataError (naming the row) for non-positive durations or
/// negative/non-finite energy.
LoadSeries aggregate_sessions(std::span<const ChargingSession> sessions, int resolution_min);
/// Same on an explicit grid [begin, end); parts outside the grid are cut.
LoadSeries aggregate_sessions(std::span<const ChargingSession> sessions, int resolution_min, TimePoint begin,
                              TimePoint end);

/// Sessions starting within the given day.
int count_evs(std::span<const ChargingSession> sessions, Day day);
/// Sessions starting within [begin, end).
int count_evs(std::span<const ChargingSession> sessions, TimePoint begin, TimePoint end);

struct WeatherRecord {
  TimePoint time;
  double temperature_c = 0.0;
  double humidity_pct = 0.0;
};

/// Weather on the load grid; NaN marks a missing bin.
struct WeatherSeries {
  TimePoint start;
  int resolution_min = 15;
  std::vector<double> temperature;
  std::vector<double> humidity;
};

/// Resamples time-ordered records onto a grid. A bin between two records at
/// most 60 min apart is linearly interpolated; a bin less than 60 min after
/// the last record holds its value; everything else is missing.
WeatherSeries resample_weather(std::span<const WeatherRecord> records, TimePoint start, std::size_t bins,
                               int resolution_min);

struct WindowConfig {
  int resolution_min = 15;
  int history_steps = 480;
  int horizon_steps = 96;

  void validate() const;
};

/// One sample in physical units: history and target in kW, raw covariates.
struct ForecastWindow {
  TimePoint anchor;
  std::vector<double> history;
  std::vector<double> temperature;
  std::vector<double> humidity;
  std::array<double, 7> weekday{};
  double ev_count = 0.0;
  std::vector<double> target;

  void validate(const WindowConfig& cfg) const;
};

struct WindowBuildResult {
  std::vector<ForecastWindow> windows;
  std::vector<std::string> dropped;  // one line per skipped anchor
};

/// One window per midnight anchor with a full history and horizon inside the
/// series. Windows touching a missing load or weather bin are dropped and
/// listed. The EV count is the number of sessions starting in the horizon.
WindowBuildResult build_windows(const LoadSeries& load, const WeatherSeries& weather,
                                std::span<const ChargingSession> sessions, const WindowConfig& cfg);

struct WindowSplit {
  std::vector<ForecastWindow> train;
  std::vector<ForecastWindow> test;
};

/// Train windows end at or before `split`; test windows start their history
/// at or after it. Windows straddling the boundary are discarded.
WindowSplit split_windows(std::span<const ForecastWindow> windows, TimePoint split, const WindowConfig& cfg);

struct ChannelStats {
  double mean = 0.0;
  double std = 1.0;

  double normalize(double x) const { return (x - mean) / std; }
  double denormalize(double z) const { return z * std + mean; }
};

struct NormalizationStats {
  ChannelStats load;
  ChannelStats temperature;
  ChannelStats humidity;
  ChannelStats ev_count;

  /// Population statistics over training windows (load from targets).
  /// Throws ConfigError if a channel is constant.
  static NormalizationStats fit(std::span<const ForecastWindow> train);
  void validate() const;
};

ConditionSet normalize_condition(const ForecastWindow& w, const NormalizationStats& stats);
std::vector<double> normalize_load(std::span<const double> kw, const NormalizationStats& stats);
std::vector<double> denormalize_load(std::span<const double> z, const NormalizationStats& stats);

std::vector<ChargingSession> read_sessions_csv(const std::filesystem::path& path);
void write_sessions_csv(const std::filesystem::path& path, std::span<const ChargingSession> sessions);
std::vector<WeatherRecord> read_weather_csv(const std::filesystem::path& path);
void write_weather_csv(const std::filesystem::path& path, std::span<const WeatherRecord> records);

/// Parameters of the synthetic charging corpus.
///
/// Days are independent. For a day with weekday w and daily mean temperature
/// T_d the EV count is round(ev_base * f_w * U(1 - ev_spread, 1 + ev_spread))
/// (at least 1), f_w = 1 on weekdays and weekend_factor on weekends. Each
/// session starts from a mixture: a morning component N(8h, 1.25h) on
/// weekdays or a midday component N(12.5h, 2.5h) on weekends, plus an
/// evening component N(17.5h, 1.5h) with weight
/// clamp(evening_weight + evening_temp_gain * (T_d - temp_base), 0.05, 0.95).
/// Durations are U(duration_lo, duration_hi) minutes cut at midnight and
/// energies U(energy_lo, energy_hi) kWh. Hourly temperature is
/// T_d + temp_diurnal * sin(2 pi (h - 9) / 24) + N(0, 0.5) with
/// T_d = temp_base + temp_season * sin(2 pi (doy - 105) / 365) + N(0, temp_day_sd);
/// humidity is humidity_base + humidity_slope * (u - temp_base) + N(0, 3),
/// clamped to [5, 100].
struct SyntheticConfig {
  std::uint64_t seed = 7;
  std::string start_date = "2016-01-04";
  int days = 730;
  double ev_base = 25.0;
  double ev_spread = 0.5;
  double weekend_factor = 0.6;
  double energy_lo = 4.0;
  double energy_hi = 16.0;
  double duration_lo = 60.0;
  double duration_hi = 240.0;
  double evening_weight = 0.4;
  double evening_temp_gain = 0.03;
  double temp_base = 15.0;
  double temp_season = 8.0;
  double temp_day_sd = 3.0;
  double temp_diurnal = 5.0;
  double humidity_base = 65.0;
  double humidity_slope = -1.5;

  void validate() const;
};

/// Latent state of one synthetic day: everything the conditional load
/// distribution depends on.
struct SyntheticDay {
  Day date;
  int weekday = 0;
  int ev_count = 0;
  double mean_temperature = 0.0;
};

struct SyntheticCorpus {
  std::vector<ChargingSession> sessions;
  std::vector<WeatherRecord> weather;  // hourly
  std::vector<SyntheticDay> days;
};

class SyntheticGenerator {
 public:
  explicit SyntheticGenerator(SyntheticConfig cfg);

  const SyntheticConfig& config() const { return cfg_; }
  SyntheticCorpus generate() const;

  /// Draws the sessions of one day given its latent state.
  std::vector<ChargingSession> sample_day_sessions(const SyntheticDay& day, Rng& rng) const;
  /// Draws `members` independent load profiles of a day from its exact
  /// conditional law (same latent state, fresh sessions).
  nn::Matrix sample_conditional_profiles(const SyntheticDay& day, int members, int resolution_min, Rng& rng) const;

  /// Closed-form expectations.
  double expected_ev_count(int weekday) const;
  double expected_session_energy() const;
  double expected_daily_energy(int weekday) const { return expected_ev_count(weekday) * expected_session_energy(); }
  double evening_weight(double mean_temperature) const;

 private:
  SyntheticConfig cfg_;
};

inline SyntheticCorpus generate_synthetic(const SyntheticConfig& cfg) { return SyntheticGenerator(cfg).generate(); }

}  // namespace chargecast
