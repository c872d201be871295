#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "chargecast/data.hpp"
#include "chargecast/errors.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

using namespace chargecast;
using std::chrono::minutes;

namespace {

TimePoint at(const char* text) { return parse_timestamp(text); }

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "chargecast_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

// Hourly weather covering [start, start + days).
std::vector<WeatherRecord> hourly_weather(TimePoint start, int days) {
  std::vector<WeatherRecord> out;
  for (int h = 0; h < 24 * days; ++h) {
    out.push_back({start + minutes(60 * h), 10.0 + 0.1 * h + std::sin(h), 50.0 + std::cos(h)});
  }
  return out;
}

std::vector<ChargingSession> daily_sessions(TimePoint start, int days) {
  std::vector<ChargingSession> out;
  for (int d = 0; d < days; ++d) {
    for (int k = 0; k < 3 + d % 3; ++k) {
      out.push_back({start + minutes(1440 * d + 300 + 170 * k + 7 * d), 45.0 + 20.0 * k, 3.0 + d + k});
    }
  }
  return out;
}

}  // namespace

TEST_CASE("timestamps parse with either separator and truncate seconds") {
  const TimePoint a = at("2016-01-04T08:30:45");
  CHECK(a == at("2016-01-04 08:30"));
  CHECK(format_timestamp(a) == "2016-01-04T08:30:00");
  CHECK(weekday_index(parse_date("2016-01-04")) == 0);
  CHECK(weekday_index(parse_date("2016-01-10")) == 6);
  CHECK(weekday_index(parse_date("2024-02-29")) == 3);
  CHECK_THROWS_AS(at("2016-13-04T08:30"), DataError);
  CHECK_THROWS_AS(at("yesterday"), DataError);
  CHECK_THROWS_AS(parse_date("2016-02-30"), DataError);
}

TEST_CASE("aggregation: one kWh over an hour is four one-kW bins") {
  const std::vector<ChargingSession> s{{at("2016-01-04T10:00"), 60.0, 1.0}};
  const LoadSeries load = aggregate_sessions(s, 15);
  CHECK(load.start == at("2016-01-04T00:00"));
  CHECK(load.kw.size() == 96);
  for (std::size_t i = 0; i < load.kw.size(); ++i) {
    CHECK(load.kw[i] == doctest::Approx(i >= 40 && i < 44 ? 1.0 : 0.0));
  }
}

TEST_CASE("aggregation: a session inside one bin is its time-weighted power") {
  const std::vector<ChargingSession> s{{at("2016-01-04T10:02"), 10.0, 1.0}};
  const LoadSeries load = aggregate_sessions(s, 15);
  CHECK(load.kw[40] == doctest::Approx(6.0 * 10.0 / 15.0));
  CHECK(std::accumulate(load.kw.begin(), load.kw.end(), 0.0) == doctest::Approx(4.0));
}

TEST_CASE("aggregation matches a minute-level brute force and conserves energy") {
  Rng rng(3);
  std::uniform_int_distribution<int> start_min(0, 3 * 1440 - 1);
  std::uniform_real_distribution<double> dur(1.0, 400.0), energy(0.0, 30.0);
  const TimePoint origin = at("2016-03-01T00:00");
  std::vector<ChargingSession> s;
  for (int i = 0; i < 60; ++i) {
    s.push_back({origin + minutes(start_min(rng)), std::round(dur(rng)), energy(rng)});
  }
  for (int res : {15, 30, 60}) {
    CAPTURE(res);
    const LoadSeries load = aggregate_sessions(s, res);
    CHECK(load.start == origin);
    std::vector<double> minute(static_cast<std::size_t>(load.kw.size() * res), 0.0);
    for (const auto& x : s) {
      const auto first = (x.start - origin).count();
      for (long m = first; m < first + static_cast<long>(x.duration_min); ++m) {
        minute[static_cast<std::size_t>(m)] += x.energy_kwh / (x.duration_min / 60.0);
      }
    }
    for (std::size_t b = 0; b < load.kw.size(); ++b) {
      double mean = 0.0;
      for (int m = 0; m < res; ++m) mean += minute[b * res + m] / res;
      CHECK(load.kw[b] == doctest::Approx(mean).epsilon(1e-10));
    }
    const double kwh = std::accumulate(load.kw.begin(), load.kw.end(), 0.0) * res / 60.0;
    const double total = std::accumulate(s.begin(), s.end(), 0.0, [](double a, const auto& x) { return a + x.energy_kwh; });
    CHECK(kwh == doctest::Approx(total).epsilon(1e-12));
  }
}

TEST_CASE("aggregation rejects malformed sessions and grids") {
  std::vector<ChargingSession> s{{at("2016-01-04T10:00"), 60.0, 1.0}, {at("2016-01-04T11:00"), 0.0, 1.0}};
  try {
    aggregate_sessions(s, 15);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("session 2") != std::string::npos);
  }
  s[1].duration_min = 10.0;
  s[1].energy_kwh = -1.0;
  CHECK_THROWS_AS(aggregate_sessions(s, 15), DataError);
  s.pop_back();
  CHECK_THROWS_AS(aggregate_sessions(s, 7), ConfigError);
  CHECK_THROWS_AS(aggregate_sessions(s, 15, at("2016-01-04T00:00"), at("2016-01-04T00:20")), ConfigError);
  const LoadSeries cut = aggregate_sessions(s, 15, at("2016-01-04T10:30"), at("2016-01-04T12:00"));
  CHECK(cut.kw.size() == 6);
  CHECK(cut.kw[0] == doctest::Approx(1.0));
  CHECK(cut.kw[2] == 0.0);
}

TEST_CASE("EV counts use half-open start windows") {
  const std::vector<ChargingSession> s{{at("2016-01-04T00:00"), 30.0, 1.0},
                                       {at("2016-01-04T23:59"), 30.0, 1.0},
                                       {at("2016-01-05T00:00"), 30.0, 1.0},
                                       {at("2016-01-03T23:30"), 90.0, 1.0}};
  CHECK(count_evs(s, parse_date("2016-01-04")) == 2);
  CHECK(count_evs(s, parse_date("2016-01-05")) == 1);
  CHECK(count_evs(s, parse_date("2016-01-03")) == 1);
  CHECK(count_evs(s, at("2016-01-04T00:00"), at("2016-01-04T00:00")) == 0);

  Rng rng(2);
  std::uniform_int_distribution<int> m(0, 5000);
  std::vector<ChargingSession> many;
  const TimePoint origin = at("2016-01-01T00:00");
  for (int i = 0; i < 300; ++i) many.push_back({origin + minutes(m(rng)), 10.0, 1.0});
  for (int k = 0; k < 20; ++k) {
    const TimePoint a = origin + minutes(m(rng)), b = a + minutes(m(rng) / 3);
    int brute = 0;
    for (const auto& x : many) brute += (x.start >= a && x.start < b) ? 1 : 0;
    CHECK(count_evs(many, a, b) == brute);
  }
}

TEST_CASE("weather resampling interpolates, holds and marks gaps") {
  const std::vector<WeatherRecord> r{{at("2016-01-04T00:00"), 10.0, 50.0},
                                     {at("2016-01-04T01:00"), 20.0, 70.0},
                                     {at("2016-01-04T03:00"), 0.0, 0.0}};
  const WeatherSeries w = resample_weather(r, at("2016-01-03T23:45"), 18, 15);
  CHECK(std::isnan(w.temperature[0]));
  CHECK(w.temperature[1] == 10.0);
  CHECK(w.temperature[3] == doctest::Approx(15.0));
  CHECK(w.humidity[4] == doctest::Approx(65.0));
  CHECK(w.temperature[5] == 20.0);
  for (int i = 6; i < 13; ++i) CHECK(std::isnan(w.temperature[static_cast<std::size_t>(i)]));
  CHECK(w.temperature[13] == 0.0);
  CHECK(w.temperature[16] == 0.0);
  CHECK(std::isnan(w.temperature[17]));

  std::vector<WeatherRecord> unordered = r;
  std::swap(unordered[0], unordered[1]);
  CHECK_THROWS_AS(resample_weather(unordered, at("2016-01-04T00:00"), 4, 15), DataError);
}

TEST_CASE("windows: one per midnight with full history and horizon") {
  const TimePoint start = at("2016-01-04T00:00");
  const auto sessions = daily_sessions(start, 7);
  const LoadSeries load = aggregate_sessions(sessions, 15, start, start + minutes(7 * 1440));
  const WeatherSeries weather = resample_weather(hourly_weather(start, 7), start, load.kw.size(), 15);
  const WindowConfig cfg;  // 15 min, 5 days of history, 1 day horizon
  const WindowBuildResult r = build_windows(load, weather, sessions, cfg);
  REQUIRE(r.windows.size() == 2);
  CHECK(r.dropped.empty());
  const ForecastWindow& w = r.windows[0];
  CHECK(w.anchor == at("2016-01-09T00:00"));
  CHECK(w.weekday[5] == 1.0);
  CHECK(std::accumulate(w.weekday.begin(), w.weekday.end(), 0.0) == 1.0);
  CHECK(r.windows[1].weekday[6] == 1.0);
  CHECK(w.history.size() == 480);
  CHECK(w.target.size() == 96);
  CHECK(w.history.front() == load.kw[0]);
  CHECK(w.target.front() == load.kw[480]);
  CHECK(w.history.back() == load.kw[479]);
  CHECK(w.temperature[4] == weather.temperature[484]);
  CHECK(w.ev_count == count_evs(sessions, parse_date("2016-01-09")));

  const LoadSeries monday = aggregate_sessions(sessions, 60, start, start + minutes(7 * 1440));
  const WeatherSeries mw = resample_weather(hourly_weather(start, 7), start, monday.kw.size(), 60);
  const WindowBuildResult m = build_windows(monday, mw, sessions, WindowConfig{60, 24, 24});
  REQUIRE(m.windows.size() == 6);
  CHECK(m.windows[0].weekday[1] == 1.0);
}

TEST_CASE("windows touching a weather gap are dropped and listed") {
  const TimePoint start = at("2016-01-04T00:00");
  const auto sessions = daily_sessions(start, 7);
  const LoadSeries load = aggregate_sessions(sessions, 15, start, start + minutes(7 * 1440));
  std::vector<WeatherRecord> records = hourly_weather(start, 7);
  records.erase(records.begin() + 24 * 6 + 10, records.begin() + 24 * 6 + 13);
  const WeatherSeries weather = resample_weather(records, start, load.kw.size(), 15);
  const WindowBuildResult r = build_windows(load, weather, sessions, WindowConfig{});
  REQUIRE(r.windows.size() == 1);
  CHECK(r.windows[0].anchor == at("2016-01-09T00:00"));
  REQUIRE(r.dropped.size() == 1);
  CHECK(r.dropped[0].find("2016-01-10") != std::string::npos);
}

TEST_CASE("misaligned load and weather grids are data errors") {
  const TimePoint start = at("2016-01-04T00:00");
  const auto sessions = daily_sessions(start, 7);
  const LoadSeries load = aggregate_sessions(sessions, 15, start, start + minutes(7 * 1440));
  const WeatherSeries shifted = resample_weather(hourly_weather(start, 7), start + minutes(15), load.kw.size(), 15);
  CHECK_THROWS_AS(build_windows(load, shifted, sessions, WindowConfig{}), DataError);
  const WeatherSeries coarse = resample_weather(hourly_weather(start, 7), start, load.kw.size() / 4, 60);
  CHECK_THROWS_AS(build_windows(load, coarse, sessions, WindowConfig{}), DataError);
}

TEST_CASE("temporal split keeps train and test disjoint in time") {
  const TimePoint start = at("2016-01-04T00:00");
  const auto sessions = daily_sessions(start, 20);
  const LoadSeries load = aggregate_sessions(sessions, 60, start, start + minutes(20 * 1440));
  const WeatherSeries weather = resample_weather(hourly_weather(start, 20), start, load.kw.size(), 60);
  const WindowConfig cfg{60, 48, 24};
  const auto windows = build_windows(load, weather, sessions, cfg).windows;
  const TimePoint split = at("2016-01-14T00:00");
  const WindowSplit sp = split_windows(windows, split, cfg);
  for (const auto& w : sp.train) CHECK(w.anchor + minutes(24 * 60) <= split);
  for (const auto& w : sp.test) CHECK(w.anchor - minutes(48 * 60) >= split);
  CHECK(sp.train.size() == 8);
  CHECK(sp.test.size() == 8);
  CHECK(sp.train.size() + sp.test.size() + 2 == windows.size());
}

TEST_CASE("normalization statistics") {
  const TimePoint start = at("2016-01-04T00:00");
  const auto sessions = daily_sessions(start, 12);
  const LoadSeries load = aggregate_sessions(sessions, 60, start, start + minutes(12 * 1440));
  const WeatherSeries weather = resample_weather(hourly_weather(start, 12), start, load.kw.size(), 60);
  const auto windows = build_windows(load, weather, sessions, WindowConfig{60, 24, 24}).windows;
  const NormalizationStats stats = NormalizationStats::fit(windows);

  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& w : windows) {
    for (double z : normalize_load(w.target, stats)) {
      sum += z;
      ++n;
    }
    const std::vector<double> back = denormalize_load(normalize_load(w.target, stats), stats);
    for (std::size_t j = 0; j < back.size(); ++j) CHECK(std::abs(back[j] - w.target[j]) < 1e-12);
  }
  CHECK(std::abs(sum / static_cast<double>(n)) < 1e-12);

  const ConditionSet c = normalize_condition(windows[0], stats);
  CHECK(c.history[0] == doctest::Approx(stats.load.normalize(windows[0].history[0])));
  CHECK(c.temperature[2] == doctest::Approx(stats.temperature.normalize(windows[0].temperature[2])));
  CHECK(c.ev_count == doctest::Approx(stats.ev_count.normalize(windows[0].ev_count)));
  CHECK(c.weekday == windows[0].weekday);

  std::vector<ForecastWindow> flat = windows;
  for (auto& w : flat) std::fill(w.humidity.begin(), w.humidity.end(), 40.0);
  CHECK_THROWS_AS(NormalizationStats::fit(flat), ConfigError);
  CHECK_THROWS_AS(NormalizationStats::fit(std::span<const ForecastWindow>()), ConfigError);
}

TEST_CASE("CSV round trips are exact and malformed files are rejected") {
  SyntheticConfig cfg;
  cfg.days = 5;
  const SyntheticCorpus corpus = generate_synthetic(cfg);
  const auto sp = temp_file("sessions.csv"), wp = temp_file("weather.csv");
  write_sessions_csv(sp, corpus.sessions);
  write_weather_csv(wp, corpus.weather);
  const auto s = read_sessions_csv(sp);
  const auto w = read_weather_csv(wp);
  REQUIRE(s.size() == corpus.sessions.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(s[i].start == corpus.sessions[i].start);
    CHECK(s[i].duration_min == corpus.sessions[i].duration_min);
    CHECK(s[i].energy_kwh == corpus.sessions[i].energy_kwh);
  }
  REQUIRE(w.size() == corpus.weather.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    CHECK(w[i].time == corpus.weather[i].time);
    CHECK(w[i].temperature_c == corpus.weather[i].temperature_c);
    CHECK(w[i].humidity_pct == corpus.weather[i].humidity_pct);
  }
  const auto bad = temp_file("bad.csv");
  std::ofstream(bad) << "start_time,duration_min,energy_kwh\n2016-01-04T10:00,abc,3\n";
  try {
    read_sessions_csv(bad);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("abc") != std::string::npos);
  }
  std::ofstream(bad) << "when,how_long\n";
  CHECK_THROWS_AS(read_sessions_csv(bad), DataError);
  CHECK_THROWS_AS(read_sessions_csv(temp_file("no_such_file.csv")), DataError);
}

TEST_CASE("synthetic corpus is reproducible and seed dependent") {
  SyntheticConfig cfg;
  cfg.days = 20;
  const SyntheticCorpus a = generate_synthetic(cfg), b = generate_synthetic(cfg);
  REQUIRE(a.sessions.size() == b.sessions.size());
  for (std::size_t i = 0; i < a.sessions.size(); ++i) {
    CHECK(a.sessions[i].start == b.sessions[i].start);
    CHECK(a.sessions[i].energy_kwh == b.sessions[i].energy_kwh);
  }
  CHECK(a.weather.size() == 20 * 24);
  CHECK(a.days.size() == 20);
  cfg.seed = 8;
  const SyntheticCorpus c = generate_synthetic(cfg);
  CHECK((c.sessions.size() != a.sessions.size() || c.sessions[0].energy_kwh != a.sessions[0].energy_kwh));
}

TEST_CASE("synthetic sessions respect their ranges and per-day counts") {
  SyntheticConfig cfg;
  cfg.days = 30;
  const SyntheticCorpus corpus = generate_synthetic(cfg);
  for (const auto& s : corpus.sessions) {
    const auto day = std::chrono::floor<std::chrono::days>(s.start);
    CHECK(s.start + minutes(static_cast<long>(std::ceil(s.duration_min))) <= day + std::chrono::days(1));
    CHECK(s.duration_min <= cfg.duration_hi);
    CHECK(s.energy_kwh >= cfg.energy_lo);
    CHECK(s.energy_kwh <= cfg.energy_hi);
  }
  for (const SyntheticDay& d : corpus.days) {
    CHECK(count_evs(corpus.sessions, d.date) == d.ev_count);
    CHECK(d.weekday == weekday_index(d.date));
    CHECK(d.ev_count >= 1);
  }
}

TEST_CASE("doubling the EV base doubles the delivered energy") {
  SyntheticConfig cfg;
  cfg.days = 200;
  const auto energy = [](const SyntheticCorpus& c) {
    return std::accumulate(c.sessions.begin(), c.sessions.end(), 0.0,
                           [](double a, const ChargingSession& s) { return a + s.energy_kwh; });
  };
  const double base = energy(generate_synthetic(cfg));
  cfg.ev_base *= 2.0;
  const double doubled = energy(generate_synthetic(cfg));
  CHECK(std::abs(doubled / base - 2.0) < 0.1);
}

TEST_CASE("weekends follow their own start-time template") {
  SyntheticConfig cfg;
  cfg.days = 140;
  const SyntheticGenerator gen(cfg);
  const SyntheticCorpus corpus = gen.generate();
  double weekday_morning = 0, weekday_total = 0, weekend_morning = 0, weekend_total = 0;
  for (const auto& s : corpus.sessions) {
    const auto day = std::chrono::floor<std::chrono::days>(s.start);
    const long minute = (s.start - day).count();
    const bool morning = minute >= 360 && minute < 600;
    if (weekday_index(day) >= 5) {
      weekend_total += 1;
      weekend_morning += morning;
    } else {
      weekday_total += 1;
      weekday_morning += morning;
    }
  }
  CHECK(weekday_morning / weekday_total > weekend_morning / weekend_total + 0.15);
  CHECK(weekend_total / 40.0 < weekday_total / 100.0);
  CHECK(gen.expected_ev_count(6) == doctest::Approx(cfg.weekend_factor * gen.expected_ev_count(0)));
  CHECK(gen.evening_weight(15.0) == doctest::Approx(0.4));
  CHECK(gen.evening_weight(1000.0) == doctest::Approx(0.95));
  CHECK(gen.evening_weight(-1000.0) == doctest::Approx(0.05));
}

TEST_CASE("conditional profiles share the latent day and differ between draws") {
  SyntheticConfig cfg;
  const SyntheticGenerator gen(cfg);
  const SyntheticDay day{parse_date("2016-01-05"), 1, 20, 15.0};
  Rng rng(1);
  const nn::Matrix p = gen.sample_conditional_profiles(day, 50, 60, rng);
  CHECK(p.rows() == 50);
  CHECK(p.cols() == 24);
  CHECK(p.minCoeff() >= 0.0);
  CHECK((p.row(0) - p.row(1)).cwiseAbs().maxCoeff() > 1e-6);
  const double mean_energy = p.sum() / 50.0;
  CHECK(mean_energy == doctest::Approx(20 * gen.expected_session_energy()).epsilon(0.1));
}

TEST_CASE("invalid synthetic configurations are rejected") {
  SyntheticConfig cfg;
  cfg.days = 0;
  CHECK_THROWS_AS(SyntheticGenerator{cfg}, ConfigError);
  cfg = SyntheticConfig{};
  cfg.energy_lo = 20.0;
  CHECK_THROWS_AS(SyntheticGenerator{cfg}, ConfigError);
  cfg = SyntheticConfig{};
  cfg.duration_lo = 0.0;
  CHECK_THROWS_AS(SyntheticGenerator{cfg}, ConfigError);
}

TEST_CASE("EV count boundary examples") {
  CHECK(count_evs(std::vector<ChargingSession>{}, parse_date("2016-01-04")) == 0);
  const std::vector<ChargingSession> s{{at("2016-01-04T01:00"), 30.0, 1.0},
                                       {at("2016-01-04T12:00"), 30.0, 1.0},
                                       {at("2016-01-04T23:00"), 30.0, 1.0},
                                       {at("2016-01-03T22:00"), 180.0, 1.0}};
  CHECK(count_evs(s, parse_date("2016-01-04")) == 3);
}
