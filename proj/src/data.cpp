#include "chargecast/data.hpp"

#include "chargecast/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace chargecast {

using std::chrono::minutes;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

double parse_number(const std::string& text, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw DataError(where + ": cannot parse number '" + text + "'");
  }
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path, const std::string& header) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != header) {
    throw DataError(path.string() + ": expected header '" + header + "'");
  }
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    rows.push_back(split_csv_line(line));
  }
  return rows;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  return out;
}

TimePoint floor_day(TimePoint t) { return std::chrono::floor<std::chrono::days>(t); }

TimePoint ceil_day(TimePoint t) {
  const TimePoint f = floor_day(t);
  return f == t ? t : f + std::chrono::days(1);
}

std::string range_text(TimePoint begin, TimePoint end, int res) {
  return "[" + format_timestamp(begin) + ", " + format_timestamp(end) + ") @" + std::to_string(res) + "min";
}

void check_sessions(std::span<const ChargingSession> sessions) {
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    const ChargingSession& s = sessions[i];
    const std::string where = "session " + std::to_string(i + 1) + " (start " + format_timestamp(s.start) + ")";
    if (!(s.duration_min > 0.0) || !std::isfinite(s.duration_min)) {
      throw DataError(where + ": duration must be positive, got " + std::to_string(s.duration_min));
    }
    if (!(s.energy_kwh >= 0.0) || !std::isfinite(s.energy_kwh)) {
      throw DataError(where + ": energy must be finite and non-negative, got " + std::to_string(s.energy_kwh));
    }
  }
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

ChannelStats stats_of(const std::vector<double>& v, const char* channel) {
  if (v.empty()) throw ConfigError(std::string("normalization: no training data for channel ") + channel);
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double sd = std::sqrt(ss / static_cast<double>(v.size()));
  if (!(sd > 0.0)) throw ConfigError(std::string("normalization: channel ") + channel + " has zero variance");
  return {m, sd};
}

}  // namespace

TimePoint parse_timestamp(std::string_view text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0;
  char sep = 0;
  const std::string s(trim(std::string(text)));
  if (std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d", &y, &mo, &d, &sep, &h, &mi) != 6 || (sep != 'T' && sep != ' ')) {
    throw DataError("invalid timestamp '" + s + "'");
  }
  const std::chrono::year_month_day ymd{std::chrono::year(y), std::chrono::month(static_cast<unsigned>(mo)),
                                        std::chrono::day(static_cast<unsigned>(d))};
  if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59) throw DataError("invalid timestamp '" + s + "'");
  return std::chrono::sys_days(ymd) + std::chrono::hours(h) + minutes(mi);
}

std::string format_timestamp(TimePoint t) {
  const Day day = std::chrono::floor<std::chrono::days>(t);
  const std::chrono::year_month_day ymd(day);
  const auto in_day = std::chrono::duration_cast<minutes>(t - day).count();
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:00", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(in_day / 60),
                static_cast<int>(in_day % 60));
  return buf;
}

Day parse_date(std::string_view text) {
  int y = 0, mo = 0, d = 0;
  const std::string s(trim(std::string(text)));
  if (std::sscanf(s.c_str(), "%d-%d-%d", &y, &mo, &d) != 3) throw DataError("invalid date '" + s + "'");
  const std::chrono::year_month_day ymd{std::chrono::year(y), std::chrono::month(static_cast<unsigned>(mo)),
                                        std::chrono::day(static_cast<unsigned>(d))};
  if (!ymd.ok()) throw DataError("invalid date '" + s + "'");
  return Day(ymd);
}

int weekday_index(Day day) { return static_cast<int>(std::chrono::weekday(day).iso_encoding()) - 1; }

LoadSeries aggregate_sessions(std::span<const ChargingSession> sessions, int resolution_min) {
  if (sessions.empty()) throw DataError("aggregate_sessions: no sessions");
  check_sessions(sessions);
  TimePoint begin = sessions.front().start;
  TimePoint end = begin;
  for (const ChargingSession& s : sessions) {
    begin = std::min(begin, s.start);
    const auto stop = s.start + minutes(static_cast<long>(std::ceil(s.duration_min)));
    end = std::max(end, stop);
  }
  return aggregate_sessions(sessions, resolution_min, floor_day(begin), ceil_day(end));
}

LoadSeries aggregate_sessions(std::span<const ChargingSession> sessions, int resolution_min, TimePoint begin,
                              TimePoint end) {
  if (resolution_min <= 0 || 60 % resolution_min != 0) {
    throw ConfigError("aggregate_sessions: resolution " + std::to_string(resolution_min) + " min does not divide 60");
  }
  if (end <= begin || (end - begin).count() % resolution_min != 0) {
    throw ConfigError("aggregate_sessions: grid " + range_text(begin, end, resolution_min) + " is not whole bins");
  }
  check_sessions(sessions);
  LoadSeries series;
  series.start = begin;
  series.resolution_min = resolution_min;
  const auto bins = static_cast<std::size_t>((end - begin).count() / resolution_min);
  series.kw.assign(bins, 0.0);
  const double res = resolution_min;
  for (const ChargingSession& s : sessions) {
    const double power = s.energy_kwh / (s.duration_min / 60.0);
    const double lo = static_cast<double>((s.start - begin).count());
    const double hi = lo + s.duration_min;
    const double first = std::max(0.0, std::floor(lo / res));
    const double last = std::min(static_cast<double>(bins), std::ceil(hi / res));
    for (auto k = static_cast<std::size_t>(first); static_cast<double>(k) < last; ++k) {
      const double b0 = static_cast<double>(k) * res;
      const double overlap = std::min(hi, b0 + res) - std::max(lo, b0);
      if (overlap > 0.0) series.kw[k] += power * overlap / res;
    }
  }
  return series;
}

int count_evs(std::span<const ChargingSession> sessions, Day day) {
  return count_evs(sessions, TimePoint(day), TimePoint(day + std::chrono::days(1)));
}

int count_evs(std::span<const ChargingSession> sessions, TimePoint begin, TimePoint end) {
  return static_cast<int>(std::count_if(sessions.begin(), sessions.end(),
                                        [&](const ChargingSession& s) { return s.start >= begin && s.start < end; }));
}

WeatherSeries resample_weather(std::span<const WeatherRecord> records, TimePoint start, std::size_t bins,
                               int resolution_min) {
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].time <= records[i - 1].time) {
      throw DataError("weather: timestamps not strictly increasing at " + format_timestamp(records[i].time));
    }
  }
  WeatherSeries out;
  out.start = start;
  out.resolution_min = resolution_min;
  out.temperature.assign(bins, kNaN);
  out.humidity.assign(bins, kNaN);
  const minutes max_gap(60);
  for (std::size_t b = 0; b < bins; ++b) {
    const TimePoint t = start + minutes(resolution_min * static_cast<long>(b));
    const auto it = std::upper_bound(records.begin(), records.end(), t,
                                     [](TimePoint v, const WeatherRecord& r) { return v < r.time; });
    if (it == records.begin()) continue;
    const WeatherRecord& prev = *(it - 1);
    if (prev.time == t) {
      out.temperature[b] = prev.temperature_c;
      out.humidity[b] = prev.humidity_pct;
    } else if (it != records.end()) {
      if (it->time - prev.time > max_gap) continue;
      const double w = static_cast<double>((t - prev.time).count()) / static_cast<double>((it->time - prev.time).count());
      out.temperature[b] = prev.temperature_c + w * (it->temperature_c - prev.temperature_c);
      out.humidity[b] = prev.humidity_pct + w * (it->humidity_pct - prev.humidity_pct);
    } else if (t - prev.time < max_gap) {
      out.temperature[b] = prev.temperature_c;
      out.humidity[b] = prev.humidity_pct;
    }
  }
  return out;
}

void WindowConfig::validate() const {
  if (resolution_min <= 0 || 60 % resolution_min != 0) {
    throw ConfigError("window: resolution " + std::to_string(resolution_min) + " min does not divide 60");
  }
  if (history_steps < 1 || horizon_steps < 1) throw ConfigError("window: history and horizon must be positive");
}

void ForecastWindow::validate(const WindowConfig& cfg) const {
  if (static_cast<int>(history.size()) != cfg.history_steps || static_cast<int>(target.size()) != cfg.horizon_steps ||
      static_cast<int>(temperature.size()) != cfg.horizon_steps ||
      static_cast<int>(humidity.size()) != cfg.horizon_steps) {
    throw DataError("window " + format_timestamp(anchor) + ": lengths do not match the window config");
  }
  int ones = 0;
  for (double d : weekday) ones += d == 1.0 ? 1 : 0;
  if (ones != 1 || std::count(weekday.begin(), weekday.end(), 0.0) != 6) {
    throw DataError("window " + format_timestamp(anchor) + ": weekday vector is not one-hot");
  }
}

WindowBuildResult build_windows(const LoadSeries& load, const WeatherSeries& weather,
                                std::span<const ChargingSession> sessions, const WindowConfig& cfg) {
  cfg.validate();
  if (load.resolution_min != cfg.resolution_min) {
    throw DataError("load series resolution " + std::to_string(load.resolution_min) + " min differs from window config " +
                    std::to_string(cfg.resolution_min) + " min");
  }
  const TimePoint weather_end =
      weather.start + minutes(weather.resolution_min * static_cast<long>(weather.temperature.size()));
  if (weather.start != load.start || weather.resolution_min != load.resolution_min ||
      weather.temperature.size() != load.kw.size() || weather.humidity.size() != load.kw.size()) {
    throw DataError("misaligned series: load " + range_text(load.start, load.end(), load.resolution_min) +
                    ", weather " + range_text(weather.start, weather_end, weather.resolution_min));
  }
  if ((load.start - floor_day(load.start)).count() % cfg.resolution_min != 0) {
    throw DataError("load series start " + format_timestamp(load.start) + " is not on a bin boundary");
  }

  WindowBuildResult result;
  const minutes res(cfg.resolution_min);
  const TimePoint earliest = load.start + res * cfg.history_steps;
  for (TimePoint anchor = ceil_day(earliest); anchor + res * cfg.horizon_steps <= load.end();
       anchor += std::chrono::days(1)) {
    const auto i0 = static_cast<std::size_t>((anchor - load.start).count() / cfg.resolution_min);
    const std::size_t h0 = i0 - static_cast<std::size_t>(cfg.history_steps);
    ForecastWindow w;
    w.anchor = anchor;
    w.history.assign(load.kw.begin() + static_cast<long>(h0), load.kw.begin() + static_cast<long>(i0));
    const auto span_end = static_cast<long>(i0) + cfg.horizon_steps;
    w.target.assign(load.kw.begin() + static_cast<long>(i0), load.kw.begin() + span_end);
    w.temperature.assign(weather.temperature.begin() + static_cast<long>(i0), weather.temperature.begin() + span_end);
    w.humidity.assign(weather.humidity.begin() + static_cast<long>(i0), weather.humidity.begin() + span_end);

    const auto has_gap = [](const std::vector<double>& v) {
      return std::any_of(v.begin(), v.end(), [](double x) { return !std::isfinite(x); });
    };
    if (has_gap(w.history) || has_gap(w.target)) {
      result.dropped.push_back(format_timestamp(anchor) + ": missing load bins");
      continue;
    }
    if (has_gap(w.temperature) || has_gap(w.humidity)) {
      result.dropped.push_back(format_timestamp(anchor) + ": missing weather bins");
      continue;
    }
    w.weekday[static_cast<std::size_t>(weekday_index(std::chrono::floor<std::chrono::days>(anchor)))] = 1.0;
    w.ev_count = count_evs(sessions, anchor, anchor + res * cfg.horizon_steps);
    w.validate(cfg);
    result.windows.push_back(std::move(w));
  }
  return result;
}

WindowSplit split_windows(std::span<const ForecastWindow> windows, TimePoint split, const WindowConfig& cfg) {
  const minutes res(cfg.resolution_min);
  WindowSplit out;
  for (const ForecastWindow& w : windows) {
    if (w.anchor + res * cfg.horizon_steps <= split) {
      out.train.push_back(w);
    } else if (w.anchor - res * cfg.history_steps >= split) {
      out.test.push_back(w);
    }
  }
  return out;
}

NormalizationStats NormalizationStats::fit(std::span<const ForecastWindow> train) {
  std::vector<double> load, temp, hum, ev;
  for (const ForecastWindow& w : train) {
    load.insert(load.end(), w.target.begin(), w.target.end());
    temp.insert(temp.end(), w.temperature.begin(), w.temperature.end());
    hum.insert(hum.end(), w.humidity.begin(), w.humidity.end());
    ev.push_back(w.ev_count);
  }
  return {stats_of(load, "load"), stats_of(temp, "temperature"), stats_of(hum, "humidity"),
          stats_of(ev, "ev_count")};
}

void NormalizationStats::validate() const {
  for (const auto& [c, name] : {std::pair{load, "load"}, std::pair{temperature, "temperature"},
                                std::pair{humidity, "humidity"}, std::pair{ev_count, "ev_count"}}) {
    if (!(c.std > 0.0) || !std::isfinite(c.mean)) {
      throw ConfigError(std::string("normalization: invalid statistics for channel ") + name);
    }
  }
}

ConditionSet normalize_condition(const ForecastWindow& w, const NormalizationStats& stats) {
  stats.validate();
  ConditionSet c;
  c.history = normalize_load(w.history, stats);
  c.temperature.reserve(w.temperature.size());
  for (double x : w.temperature) c.temperature.push_back(stats.temperature.normalize(x));
  c.humidity.reserve(w.humidity.size());
  for (double x : w.humidity) c.humidity.push_back(stats.humidity.normalize(x));
  c.weekday = w.weekday;
  c.ev_count = stats.ev_count.normalize(w.ev_count);
  return c;
}

std::vector<double> normalize_load(std::span<const double> kw, const NormalizationStats& stats) {
  std::vector<double> out(kw.size());
  std::transform(kw.begin(), kw.end(), out.begin(), [&](double x) { return stats.load.normalize(x); });
  return out;
}

std::vector<double> denormalize_load(std::span<const double> z, const NormalizationStats& stats) {
  std::vector<double> out(z.size());
  std::transform(z.begin(), z.end(), out.begin(), [&](double x) { return stats.load.denormalize(x); });
  return out;
}

std::vector<ChargingSession> read_sessions_csv(const std::filesystem::path& path) {
  std::vector<ChargingSession> out;
  const auto rows = read_csv(path, "start_time,duration_min,energy_kwh");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string where = path.string() + " row " + std::to_string(i + 2);
    if (rows[i].size() != 3) throw DataError(where + ": expected 3 fields");
    ChargingSession s;
    try {
      s.start = parse_timestamp(rows[i][0]);
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    s.duration_min = parse_number(trim(rows[i][1]), where);
    s.energy_kwh = parse_number(trim(rows[i][2]), where);
    if (!(s.duration_min > 0.0)) throw DataError(where + ": duration must be positive");
    if (!(s.energy_kwh >= 0.0) || !std::isfinite(s.energy_kwh)) throw DataError(where + ": invalid energy");
    out.push_back(s);
  }
  return out;
}

void write_sessions_csv(const std::filesystem::path& path, std::span<const ChargingSession> sessions) {
  std::ofstream out = open_output(path);
  out << "start_time,duration_min,energy_kwh\n";
  for (const ChargingSession& s : sessions) {
    out << format_timestamp(s.start) << ',' << s.duration_min << ',' << s.energy_kwh << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<WeatherRecord> read_weather_csv(const std::filesystem::path& path) {
  std::vector<WeatherRecord> out;
  const auto rows = read_csv(path, "timestamp,temperature_c,humidity_pct");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string where = path.string() + " row " + std::to_string(i + 2);
    if (rows[i].size() != 3) throw DataError(where + ": expected 3 fields");
    WeatherRecord r;
    try {
      r.time = parse_timestamp(rows[i][0]);
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    r.temperature_c = parse_number(trim(rows[i][1]), where);
    r.humidity_pct = parse_number(trim(rows[i][2]), where);
    out.push_back(r);
  }
  return out;
}

void write_weather_csv(const std::filesystem::path& path, std::span<const WeatherRecord> records) {
  std::ofstream out = open_output(path);
  out << "timestamp,temperature_c,humidity_pct\n";
  for (const WeatherRecord& r : records) {
    out << format_timestamp(r.time) << ',' << r.temperature_c << ',' << r.humidity_pct << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

void SyntheticConfig::validate() const {
  if (days < 1) throw ConfigError("synthetic: days must be >= 1");
  if (!(ev_base > 0.0) || ev_spread < 0.0 || ev_spread >= 1.0 || weekend_factor <= 0.0) {
    throw ConfigError("synthetic: invalid EV count parameters");
  }
  if (!(energy_lo >= 0.0 && energy_lo <= energy_hi)) throw ConfigError("synthetic: invalid energy range");
  if (!(duration_lo > 0.0 && duration_lo <= duration_hi)) throw ConfigError("synthetic: invalid duration range");
  parse_date(start_date);
}

SyntheticGenerator::SyntheticGenerator(SyntheticConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

double SyntheticGenerator::expected_ev_count(int weekday) const {
  return cfg_.ev_base * (weekday >= 5 ? cfg_.weekend_factor : 1.0);
}

double SyntheticGenerator::expected_session_energy() const { return 0.5 * (cfg_.energy_lo + cfg_.energy_hi); }

double SyntheticGenerator::evening_weight(double mean_temperature) const {
  return std::clamp(cfg_.evening_weight + cfg_.evening_temp_gain * (mean_temperature - cfg_.temp_base), 0.05, 0.95);
}

std::vector<ChargingSession> SyntheticGenerator::sample_day_sessions(const SyntheticDay& day, Rng& rng) const {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> morning(8.0 * 60.0, 1.25 * 60.0);
  std::normal_distribution<double> midday(12.5 * 60.0, 2.5 * 60.0);
  std::normal_distribution<double> evening(17.5 * 60.0, 1.5 * 60.0);
  const double w_evening = evening_weight(day.mean_temperature);
  const bool weekend = day.weekday >= 5;
  std::vector<ChargingSession> out;
  out.reserve(static_cast<std::size_t>(day.ev_count));
  for (int k = 0; k < day.ev_count; ++k) {
    double start = -1.0;
    while (start < 0.0 || start >= 24.0 * 60.0 - 1.0) {
      start = unit(rng) < w_evening ? evening(rng) : (weekend ? midday(rng) : morning(rng));
    }
    const double start_min = std::floor(start);
    const double duration = cfg_.duration_lo + (cfg_.duration_hi - cfg_.duration_lo) * unit(rng);
    const double energy = cfg_.energy_lo + (cfg_.energy_hi - cfg_.energy_lo) * unit(rng);
    ChargingSession s;
    s.start = TimePoint(day.date) + minutes(static_cast<long>(start_min));
    s.duration_min = std::min(duration, 24.0 * 60.0 - start_min);
    s.energy_kwh = energy;
    out.push_back(s);
  }
  return out;
}

nn::Matrix SyntheticGenerator::sample_conditional_profiles(const SyntheticDay& day, int members, int resolution_min,
                                                           Rng& rng) const {
  const int bins = 24 * 60 / resolution_min;
  nn::Matrix out(members, bins);
  const TimePoint begin(day.date);
  const TimePoint end = begin + std::chrono::days(1);
  for (int n = 0; n < members; ++n) {
    const auto sessions = sample_day_sessions(day, rng);
    const LoadSeries series = aggregate_sessions(sessions, resolution_min, begin, end);
    for (int j = 0; j < bins; ++j) out(n, j) = series.kw[static_cast<std::size_t>(j)];
  }
  return out;
}

SyntheticCorpus SyntheticGenerator::generate() const {
  SyntheticCorpus corpus;
  const Day first = parse_date(cfg_.start_date);
  for (int k = 0; k < cfg_.days; ++k) {
    Rng rng = make_substream(cfg_.seed, static_cast<std::uint64_t>(k));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    SyntheticDay day;
    day.date = first + std::chrono::days(k);
    day.weekday = weekday_index(day.date);

    const std::chrono::year_month_day ymd(day.date);
    const Day jan1 = Day(ymd.year() / std::chrono::January / 1);
    const double doy = static_cast<double>((day.date - jan1).count()) + 1.0;
    day.mean_temperature = cfg_.temp_base + cfg_.temp_season * std::sin(2.0 * std::numbers::pi * (doy - 105.0) / 365.0) +
                           cfg_.temp_day_sd * normal(rng);
    const double scale = 1.0 - cfg_.ev_spread + 2.0 * cfg_.ev_spread * unit(rng);
    day.ev_count = std::max(1, static_cast<int>(std::lround(expected_ev_count(day.weekday) * scale)));

    for (int h = 0; h < 24; ++h) {
      WeatherRecord r;
      r.time = TimePoint(day.date) + std::chrono::hours(h);
      r.temperature_c = day.mean_temperature +
                        cfg_.temp_diurnal * std::sin(2.0 * std::numbers::pi * (h - 9.0) / 24.0) + 0.5 * normal(rng);
      r.humidity_pct = std::clamp(cfg_.humidity_base + cfg_.humidity_slope * (r.temperature_c - cfg_.temp_base) +
                                      3.0 * normal(rng),
                                  5.0, 100.0);
      corpus.weather.push_back(r);
    }
    auto sessions = sample_day_sessions(day, rng);
    std::sort(sessions.begin(), sessions.end(),
              [](const ChargingSession& a, const ChargingSession& b) { return a.start < b.start; });
    corpus.sessions.insert(corpus.sessions.end(), sessions.begin(), sessions.end());
    corpus.days.push_back(day);
  }
  return corpus;
}

}  // namespace chargecast
