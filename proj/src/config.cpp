#include "chargecast/config.hpp"

#include "chargecast/errors.hpp"

#include <fstream>

namespace chargecast {

using nlohmann::json;

namespace {

const char* fusion_name(Fusion f) { return f == Fusion::kAddition ? "addition" : "cross_attention"; }

Fusion parse_fusion(const std::string& s) {
  if (s == "cross_attention") return Fusion::kCrossAttention;
  if (s == "addition") return Fusion::kAddition;
  throw ConfigError("unknown fusion '" + s + "' (expected cross_attention or addition)");
}

const char* refresh_name(MedianRefresh r) { return r == MedianRefresh::kOnce ? "once" : "per_epoch"; }

MedianRefresh parse_refresh(const std::string& s) {
  if (s == "per_epoch") return MedianRefresh::kPerEpoch;
  if (s == "once") return MedianRefresh::kOnce;
  throw ConfigError("unknown median_refresh '" + s + "' (expected per_epoch or once)");
}

json stage_json(const StageConfig& s) {
  return {{"epochs", s.epochs}, {"learning_rate", s.learning_rate}, {"batch_size", s.batch_size}};
}

StageConfig stage_from(const json& j) {
  return {j.at("epochs").get<int>(), j.at("learning_rate").get<double>(), j.at("batch_size").get<int>()};
}

json synthetic_json(const SyntheticConfig& c) {
  return {{"seed", c.seed},
          {"start_date", c.start_date},
          {"days", c.days},
          {"ev_base", c.ev_base},
          {"ev_spread", c.ev_spread},
          {"weekend_factor", c.weekend_factor},
          {"energy_lo", c.energy_lo},
          {"energy_hi", c.energy_hi},
          {"duration_lo", c.duration_lo},
          {"duration_hi", c.duration_hi},
          {"evening_weight", c.evening_weight},
          {"evening_temp_gain", c.evening_temp_gain},
          {"temp_base", c.temp_base},
          {"temp_season", c.temp_season},
          {"temp_day_sd", c.temp_day_sd},
          {"temp_diurnal", c.temp_diurnal},
          {"humidity_base", c.humidity_base},
          {"humidity_slope", c.humidity_slope}};
}

SyntheticConfig synthetic_from(const json& j) {
  SyntheticConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.start_date = j.at("start_date").get<std::string>();
  c.days = j.at("days").get<int>();
  c.ev_base = j.at("ev_base").get<double>();
  c.ev_spread = j.at("ev_spread").get<double>();
  c.weekend_factor = j.at("weekend_factor").get<double>();
  c.energy_lo = j.at("energy_lo").get<double>();
  c.energy_hi = j.at("energy_hi").get<double>();
  c.duration_lo = j.at("duration_lo").get<double>();
  c.duration_hi = j.at("duration_hi").get<double>();
  c.evening_weight = j.at("evening_weight").get<double>();
  c.evening_temp_gain = j.at("evening_temp_gain").get<double>();
  c.temp_base = j.at("temp_base").get<double>();
  c.temp_season = j.at("temp_season").get<double>();
  c.temp_day_sd = j.at("temp_day_sd").get<double>();
  c.temp_diurnal = j.at("temp_diurnal").get<double>();
  c.humidity_base = j.at("humidity_base").get<double>();
  c.humidity_slope = j.at("humidity_slope").get<double>();
  return c;
}

}  // namespace

json to_json(const ModelConfig& c) {
  return {{"history_len", c.history_len}, {"horizon", c.horizon},
          {"hidden", c.hidden},           {"heads", c.heads},
          {"diffusion_steps", c.diffusion_steps}, {"use_covariates", c.use_covariates},
          {"fusion", fusion_name(c.fusion)}, {"residual", c.residual}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.history_len = j.at("history_len").get<int>();
  c.horizon = j.at("horizon").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.heads = j.at("heads").get<int>();
  c.diffusion_steps = j.at("diffusion_steps").get<int>();
  c.use_covariates = j.at("use_covariates").get<bool>();
  c.fusion = parse_fusion(j.at("fusion").get<std::string>());
  c.residual = j.at("residual").get<bool>();
  return c;
}

json to_json(const ScheduleConfig& c) {
  return {{"steps", c.steps}, {"beta_start", c.beta_start}, {"beta_end", c.beta_end}};
}

ScheduleConfig schedule_config_from_json(const json& j) {
  return {j.at("steps").get<int>(), j.at("beta_start").get<double>(), j.at("beta_end").get<double>()};
}

json to_json(const WindowConfig& c) {
  return {{"resolution_min", c.resolution_min}, {"history_steps", c.history_steps},
          {"horizon_steps", c.horizon_steps}};
}

WindowConfig window_config_from_json(const json& j) {
  return {j.at("resolution_min").get<int>(), j.at("history_steps").get<int>(), j.at("horizon_steps").get<int>()};
}

json to_json(const NormalizationStats& s) {
  const auto ch = [](const ChannelStats& c) { return json{{"mean", c.mean}, {"std", c.std}}; };
  return {{"load", ch(s.load)}, {"temperature", ch(s.temperature)}, {"humidity", ch(s.humidity)},
          {"ev_count", ch(s.ev_count)}};
}

NormalizationStats normalization_from_json(const json& j) {
  const auto ch = [](const json& c) { return ChannelStats{c.at("mean").get<double>(), c.at("std").get<double>()}; };
  NormalizationStats s{ch(j.at("load")), ch(j.at("temperature")), ch(j.at("humidity")), ch(j.at("ev_count"))};
  s.validate();
  return s;
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.history_len = data.window.history_steps;
  m.horizon = data.window.horizon_steps;
  m.hidden = model.hidden;
  m.heads = model.heads;
  m.diffusion_steps = schedule.steps;
  m.use_covariates = model.use_covariates;
  m.fusion = model.fusion;
  m.residual = model.residual;
  return m;
}

void RunConfig::validate() const {
  data.window.validate();
  if (!data.split_date.empty()) parse_date(data.split_date);
  NoiseSchedule::quadratic(schedule);
  model_config().validate();
  training.validate(data.window.horizon_steps);
  sampler.validate(data.window.horizon_steps);
  synthetic.validate();
  baseline.validate("baseline");
  if (evaluation.max_windows < 0 || evaluation.plot_windows < 0) {
    throw ConfigError("evaluation: max_windows and plot_windows must be >= 0");
  }
  for (double s : evaluation.ev_count_scales) {
    if (!(s > 0.0)) throw ConfigError("evaluation: ev_count_scales must be positive");
  }
  if (evaluation.ev_count_scales.empty()) throw ConfigError("evaluation: ev_count_scales is empty");
}

json to_json(const RunConfig& c) {
  json components = json::array();
  for (Component k : c.training.finetune_components) components.push_back(component_name(k));
  return {
      {"data",
       {{"sessions_csv", c.data.sessions_csv},
        {"weather_csv", c.data.weather_csv},
        {"split_date", c.data.split_date},
        {"window", to_json(c.data.window)}}},
      {"schedule", to_json(c.schedule)},
      {"model",
       {{"hidden", c.model.hidden},
        {"heads", c.model.heads},
        {"use_covariates", c.model.use_covariates},
        {"fusion", fusion_name(c.model.fusion)},
        {"residual", c.model.residual},
        {"seed", c.model.seed}}},
      {"training",
       {{"pretrain", stage_json(c.training.pretrain)},
        {"finetune", stage_json(c.training.finetune)},
        {"qdm_weight", c.training.qdm_weight},
        {"finetune_components", components},
        {"finetune_ensemble", c.training.finetune_ensemble},
        {"qdm_both_branches", c.training.qdm_both_branches},
        {"median_refresh", refresh_name(c.training.median_refresh)},
        {"observed_prefix", c.training.observed_prefix},
        {"seed", c.training.seed},
        {"threads", c.training.threads}}},
      {"sampler",
       {{"ensemble_size", c.sampler.ensemble_size},
        {"seed", c.sampler.seed},
        {"observed_prefix", c.sampler.observed_prefix},
        {"threads", c.sampler.threads}}},
      {"synthetic", synthetic_json(c.synthetic)},
      {"baseline", stage_json(c.baseline)},
      {"evaluation",
       {{"max_windows", c.evaluation.max_windows},
        {"ev_count_scales", c.evaluation.ev_count_scales},
        {"cumulative", c.evaluation.cumulative},
        {"baseline", c.evaluation.baseline},
        {"plot_windows", c.evaluation.plot_windows}}},
      {"output_root", c.output_root},
  };
}

void merge_strict(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) throw ConfigError("config: '" + (path.empty() ? "<root>" : path) + "' must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string full = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError("config: unknown key '" + full + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      merge_strict(slot, value, full);
    } else {
      slot = value;
    }
  }
}

RunConfig run_config_from_json(const json& j) {
  json merged = to_json(RunConfig{});
  merge_strict(merged, j);
  RunConfig c;
  try {
    const json& d = merged.at("data");
    c.data.sessions_csv = d.at("sessions_csv").get<std::string>();
    c.data.weather_csv = d.at("weather_csv").get<std::string>();
    c.data.split_date = d.at("split_date").get<std::string>();
    c.data.window = window_config_from_json(d.at("window"));
    c.schedule = schedule_config_from_json(merged.at("schedule"));

    const json& m = merged.at("model");
    c.model.hidden = m.at("hidden").get<int>();
    c.model.heads = m.at("heads").get<int>();
    c.model.use_covariates = m.at("use_covariates").get<bool>();
    c.model.fusion = parse_fusion(m.at("fusion").get<std::string>());
    c.model.residual = m.at("residual").get<bool>();
    c.model.seed = m.at("seed").get<std::uint64_t>();

    const json& t = merged.at("training");
    c.training.pretrain = stage_from(t.at("pretrain"));
    c.training.finetune = stage_from(t.at("finetune"));
    c.training.qdm_weight = t.at("qdm_weight").get<double>();
    c.training.finetune_components.clear();
    for (const auto& name : t.at("finetune_components")) {
      c.training.finetune_components.push_back(parse_component(name.get<std::string>()));
    }
    c.training.finetune_ensemble = t.at("finetune_ensemble").get<int>();
    c.training.qdm_both_branches = t.at("qdm_both_branches").get<bool>();
    c.training.median_refresh = parse_refresh(t.at("median_refresh").get<std::string>());
    c.training.observed_prefix = t.at("observed_prefix").get<int>();
    c.training.seed = t.at("seed").get<std::uint64_t>();
    c.training.threads = t.at("threads").get<int>();

    const json& s = merged.at("sampler");
    c.sampler.ensemble_size = s.at("ensemble_size").get<int>();
    c.sampler.seed = s.at("seed").get<std::uint64_t>();
    c.sampler.observed_prefix = s.at("observed_prefix").get<int>();
    c.sampler.threads = s.at("threads").get<int>();

    c.synthetic = synthetic_from(merged.at("synthetic"));
    c.baseline = stage_from(merged.at("baseline"));

    const json& e = merged.at("evaluation");
    c.evaluation.max_windows = e.at("max_windows").get<int>();
    c.evaluation.ev_count_scales = e.at("ev_count_scales").get<std::vector<double>>();
    c.evaluation.cumulative = e.at("cumulative").get<bool>();
    c.evaluation.baseline = e.at("baseline").get<bool>();
    c.evaluation.plot_windows = e.at("plot_windows").get<int>();
    c.output_root = merged.at("output_root").get<std::string>();
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  }
  c.validate();
  return c;
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) throw ConfigError("config: unknown key '" + key + "'");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object()) throw ConfigError("config: '" + key + "' is a section, not a value");
  *node = value;
}

RunConfig load_run_config(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
  json merged = to_json(RunConfig{});
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config " + file.string());
    const json patch = json::parse(in, nullptr, false);
    if (patch.is_discarded()) throw ConfigError("config " + file.string() + " is not valid JSON");
    merge_strict(merged, patch);
  }
  for (const std::string& o : overrides) apply_override(merged, o);
  return run_config_from_json(merged);
}

}  // namespace chargecast
