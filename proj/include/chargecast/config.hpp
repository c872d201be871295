#pragma once

#include "chargecast/data.hpp"
#include "chargecast/denoiser.hpp"
#include "chargecast/diffusion.hpp"
#include "chargecast/schedule.hpp"
#include "chargecast/training.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace chargecast {

struct DataConfig {
  std::string sessions_csv;
  std::string weather_csv;
  std::string split_date;  // empty: 80% of the covered days train
  WindowConfig window;
};

/// Network options; lengths and step count follow the window and schedule.
struct NetworkConfig {
  int hidden = 32;
  int heads = 4;
  bool use_covariates = true;
  Fusion fusion = Fusion::kCrossAttention;
  bool residual = true;
  std::uint64_t seed = 17;
};

struct EvaluationConfig {
  int max_windows = 0;  // 0 scores every test window
  std::vector<double> ev_count_scales{1.0};
  bool cumulative = false;
  bool baseline = false;
  int plot_windows = 3;
};

struct RunConfig {
  DataConfig data;
  ScheduleConfig schedule;
  NetworkConfig model;
  TrainingConfig training;
  SamplerConfig sampler;
  SyntheticConfig synthetic;
  StageConfig baseline{200, 1e-3, 16};
  EvaluationConfig evaluation;
  std::string output_root = "runs";

  ModelConfig model_config() const;
  void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Every key must already exist in the defaults; unknown keys and wrong
/// types are ConfigErrors.
RunConfig run_config_from_json(const nlohmann::json& j);
/// Merges `patch` over `base`, rejecting keys absent from `base`.
void merge_strict(nlohmann::json& base, const nlohmann::json& patch, const std::string& path = "");
/// Applies "dotted.key=value"; the value is parsed as JSON, falling back to
/// a plain string.
void apply_override(nlohmann::json& j, const std::string& assignment);

/// Defaults, then the optional file, then overrides in order.
RunConfig load_run_config(const std::filesystem::path& file, const std::vector<std::string>& overrides);

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ScheduleConfig& cfg);
ScheduleConfig schedule_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const WindowConfig& cfg);
WindowConfig window_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const NormalizationStats& stats);
NormalizationStats normalization_from_json(const nlohmann::json& j);

}  // namespace chargecast
