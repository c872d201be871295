#pragma once

#include "chargecast/config.hpp"
#include "chargecast/data.hpp"
#include "chargecast/denoiser.hpp"
#include "chargecast/schedule.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

namespace chargecast {

inline constexpr int kArtifactVersion = 1;

struct ArtifactMeta {
  std::string stage;  // "pretrained" or "finetuned"
  ScheduleConfig schedule;
  WindowConfig window;
  NormalizationStats stats;
  nlohmann::json effective_config = nlohmann::json::object();
};

struct ModelArtifact {
  ArtifactMeta meta;
  Denoiser model;
};

/// JSON container: version, stage, configs, normalization statistics and
/// every parameter as (name, rows, cols, row-major data). Doubles are
/// written in shortest round-trip form, so loading is bit-exact.
void save_artifact(const std::filesystem::path& path, const Denoiser& model, const ArtifactMeta& meta);

/// Rebuilds the network from the stored config and checks the parameter
/// manifest (names, order, shapes). Throws ModelError on any mismatch.
ModelArtifact load_artifact(const std::filesystem::path& path);

}  // namespace chargecast
