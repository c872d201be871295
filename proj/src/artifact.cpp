#include "chargecast/artifact.hpp"

#include "chargecast/errors.hpp"

#include <fstream>

namespace chargecast {

using nlohmann::json;

void save_artifact(const std::filesystem::path& path, const Denoiser& model, const ArtifactMeta& meta) {
  json params = json::array();
  for (const nn::ParamTensor* p : model.params().all()) {
    params.push_back({{"name", p->name},
                      {"rows", p->value.rows()},
                      {"cols", p->value.cols()},
                      {"data", std::vector<double>(p->value.data(), p->value.data() + p->value.size())}});
  }
  const json doc = {{"format", "chargecast-model"},
                    {"version", kArtifactVersion},
                    {"stage", meta.stage},
                    {"model", to_json(model.config())},
                    {"schedule", to_json(meta.schedule)},
                    {"window", to_json(meta.window)},
                    {"normalization", to_json(meta.stats)},
                    {"effective_config", meta.effective_config},
                    {"parameters", params}};
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << doc.dump(1) << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

ModelArtifact load_artifact(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open model artifact " + path.string());
  const json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw ModelError(path.string() + ": not a JSON model artifact");
  const std::string where = path.string() + ": ";
  try {
    if (doc.at("format").get<std::string>() != "chargecast-model") throw ModelError(where + "unknown format");
    const int version = doc.at("version").get<int>();
    if (version != kArtifactVersion) {
      throw ModelError(where + "artifact version " + std::to_string(version) + ", this build reads " +
                       std::to_string(kArtifactVersion));
    }
    ArtifactMeta meta;
    meta.stage = doc.at("stage").get<std::string>();
    meta.schedule = schedule_config_from_json(doc.at("schedule"));
    meta.window = window_config_from_json(doc.at("window"));
    meta.stats = normalization_from_json(doc.at("normalization"));
    meta.effective_config = doc.at("effective_config");
    const ModelConfig cfg = model_config_from_json(doc.at("model"));
    if (cfg.history_len != meta.window.history_steps || cfg.horizon != meta.window.horizon_steps ||
        cfg.diffusion_steps != meta.schedule.steps) {
      throw ModelError(where + "model config disagrees with the stored window or schedule");
    }

    Denoiser model(cfg, 0);
    std::vector<nn::ParamTensor*> params = model.params().all();
    const json& stored = doc.at("parameters");
    if (stored.size() != params.size()) {
      throw ModelError(where + "expected " + std::to_string(params.size()) + " parameter tensors, found " +
                       std::to_string(stored.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      nn::ParamTensor& p = *params[i];
      const json& s = stored[i];
      const auto name = s.at("name").get<std::string>();
      const auto rows = s.at("rows").get<Eigen::Index>();
      const auto cols = s.at("cols").get<Eigen::Index>();
      if (name != p.name || rows != p.value.rows() || cols != p.value.cols()) {
        throw ModelError(where + "parameter " + std::to_string(i) + " is " + name + " [" + std::to_string(rows) + "x" +
                         std::to_string(cols) + "], expected " + p.name + " [" + std::to_string(p.value.rows()) + "x" +
                         std::to_string(p.value.cols()) + "]");
      }
      const auto data = s.at("data").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(data.size()) != p.value.size()) throw ModelError(where + "truncated " + name);
      std::copy(data.begin(), data.end(), p.value.data());
    }
    return {std::move(meta), std::move(model)};
  } catch (const json::exception& e) {
    throw ModelError(where + e.what());
  } catch (const ConfigError& e) {
    throw ModelError(where + e.what());
  }
}

}  // namespace chargecast
