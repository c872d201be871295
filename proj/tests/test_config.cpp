#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "chargecast/config.hpp"
#include "chargecast/errors.hpp"

#include <filesystem>
#include <fstream>

using namespace chargecast;
using nlohmann::json;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "chargecast_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("defaults carry the published hyperparameters") {
  const RunConfig cfg;
  CHECK(cfg.training.pretrain.learning_rate == 1e-3);
  CHECK(cfg.training.finetune.learning_rate == 2e-4);
  CHECK(cfg.training.pretrain.epochs == 200);
  CHECK(cfg.training.finetune.epochs == 100);
  CHECK(cfg.training.pretrain.batch_size == 16);
  CHECK(cfg.training.finetune.batch_size == 16);
  CHECK(cfg.training.qdm_weight == 1e-3);
  CHECK(cfg.sampler.ensemble_size == 1000);
  CHECK(cfg.model.hidden == 32);
  CHECK(cfg.model.heads == 4);
  CHECK(cfg.schedule.steps == 200);
  CHECK(cfg.schedule.beta_start == 1e-4);
  CHECK(cfg.schedule.beta_end == 0.5);
  CHECK(cfg.data.window.resolution_min == 15);
  CHECK(cfg.data.window.history_steps == 480);
  CHECK(cfg.data.window.horizon_steps == 96);
  CHECK_NOTHROW(cfg.validate());
  const ModelConfig m = cfg.model_config();
  CHECK(m.history_len == 480);
  CHECK(m.horizon == 96);
  CHECK(m.diffusion_steps == 200);
}

TEST_CASE("JSON round trip reproduces the configuration") {
  RunConfig cfg;
  cfg.training.finetune_components = {Component::kForecastHead, Component::kCrossAttention};
  cfg.training.median_refresh = MedianRefresh::kOnce;
  cfg.model.fusion = Fusion::kAddition;
  cfg.evaluation.ev_count_scales = {0.9, 1.1};
  const json j = to_json(cfg);
  CHECK(to_json(run_config_from_json(j)) == j);
  CHECK(j["model"]["fusion"] == "addition");
  CHECK(j["training"]["median_refresh"] == "once");
  CHECK(j["training"]["finetune_components"][1] == "cross_attention");
}

TEST_CASE("unknown keys and wrong types are rejected") {
  json j = to_json(RunConfig{});
  const std::string msg = error_of([&] { merge_strict(j, json{{"training", {{"pretrian", 3}}}}); });
  CHECK(msg.find("training.pretrian") != std::string::npos);
  CHECK_THROWS_AS(merge_strict(j, json{{"colour", "red"}}), ConfigError);
  json bad = to_json(RunConfig{});
  bad["training"]["pretrain"]["epochs"] = "many";
  CHECK_THROWS_AS(run_config_from_json(bad), ConfigError);
  json extra = to_json(RunConfig{});
  extra["model"]["depth"] = 3;
  CHECK_THROWS_AS(run_config_from_json(extra), ConfigError);
  json fusion = to_json(RunConfig{});
  fusion["model"]["fusion"] = "concat";
  CHECK_THROWS_AS(run_config_from_json(fusion), ConfigError);
}

TEST_CASE("dotted overrides parse JSON values with a string fallback") {
  json j = to_json(RunConfig{});
  apply_override(j, "training.pretrain.epochs=7");
  apply_override(j, "model.use_covariates=false");
  apply_override(j, "data.split_date=2017-03-01");
  apply_override(j, "evaluation.ev_count_scales=[0.5,1.5]");
  const RunConfig cfg = run_config_from_json(j);
  CHECK(cfg.training.pretrain.epochs == 7);
  CHECK_FALSE(cfg.model.use_covariates);
  CHECK(cfg.data.split_date == "2017-03-01");
  CHECK(cfg.evaluation.ev_count_scales == std::vector<double>{0.5, 1.5});
  CHECK_THROWS_AS(apply_override(j, "training.pretrain.epoch=7"), ConfigError);
  CHECK_THROWS_AS(apply_override(j, "no_equals_sign"), ConfigError);
}

TEST_CASE("config files merge over defaults and overrides win") {
  const auto path = temp_file("run.json");
  std::ofstream(path) << R"({"sampler": {"ensemble_size": 50}, "schedule": {"steps": 50}})";
  const RunConfig cfg = load_run_config(path, {"sampler.ensemble_size=20"});
  CHECK(cfg.sampler.ensemble_size == 20);
  CHECK(cfg.schedule.steps == 50);
  CHECK(cfg.training.pretrain.epochs == 200);
  const auto broken = temp_file("broken.json");
  std::ofstream(broken) << "{ not json";
  CHECK_THROWS_AS(load_run_config(broken, {}), ConfigError);
  CHECK_THROWS_AS(load_run_config(temp_file("absent.json"), {}), ConfigError);
}

TEST_CASE("validation rejects inconsistent settings") {
  const auto invalid = [](const std::string& assignment) {
    json j = to_json(RunConfig{});
    apply_override(j, assignment);
    return error_of([&] { run_config_from_json(j).validate(); });
  };
  CHECK_FALSE(invalid("model.heads=5").empty());
  CHECK_FALSE(invalid("sampler.observed_prefix=96").empty());
  CHECK_FALSE(invalid("sampler.ensemble_size=0").empty());
  CHECK_FALSE(invalid("training.pretrain.batch_size=0").empty());
  CHECK_FALSE(invalid("training.qdm_weight=-1").empty());
  CHECK_FALSE(invalid("schedule.beta_end=1.5").empty());
  CHECK_FALSE(invalid("data.window.resolution_min=7").empty());
  CHECK(invalid("training.finetune.epochs=0").empty());
}
