// chargecast: simulate, train, finetune, forecast and evaluate from the shell.

#include "chargecast/artifact.hpp"
#include "chargecast/baseline.hpp"
#include "chargecast/config.hpp"
#include "chargecast/errors.hpp"
#include "chargecast/pipeline.hpp"
#include "chargecast/report.hpp"
#include "chargecast/training.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace chargecast;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct Options {
  std::string config;
  std::vector<std::string> sets;
  std::string run_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> models;
  std::optional<int> observed;
  std::vector<double> ev_scales;
  bool cumulative = false;
  bool baseline = false;
};

void log(const std::string& msg) { std::cerr << msg << '\n'; }

// Defaults (or an artifact's embedded config), then the file, then flags,
// then --set overrides.
RunConfig resolve_config(const Options& opt, const std::string& command, const json* base = nullptr) {
  json merged = base ? *base : to_json(RunConfig{});
  if (!opt.config.empty()) {
    std::ifstream in(opt.config);
    if (!in) throw ConfigError("cannot open config " + opt.config);
    const json patch = json::parse(in, nullptr, false);
    if (patch.is_discarded()) throw ConfigError("config " + opt.config + " is not valid JSON");
    merge_strict(merged, patch);
  }
  if (opt.seed) {
    const std::string s = std::to_string(*opt.seed);
    if (command == "simulate") {
      apply_override(merged, "synthetic.seed=" + s);
    } else {
      apply_override(merged, "model.seed=" + s);
      apply_override(merged, "training.seed=" + s);
      apply_override(merged, "sampler.seed=" + s);
    }
  }
  if (opt.observed) {
    apply_override(merged, "training.observed_prefix=" + std::to_string(*opt.observed));
    apply_override(merged, "sampler.observed_prefix=" + std::to_string(*opt.observed));
  }
  if (!opt.ev_scales.empty()) merged["evaluation"]["ev_count_scales"] = opt.ev_scales;
  if (opt.cumulative) merged["evaluation"]["cumulative"] = true;
  if (opt.baseline) merged["evaluation"]["baseline"] = true;
  for (const std::string& s : opt.sets) apply_override(merged, s);
  return run_config_from_json(merged);
}

fs::path make_run_dir(const Options& opt, const RunConfig& cfg, std::uint64_t seed) {
  fs::path dir = opt.run_dir;
  if (dir.empty()) {
    const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
    const auto day = std::chrono::floor<std::chrono::days>(now);
    const std::chrono::year_month_day ymd(day);
    const std::chrono::hh_mm_ss hms(now - day);
    char name[64];
    std::snprintf(name, sizeof name, "%04d%02u%02u-%02ld%02ld%02ld_seed%llu", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                  static_cast<long>(hms.seconds().count()), static_cast<unsigned long long>(seed));
    dir = fs::path(cfg.output_root) / name;
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create run directory " + dir.string() + ": " + ec.message());
  return dir;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void check_against_artifact(const RunConfig& cfg, const ArtifactMeta& meta, const ModelConfig& model) {
  const ModelConfig want = cfg.model_config();
  if (to_json(cfg.data.window) != to_json(meta.window)) {
    throw ConfigError("config window " + to_json(cfg.data.window).dump() + " does not match the artifact's " +
                      to_json(meta.window).dump() + "; drop the conflicting data.window overrides");
  }
  if (to_json(cfg.schedule) != to_json(meta.schedule)) {
    throw ConfigError("config schedule " + to_json(cfg.schedule).dump() + " does not match the artifact's " +
                      to_json(meta.schedule).dump());
  }
  if (to_json(want) != to_json(model)) {
    throw ConfigError("config model " + to_json(want).dump() + " does not match the artifact's " +
                      to_json(model).dump());
  }
}

std::vector<ForecastWindow> limited(const std::vector<ForecastWindow>& windows, int max_windows) {
  if (max_windows <= 0 || static_cast<std::size_t>(max_windows) >= windows.size()) return windows;
  return {windows.begin(), windows.begin() + max_windows};
}

std::string anchor_tag(TimePoint t) { return format_timestamp(t).substr(0, 10); }

int cmd_simulate(const Options& opt) {
  const RunConfig cfg = resolve_config(opt, "simulate");
  const fs::path dir = make_run_dir(opt, cfg, cfg.synthetic.seed);
  SyntheticGenerator gen(cfg.synthetic);
  const SyntheticCorpus corpus = gen.generate();
  write_sessions_csv(dir / "sessions.csv", corpus.sessions);
  write_weather_csv(dir / "weather.csv", corpus.weather);
  {
    std::ofstream out(dir / "days.csv");
    out.precision(17);
    out << "date,weekday,ev_count,mean_temperature_c\n";
    for (const SyntheticDay& d : corpus.days) {
      out << format_timestamp(TimePoint(d.date)).substr(0, 10) << ',' << d.weekday << ',' << d.ev_count << ','
          << d.mean_temperature << '\n';
    }
  }
  write_json(dir / "manifest.json", {{"seed", cfg.synthetic.seed},
                                     {"days", cfg.synthetic.days},
                                     {"start_date", cfg.synthetic.start_date},
                                     {"session_rows", corpus.sessions.size()},
                                     {"weather_rows", corpus.weather.size()},
                                     {"files", {"sessions.csv", "weather.csv", "days.csv"}},
                                     {"effective_config", to_json(cfg)}});
  log("wrote " + std::to_string(corpus.sessions.size()) + " sessions and " + std::to_string(corpus.weather.size()) +
      " weather rows to " + dir.string());
  std::cout << dir.string() << '\n';
  return kOk;
}

Dataset load_and_report(const RunConfig& cfg) {
  Dataset ds = load_dataset(cfg.data);
  log("windows: " + std::to_string(ds.windows.train.size()) + " train, " + std::to_string(ds.windows.test.size()) +
      " test, " + std::to_string(ds.dropped.size()) + " dropped (split " + format_timestamp(ds.split) + ")");
  for (const std::string& d : ds.dropped) log("  dropped " + d);
  return ds;
}

EpochCallback progress(const std::string& stage, int epochs) {
  const int every = std::max(1, epochs / 10);
  return [stage, every, epochs](const LossRecord& r) {
    if (r.epoch % every == 0 || r.epoch == epochs || r.epoch == 1) {
      std::ostringstream s;
      s << stage << " epoch " << r.epoch << "/" << epochs << " loss " << r.loss;
      log(s.str());
    }
  };
}

int cmd_train(const Options& opt) {
  const RunConfig cfg = resolve_config(opt, "train");
  const Dataset ds = load_and_report(cfg);
  const NormalizationStats stats = NormalizationStats::fit(ds.windows.train);
  const std::vector<TrainingSample> samples = make_samples(ds.windows.train, stats);
  const NoiseSchedule sched = NoiseSchedule::quadratic(cfg.schedule);
  Denoiser model(cfg.model_config(), cfg.model.seed);
  const fs::path dir = make_run_dir(opt, cfg, cfg.training.seed);
  const auto curve = pretrain(model, samples, sched, cfg.training, progress("pretrain", cfg.training.pretrain.epochs));
  write_loss_csv(dir / "loss.csv", curve);
  save_artifact(dir / "model.json", model, {"pretrained", cfg.schedule, cfg.data.window, stats, to_json(cfg)});
  write_json(dir / "config.json", to_json(cfg));
  std::cout << (dir / "model.json").string() << '\n';
  return kOk;
}

ModelArtifact require_artifact(const std::string& path, const char* command) {
  if (path.empty()) throw ConfigError(std::string(command) + " needs a trained artifact: pass --model PATH");
  if (!fs::exists(path)) throw ModelError("model artifact " + path + " does not exist");
  return load_artifact(path);
}

int cmd_finetune(const Options& opt) {
  ModelArtifact art = require_artifact(opt.models.empty() ? "" : opt.models.front(), "finetune");
  if (art.meta.stage != "pretrained") {
    throw ConfigError("finetune expects a pretrained artifact, got stage '" + art.meta.stage +
                      "'; pass the output of `train`");
  }
  const RunConfig cfg = resolve_config(opt, "finetune", &art.meta.effective_config);
  check_against_artifact(cfg, art.meta, art.model.config());
  const Dataset ds = load_and_report(cfg);
  std::vector<TrainingSample> samples = make_samples(ds.windows.train, art.meta.stats);
  const NoiseSchedule sched = NoiseSchedule::quadratic(cfg.schedule);
  const fs::path dir = make_run_dir(opt, cfg, cfg.training.seed);
  const auto curve = finetune(art.model, samples, sched, cfg.training, progress("finetune", cfg.training.finetune.epochs));
  write_loss_csv(dir / "loss_finetune.csv", curve);
  ArtifactMeta meta = art.meta;
  meta.stage = "finetuned";
  meta.effective_config = to_json(cfg);
  save_artifact(dir / "model_finetuned.json", art.model, meta);
  write_json(dir / "config.json", to_json(cfg));
  std::cout << (dir / "model_finetuned.json").string() << '\n';
  return kOk;
}

int cmd_forecast(const Options& opt) {
  const ModelArtifact art = require_artifact(opt.models.empty() ? "" : opt.models.front(), "forecast");
  const RunConfig cfg = resolve_config(opt, "forecast", &art.meta.effective_config);
  check_against_artifact(cfg, art.meta, art.model.config());
  const Dataset ds = load_and_report(cfg);
  const NoiseSchedule sched = NoiseSchedule::quadratic(cfg.schedule);
  const fs::path dir = make_run_dir(opt, cfg, cfg.sampler.seed);
  fs::create_directories(dir / "forecasts");
  const auto windows = limited(ds.windows.test, cfg.evaluation.max_windows);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const ForecastWindow& w = windows[i];
    const ForecastEnsemble ens =
        sample_ensemble(art.model, normalize_condition(w, art.meta.stats), sched, cfg.sampler, art.meta.stats, w.target);
    const std::string tag = anchor_tag(w.anchor);
    write_ensemble_csv(dir / "forecasts" / (tag + ".csv"), ens.trajectories);
    if (static_cast<int>(i) < cfg.evaluation.plot_windows) {
      write_band_svg(dir / "forecasts" / (tag + ".svg"), ens.quantiles, w.target, "forecast " + tag);
    }
  }
  write_json(dir / "config.json", to_json(cfg));
  log("wrote " + std::to_string(windows.size()) + " ensembles of " + std::to_string(cfg.sampler.ensemble_size) +
      " trajectories");
  std::cout << (dir / "forecasts").string() << '\n';
  return kOk;
}

std::string scale_suffix(double s) {
  std::ostringstream out;
  out << "@e" << s;
  return out.str();
}

int cmd_evaluate(const Options& opt) {
  if (opt.models.empty() && !opt.baseline) {
    throw ConfigError("evaluate needs at least one --model or --baseline");
  }
  std::vector<std::pair<std::string, ModelArtifact>> arts;
  for (const std::string& m : opt.models) arts.emplace_back(fs::path(m).stem().string(), require_artifact(m, "evaluate"));
  const json* base = arts.empty() ? nullptr : &arts.front().second.meta.effective_config;
  const RunConfig cfg = resolve_config(opt, "evaluate", base);
  for (const auto& [name, art] : arts) check_against_artifact(cfg, art.meta, art.model.config());

  const Dataset ds = load_and_report(cfg);
  const NoiseSchedule sched = NoiseSchedule::quadratic(cfg.schedule);
  const fs::path dir = make_run_dir(opt, cfg, cfg.sampler.seed);
  const auto test = limited(ds.windows.test, cfg.evaluation.max_windows);
  const int res = cfg.data.window.resolution_min;
  const json effective = to_json(cfg);

  std::vector<EvalReport> reports;
  const auto add = [&](const std::string& name, std::vector<SampleMetrics> rows) {
    reports.push_back(make_report(name, std::move(rows)));
    write_report_csv(dir / ("report_" + name + ".csv"), reports.back(), effective);
  };

  for (const auto& [name, art] : arts) {
    for (double scale : cfg.evaluation.ev_count_scales) {
      const std::string label = name + scale_suffix(scale);
      std::vector<SampleMetrics> rows, cumulative;
      for (std::size_t i = 0; i < test.size(); ++i) {
        const ForecastWindow w = scale_ev_count(test[i], scale);
        const ForecastEnsemble ens =
            sample_ensemble(art.model, normalize_condition(w, art.meta.stats), sched, cfg.sampler, art.meta.stats, w.target);
        const std::string tag = anchor_tag(w.anchor);
        rows.push_back(score_ensemble(tag, ens, w.target, res));
        if (cfg.evaluation.cumulative) {
          const std::vector<double> truth = cumulative_energy(w.target, res);
          cumulative.push_back(score_ensemble(tag, cumulative_view(ens, res), truth, res));
        }
        if (static_cast<int>(i) < cfg.evaluation.plot_windows) {
          write_band_svg(dir / ("band_" + label + "_" + tag + ".svg"), ens.quantiles, w.target, label + " " + tag);
        }
      }
      add(label, std::move(rows));
      if (cfg.evaluation.cumulative) add(label + "_cumulative", std::move(cumulative));
    }
  }

  if (cfg.evaluation.baseline) {
    const NormalizationStats stats = arts.empty() ? NormalizationStats::fit(ds.windows.train) : arts.front().second.meta.stats;
    const std::vector<double> clim = climatology(ds.windows.train);
    std::vector<SampleMetrics> rows;
    for (const ForecastWindow& w : test) rows.push_back(score_point(anchor_tag(w.anchor), clim, w.target, res));
    add("climatology", std::move(rows));

    QuantileRegressor qr(cfg.model_config(), cfg.model.seed);
    const auto samples = make_samples(ds.windows.train, stats);
    const auto curve = train_quantile_baseline(qr, samples, cfg.baseline, cfg.training.seed,
                                               progress("baseline", cfg.baseline.epochs));
    write_loss_csv(dir / "loss_baseline.csv", curve);
    for (double scale : cfg.evaluation.ev_count_scales) {
      std::vector<SampleMetrics> q_rows;
      for (const ForecastWindow& raw : test) {
        const ForecastWindow w = scale_ev_count(raw, scale);
        q_rows.push_back(
            score_quantiles(anchor_tag(w.anchor), predict_quantiles_kw(qr, normalize_condition(w, stats), stats), w.target, res));
      }
      add("quantile_regression" + scale_suffix(scale), std::move(q_rows));
    }
  }

  const std::string summary = format_summary(reports);
  {
    std::ofstream out(dir / "summary.txt");
    out << summary << "\nconfig: " << effective.dump() << '\n';
  }
  write_json(dir / "config.json", effective);
  std::cout << summary;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic EV charging load forecasting with conditional diffusion"};
  app.require_subcommand(1);
  Options opt;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "JSON run config");
    sub->add_option("--set", opt.sets, "Override a config key, e.g. --set training.pretrain.epochs=50");
    sub->add_option("--run-dir", opt.run_dir, "Output directory (default: <output_root>/<timestamp>_seed<seed>)");
    sub->add_option("--seed", opt.seed, "Seed (synthetic data for simulate; model, training and sampler otherwise)");
  };
  CLI::App* simulate = app.add_subcommand("simulate", "Write a synthetic sessions/weather corpus");
  CLI::App* train = app.add_subcommand("train", "Stage 1: epsilon-prediction pretraining");
  CLI::App* tune = app.add_subcommand("finetune", "Stage 2: median-deviation refinement of a pretrained model");
  CLI::App* forecast = app.add_subcommand("forecast", "Sample forecast ensembles for the test windows");
  CLI::App* evaluate = app.add_subcommand("evaluate", "Score models and baselines on the test windows");
  for (CLI::App* sub : {simulate, train, tune, forecast, evaluate}) common(sub);
  tune->add_option("--model", opt.models, "Pretrained artifact")->expected(1);
  forecast->add_option("--model", opt.models, "Trained artifact")->expected(1);
  evaluate->add_option("--model", opt.models, "Trained artifacts (repeatable)");
  for (CLI::App* sub : {tune, forecast, evaluate}) {
    sub->add_option("--horizon-observed", opt.observed, "Number of observed leading horizon steps (eta)");
  }
  evaluate->add_option("--ev-count-scale", opt.ev_scales, "EV count multipliers, e.g. 0.9 0.95 1 1.05 1.1");
  evaluate->add_flag("--cumulative", opt.cumulative, "Also score the cumulative-energy view");
  evaluate->add_flag("--baseline", opt.baseline, "Also score climatology and the quantile-regression baseline");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(opt);
    if (train->parsed()) return cmd_train(opt);
    if (tune->parsed()) return cmd_finetune(opt);
    if (forecast->parsed()) return cmd_forecast(opt);
    if (evaluate->parsed()) return cmd_evaluate(opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const DomainError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const ModelError& e) {
    std::cerr << "model error: " << e.what() << '\n';
    return kData;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << '\n';
    return kNumeric;
  } catch (const SamplingError& e) {
    std::cerr << "sampling error: " << e.what() << '\n';
    return kNumeric;
  }
  return kUsage;
}
