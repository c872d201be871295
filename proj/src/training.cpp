#include "chargecast/training.hpp"

#include "chargecast/errors.hpp"
#include "chargecast/nn/adam.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace chargecast {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5u;
constexpr std::uint64_t kLossStream = 0x1055u;
constexpr std::uint64_t kMedianStream = 0x3ed1u;

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  return x;
}

std::uint64_t stage_seed(std::uint64_t seed, const std::string& stage) {
  std::uint64_t h = seed;
  for (char c : stage) h = mix(h, static_cast<unsigned char>(c));
  return h;
}

}  // namespace

void StageConfig::validate(const char* stage) const {
  if (epochs < 0) throw ConfigError(std::string(stage) + ": epochs must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError(std::string(stage) + ": learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError(std::string(stage) + ": batch_size must be >= 1");
}

void TrainingConfig::validate(int horizon) const {
  pretrain.validate("pretrain");
  finetune.validate("finetune");
  if (qdm_weight < 0.0) throw ConfigError("training: qdm_weight must be >= 0");
  if (finetune_ensemble < 1) throw ConfigError("training: finetune_ensemble must be >= 1");
  if (observed_prefix < 0 || observed_prefix >= horizon) {
    throw ConfigError("training: observed_prefix must be in [0, horizon)");
  }
  if (threads < 0) throw ConfigError("training: threads must be >= 0");
}

std::vector<LossRecord> run_epochs(
    const std::string& stage, const StageConfig& cfg, std::size_t sample_count, std::uint64_t seed,
    std::span<nn::ParamTensor* const> trainable, std::span<nn::ParamTensor* const> all,
    const std::function<double(std::span<const std::size_t>, std::uint64_t)>& batch_loss,
    const std::function<void(int)>& before_epoch, const EpochCallback& on_epoch) {
  cfg.validate(stage.c_str());
  std::vector<LossRecord> curve;
  if (cfg.epochs == 0) return curve;
  if (sample_count == 0) throw ConfigError(stage + ": no training samples");
  nn::AdamState adam(nn::AdamConfig{cfg.learning_rate});
  const std::uint64_t base = stage_seed(seed, stage);
  std::vector<std::size_t> order(sample_count);
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  nn::zero_grads(all);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (before_epoch) before_epoch(epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = make_substream(mix(base, kShuffleStream), static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double weighted = 0.0;
    for (std::size_t start = 0, b = 0; start < sample_count; start += batch, ++b) {
      const std::size_t count = std::min(batch, sample_count - start);
      const std::span<const std::size_t> idx(order.data() + start, count);
      const double loss = batch_loss(idx, mix(mix(base, kLossStream), (static_cast<std::uint64_t>(epoch) << 32) | b));
      if (!std::isfinite(loss)) {
        throw TrainingError(stage + ": non-finite loss at epoch " + std::to_string(epoch));
      }
      try {
        nn::adam_step(trainable, adam);
      } catch (const TrainingError& e) {
        throw TrainingError(stage + " epoch " + std::to_string(epoch) + ": " + e.what());
      }
      nn::zero_grads(all);
      weighted += loss * static_cast<double>(count);
    }
    LossRecord rec{stage, epoch, weighted / static_cast<double>(sample_count)};
    curve.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return curve;
}

std::vector<LossRecord> pretrain(Denoiser& model, std::span<const TrainingSample> samples, const NoiseSchedule& sched,
                                 const TrainingConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate(model.horizon());
  std::vector<nn::ParamTensor*> params = model.params().all();
  std::vector<TrainingSample> batch;
  return run_epochs(
      "pretrain", cfg.pretrain, samples.size(), cfg.seed, params, params,
      [&](std::span<const std::size_t> idx, std::uint64_t stream) {
        batch.clear();
        for (std::size_t i : idx) batch.push_back(samples[i]);
        return epsilon_loss(model, batch, sched, stream);
      },
      {}, on_epoch);
}

std::vector<double> ensemble_median(const Denoiser& model, const TrainingSample& sample, const NoiseSchedule& sched,
                                    int members, std::uint64_t seed, int observed_prefix, int threads) {
  SamplerConfig sc;
  sc.ensemble_size = members;
  sc.seed = seed;
  sc.observed_prefix = observed_prefix;
  sc.threads = threads;
  const nn::Matrix traj = sample_trajectories(model.bind(sample.cond), model.horizon(), sched, sc, sample.target);
  std::vector<double> median(static_cast<std::size_t>(traj.cols()));
  std::vector<double> column(static_cast<std::size_t>(traj.rows()));
  for (Eigen::Index j = 0; j < traj.cols(); ++j) {
    for (Eigen::Index n = 0; n < traj.rows(); ++n) column[static_cast<std::size_t>(n)] = traj(n, j);
    median[static_cast<std::size_t>(j)] = quantile(column, 0.5);
  }
  return median;
}

std::vector<LossRecord> finetune(Denoiser& model, std::vector<TrainingSample>& samples, const NoiseSchedule& sched,
                                 const TrainingConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate(model.horizon());
  std::vector<nn::ParamTensor*> all = model.params().all();
  std::vector<nn::ParamTensor*> trainable;
  for (Component c : kAllComponents) {
    if (std::find(cfg.finetune_components.begin(), cfg.finetune_components.end(), c) == cfg.finetune_components.end()) {
      continue;
    }
    for (auto* p : model.params().component(c)) trainable.push_back(p);
  }
  if (cfg.finetune.epochs > 0 && trainable.empty()) throw ConfigError("finetune: no trainable components selected");

  const std::uint64_t median_seed = mix(stage_seed(cfg.seed, "finetune"), kMedianStream);
  const auto refresh = [&](int epoch) {
    if (cfg.median_refresh == MedianRefresh::kOnce && epoch > 1) return;
    for (TrainingSample& s : samples) {
      s.median = ensemble_median(model, s, sched, cfg.finetune_ensemble,
                                 mix(median_seed, (static_cast<std::uint64_t>(epoch) << 32) ^ s.id),
                                 cfg.observed_prefix, cfg.threads);
    }
  };
  const QdmOptions opts{cfg.qdm_both_branches, cfg.observed_prefix};
  std::vector<TrainingSample> batch;
  return run_epochs(
      "finetune", cfg.finetune, samples.size(), cfg.seed, trainable, all,
      [&](std::span<const std::size_t> idx, std::uint64_t stream) {
        batch.clear();
        for (std::size_t i : idx) batch.push_back(samples[i]);
        return finetune_loss(model, batch, sched, stream, cfg.qdm_weight, opts).total;
      },
      refresh, on_epoch);
}

TrainForecastResult train_and_forecast(Denoiser& model, std::vector<TrainingSample>& train,
                                       std::span<const ForecastWindow> test, const NoiseSchedule& sched,
                                       const TrainingConfig& cfg, const SamplerConfig& sampler,
                                       const NormalizationStats& stats) {
  TrainForecastResult result;
  result.curve = pretrain(model, train, sched, cfg);
  const auto tuned = finetune(model, train, sched, cfg);
  result.curve.insert(result.curve.end(), tuned.begin(), tuned.end());
  for (const ForecastWindow& w : test) {
    result.forecasts.push_back(sample_ensemble(model, normalize_condition(w, stats), sched, sampler, stats, w.target));
  }
  return result;
}

void write_loss_csv(const std::filesystem::path& path, std::span<const LossRecord> records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "epoch,stage,loss\n";
  for (const LossRecord& r : records) out << r.epoch << ',' << r.stage << ',' << r.loss << '\n';
}

std::vector<TrainingSample> make_samples(std::span<const ForecastWindow> windows, const NormalizationStats& stats) {
  std::vector<TrainingSample> out;
  out.reserve(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    TrainingSample s;
    s.id = i;
    s.cond = normalize_condition(windows[i], stats);
    s.target = normalize_load(windows[i].target, stats);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace chargecast
