#pragma once

#include "chargecast/diffusion.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace chargecast {

struct StageConfig {
  int epochs = 0;
  double learning_rate = 1e-3;
  int batch_size = 16;

  void validate(const char* stage) const;
};

enum class MedianRefresh { kPerEpoch, kOnce };

struct TrainingConfig {
  StageConfig pretrain{200, 1e-3, 16};
  StageConfig finetune{100, 2e-4, 16};
  double qdm_weight = 1e-3;
  std::vector<Component> finetune_components{Component::kForecastHead};
  int finetune_ensemble = 16;
  bool qdm_both_branches = false;
  MedianRefresh median_refresh = MedianRefresh::kPerEpoch;
  int observed_prefix = 0;
  std::uint64_t seed = 1;
  int threads = 1;  // Stage 2 median sampling

  void validate(int horizon) const;
};

struct LossRecord {
  std::string stage;
  int epoch = 0;
  double loss = 0.0;
};

using EpochCallback = std::function<void(const LossRecord&)>;

/// Mini-batch loop shared by every stage: a seeded shuffle per epoch, one
/// Adam update of `trainable` per batch. `batch_loss` returns the batch loss
/// after accumulating its gradients; every parameter in `all` is cleared
/// after each update. Throws TrainingError naming the stage and epoch on a
/// non-finite loss.
std::vector<LossRecord> run_epochs(
    const std::string& stage, const StageConfig& cfg, std::size_t sample_count, std::uint64_t seed,
    std::span<nn::ParamTensor* const> trainable, std::span<nn::ParamTensor* const> all,
    const std::function<double(std::span<const std::size_t> indices, std::uint64_t stream)>& batch_loss,
    const std::function<void(int epoch)>& before_epoch = {}, const EpochCallback& on_epoch = {});

/// Stage 1: epsilon-prediction training of every parameter.
std::vector<LossRecord> pretrain(Denoiser& model, std::span<const TrainingSample> samples, const NoiseSchedule& sched,
                                 const TrainingConfig& cfg, const EpochCallback& on_epoch = {});

/// Per-step median (normalized) of an ensemble generated for one sample,
/// with the first eta target steps pinned.
std::vector<double> ensemble_median(const Denoiser& model, const TrainingSample& sample, const NoiseSchedule& sched,
                                    int members, std::uint64_t seed, int observed_prefix, int threads);

/// Stage 2: refreshes sample medians and refines the configured components
/// with the combined loss. Zero epochs leave the model untouched.
std::vector<LossRecord> finetune(Denoiser& model, std::vector<TrainingSample>& samples, const NoiseSchedule& sched,
                                 const TrainingConfig& cfg, const EpochCallback& on_epoch = {});

struct TrainForecastResult {
  std::vector<LossRecord> curve;
  std::vector<ForecastEnsemble> forecasts;  // one per test condition
};

/// Stage 1, Stage 2, then one ensemble per test condition (Stage 3).
TrainForecastResult train_and_forecast(Denoiser& model, std::vector<TrainingSample>& train,
                                       std::span<const ForecastWindow> test, const NoiseSchedule& sched,
                                       const TrainingConfig& cfg, const SamplerConfig& sampler,
                                       const NormalizationStats& stats);

/// CSV with header epoch,stage,loss.
void write_loss_csv(const std::filesystem::path& path, std::span<const LossRecord> records);

/// Normalizes windows into training samples with ids 0..n-1.
std::vector<TrainingSample> make_samples(std::span<const ForecastWindow> windows, const NormalizationStats& stats);

}  // namespace chargecast
