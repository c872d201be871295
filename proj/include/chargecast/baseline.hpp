#pragma once

#include "chargecast/data.hpp"
#include "chargecast/denoiser.hpp"
#include "chargecast/training.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace chargecast {

/// Condition encoder and forecast head of the denoiser, emitting one track
/// per level of kQuantileLevels instead of a noise estimate.
class QuantileRegressor {
 public:
  QuantileRegressor(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  /// levels x tau node in normalized units.
  nn::Var forward(nn::Graph& g, const ConditionSet& cond);
  /// Quantile tracks in normalized units; rows are not reordered.
  nn::Matrix predict(const ConditionSet& cond) const;
  std::vector<nn::ParamTensor*> parameters();

 private:
  ModelConfig cfg_;
  ConditionEncoder encoder_;
  ForecastHead head_;
};

/// Summed pinball loss over all levels and steps, Adam on every parameter.
std::vector<LossRecord> train_quantile_baseline(QuantileRegressor& model, std::span<const TrainingSample> samples,
                                                const StageConfig& stage, std::uint64_t seed,
                                                const EpochCallback& on_epoch = {});

/// Quantile tracks in kW, floored at 0.
nn::Matrix predict_quantiles_kw(const QuantileRegressor& model, const ConditionSet& cond,
                                const NormalizationStats& stats);

/// Per-step mean of the training targets, in kW.
std::vector<double> climatology(std::span<const ForecastWindow> train);

}  // namespace chargecast
