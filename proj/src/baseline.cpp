#include "chargecast/baseline.hpp"

#include "chargecast/errors.hpp"
#include "chargecast/evaluation.hpp"

#include <algorithm>

namespace chargecast {

using nn::Graph;
using nn::Matrix;
using nn::Var;

QuantileRegressor::QuantileRegressor(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng = make_substream(seed, 0xba5e);
  encoder_ = make_condition_encoder(cfg_, rng);
  head_ = make_forecast_head(cfg_, static_cast<int>(kQuantileLevels.size()) * cfg_.horizon, rng);
}

Var QuantileRegressor::forward(Graph& g, const ConditionSet& cond) {
  const Var tracks = run_forecast_head(head_, g, run_condition_encoder(encoder_, g, cond, cfg_), cfg_);
  return nn::reshape(g, tracks, static_cast<Eigen::Index>(kQuantileLevels.size()), cfg_.horizon);
}

Matrix QuantileRegressor::predict(const ConditionSet& cond) const {
  Graph g(Graph::Mode::kInference);
  const Var tracks = run_forecast_head(head_, g, run_condition_encoder(encoder_, g, cond, cfg_), cfg_);
  Matrix out = g.value(nn::reshape(g, tracks, static_cast<Eigen::Index>(kQuantileLevels.size()), cfg_.horizon));
  if (!out.allFinite()) throw ModelError("quantile baseline: non-finite output");
  return out;
}

std::vector<nn::ParamTensor*> QuantileRegressor::parameters() {
  std::vector<nn::ParamTensor*> out = encoder_.parameters();
  for (auto* p : head_.parameters()) out.push_back(p);
  return out;
}

std::vector<LossRecord> train_quantile_baseline(QuantileRegressor& model, std::span<const TrainingSample> samples,
                                                const StageConfig& stage, std::uint64_t seed,
                                                const EpochCallback& on_epoch) {
  std::vector<nn::ParamTensor*> params = model.parameters();
  return run_epochs(
      "baseline", stage, samples.size(), seed, params, params,
      [&](std::span<const std::size_t> idx, std::uint64_t) {
        const double inv_b = 1.0 / static_cast<double>(idx.size());
        double total = 0.0;
        for (std::size_t i : idx) {
          const TrainingSample& s = samples[i];
          Graph g;
          const Matrix truth = Eigen::Map<const Matrix>(s.target.data(), 1, static_cast<Eigen::Index>(s.target.size()));
          const Var loss = nn::pinball_sum(g, model.forward(g, s.cond), truth, kQuantileLevels);
          total += g.scalar(loss);
          g.backward(loss, inv_b);
        }
        return total * inv_b;
      },
      {}, on_epoch);
}

Matrix predict_quantiles_kw(const QuantileRegressor& model, const ConditionSet& cond,
                            const NormalizationStats& stats) {
  Matrix q = model.predict(cond);
  for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = std::max(0.0, stats.load.denormalize(q.data()[i]));
  return q;
}

std::vector<double> climatology(std::span<const ForecastWindow> train) {
  if (train.empty()) throw ConfigError("climatology: no training windows");
  std::vector<double> mean(train.front().target.size(), 0.0);
  for (const ForecastWindow& w : train) {
    if (w.target.size() != mean.size()) throw DataError("climatology: windows differ in horizon");
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += w.target[j];
  }
  for (double& m : mean) m /= static_cast<double>(train.size());
  return mean;
}

}  // namespace chargecast
