#pragma once

#include "chargecast/nn/graph.hpp"
#include "chargecast/nn/layers.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace chargecast {

/// Conditioning inputs of one forecast, all in normalized units.
struct ConditionSet {
  std::vector<double> history;      // past load, length omega
  std::vector<double> temperature;  // forecast over the horizon, length tau
  std::vector<double> humidity;     // forecast over the horizon, length tau
  std::array<double, 7> weekday{};  // one-hot, Monday = 0
  double ev_count = 0.0;

  /// Throws DataError on length mismatch or a malformed one-hot vector.
  void validate(int history_len, int horizon) const;
};

enum class Fusion {
  kCrossAttention,  // queries from the condition latent, keys/values from the perturbation latent
  kAddition,        // perturbation latent added onto the time-aligned condition tokens
};

struct ModelConfig {
  int history_len = 480;
  int horizon = 96;
  int hidden = 32;
  int heads = 4;
  int diffusion_steps = 200;
  bool use_covariates = true;
  Fusion fusion = Fusion::kCrossAttention;
  bool residual = true;  // attention blocks add their query input back

  /// Number of condition tokens: history + horizon steps, plus one static
  /// token for (weekday, EV count) when covariates are used.
  int condition_tokens() const { return history_len + horizon + (use_covariates ? 1 : 0); }
  void validate() const;
};

enum class Component { kPerturbationEncoder, kConditionEncoder, kCrossAttention, kForecastHead };

const char* component_name(Component c);
/// Parses "perturbation_encoder", "condition_encoder", "cross_attention" or
/// "forecast_head".
Component parse_component(const std::string& name);
inline constexpr std::array<Component, 4> kAllComponents{
    Component::kPerturbationEncoder, Component::kConditionEncoder, Component::kCrossAttention,
    Component::kForecastHead};

struct PerturbationEncoder {
  nn::Lstm lstm;
  nn::Linear step;
  nn::AttentionBlock fuse;
  std::vector<nn::ParamTensor*> parameters();
};

struct ConditionEncoder {
  nn::Lstm lstm;
  nn::Linear statics;  // unused (empty) without covariates
  nn::AttentionBlock fuse;
  std::vector<nn::ParamTensor*> parameters();
};

struct ForecastHead {
  nn::AttentionBlock mix;
  nn::Linear project;  // flattened tokens x hidden -> outputs
  std::vector<nn::ParamTensor*> parameters();
};

ConditionEncoder make_condition_encoder(const ModelConfig& cfg, Rng& rng);
ForecastHead make_forecast_head(const ModelConfig& cfg, int outputs, Rng& rng);

/// Per-step temporal features of the condition: history steps carry
/// (p, 0, 0, 0), horizon steps carry (0, u, v, 1). Without covariates only
/// the (p, flag) channels are kept.
nn::Matrix condition_sequence(const ConditionSet& cond, const ModelConfig& cfg);
/// Weekday one-hot followed by the EV count, as one row.
nn::Matrix static_features(const ConditionSet& cond);

/// Attention block applied to (query_source, kv_source), plus query_source
/// when `residual` is set.
template <class Block>
nn::Var attend(Block& block, nn::Graph& g, nn::Var query_source, nn::Var kv_source, bool residual) {
  const nn::Var out = block(g, query_source, kv_source);
  return residual ? nn::add(g, query_source, out) : out;
}

/// Runs the condition encoder: LSTM over the temporal features, linear map
/// of the static features, self-attention over the resulting tokens.
template <class Encoder>
nn::Var run_condition_encoder(Encoder& enc, nn::Graph& g, const ConditionSet& cond, const ModelConfig& cfg) {
  const nn::Var temporal = enc.lstm(g, g.constant(condition_sequence(cond, cfg)));
  nn::Var tokens = temporal;
  if (cfg.use_covariates) {
    const std::array<nn::Var, 2> parts{temporal, enc.statics(g, g.constant(static_features(cond)))};
    tokens = nn::concat_rows(g, parts);
  }
  return attend(enc.fuse, g, tokens, tokens, cfg.residual);
}

template <class Head>
nn::Var run_forecast_head(Head& head, nn::Graph& g, nn::Var tokens, const ModelConfig& cfg) {
  return head.project(g, nn::flatten(g, attend(head.mix, g, tokens, tokens, cfg.residual)));
}

/// Sinusoidal encoding of a diffusion step: sin(t w_i) in the first half,
/// cos(t w_i) in the second, w_i = 10000^(-i/half).
nn::Matrix sinusoidal_encoding(int t, int dim);

/// Evaluates epsilon for one (x_t, t) of a fixed condition; must be safe to
/// call concurrently.
using StepPredictor = std::function<void(std::span<const double> x_t, int t, std::span<double> eps_out)>;

/// Anything trainable with the diffusion losses.
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;
  /// x_t is a 1 x tau node; returns the 1 x tau predicted noise.
  virtual nn::Var predict_noise(nn::Graph& g, nn::Var x_t, const ConditionSet& cond, int t) = 0;
  /// Same function evaluated read-only, without recording a tape.
  virtual std::vector<double> predict(std::span<const double> x_t, const ConditionSet& cond, int t) const = 0;
  virtual int horizon() const = 0;
};

struct DenoiserParams {
  PerturbationEncoder perturbation;
  ConditionEncoder condition;
  std::optional<nn::AttentionBlock> cross;  // absent for additive fusion
  ForecastHead head;

  std::vector<nn::ParamTensor*> component(Component c);
  std::vector<nn::ParamTensor*> all();
  std::vector<const nn::ParamTensor*> all() const;
};

/// Conditional noise predictor eps_theta(x_t, p, r, t).
class Denoiser final : public NoisePredictor {
 public:
  Denoiser(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  DenoiserParams& params() { return params_; }
  const DenoiserParams& params() const { return params_; }
  int horizon() const override { return cfg_.horizon; }

  /// 1 x hidden embedding of step t in 1..diffusion_steps.
  nn::Var embed_step(nn::Graph& g, int t);
  nn::Var embed_step(nn::Graph& g, int t) const;
  /// tau x hidden latent of a 1 x tau perturbed profile.
  nn::Var encode_perturbation(nn::Graph& g, nn::Var x_t, int t);
  nn::Var encode_perturbation(nn::Graph& g, nn::Var x_t, int t) const;
  /// condition_tokens() x hidden latent.
  nn::Var encode_condition(nn::Graph& g, const ConditionSet& cond);
  nn::Var encode_condition(nn::Graph& g, const ConditionSet& cond) const;

  nn::Var predict_noise(nn::Graph& g, nn::Var x_t, const ConditionSet& cond, int t) override;
  std::vector<double> predict(std::span<const double> x_t, const ConditionSet& cond, int t) const override;

  /// Predictor for one condition with the condition latent computed once.
  StepPredictor bind(const ConditionSet& cond) const;

 private:
  template <class Self>
  static nn::Var embed_impl(Self& self, nn::Graph& g, int t);
  template <class Self>
  static nn::Var perturbation_impl(Self& self, nn::Graph& g, nn::Var x_t, int t);
  template <class Self>
  static nn::Var combine_impl(Self& self, nn::Graph& g, nn::Var condition_latent, nn::Var perturbation_latent);

  ModelConfig cfg_;
  DenoiserParams params_;
};

}  // namespace chargecast
