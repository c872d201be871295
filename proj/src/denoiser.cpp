#include "chargecast/denoiser.hpp"

#include "chargecast/errors.hpp"

#include <cmath>

namespace chargecast {

using nn::Graph;
using nn::Matrix;
using nn::Var;

void ConditionSet::validate(int history_len, int horizon) const {
  if (static_cast<int>(history.size()) != history_len) {
    throw DataError("condition: history has " + std::to_string(history.size()) + " steps, expected " +
                    std::to_string(history_len));
  }
  if (static_cast<int>(temperature.size()) != horizon || static_cast<int>(humidity.size()) != horizon) {
    throw DataError("condition: weather covariates must cover the " + std::to_string(horizon) + "-step horizon");
  }
  int ones = 0;
  for (double d : weekday) {
    if (d == 1.0) {
      ++ones;
    } else if (d != 0.0) {
      throw DataError("condition: weekday vector is not one-hot");
    }
  }
  if (ones != 1) throw DataError("condition: weekday vector is not one-hot");
}

void ModelConfig::validate() const {
  if (history_len < 1 || horizon < 1) throw ConfigError("model: history and horizon lengths must be positive");
  if (hidden < 1 || heads < 1 || hidden % heads != 0) {
    throw ConfigError("model: hidden dim " + std::to_string(hidden) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (diffusion_steps < 2) throw ConfigError("model: diffusion_steps must be >= 2");
}

const char* component_name(Component c) {
  switch (c) {
    case Component::kPerturbationEncoder: return "perturbation_encoder";
    case Component::kConditionEncoder: return "condition_encoder";
    case Component::kCrossAttention: return "cross_attention";
    case Component::kForecastHead: return "forecast_head";
  }
  return "unknown";
}

Component parse_component(const std::string& name) {
  for (Component c : kAllComponents) {
    if (name == component_name(c)) return c;
  }
  throw ConfigError("unknown model component '" + name + "'");
}

std::vector<nn::ParamTensor*> PerturbationEncoder::parameters() {
  std::vector<nn::ParamTensor*> out = lstm.parameters();
  for (auto* p : step.parameters()) out.push_back(p);
  for (auto* p : fuse.parameters()) out.push_back(p);
  return out;
}

std::vector<nn::ParamTensor*> ConditionEncoder::parameters() {
  std::vector<nn::ParamTensor*> out = lstm.parameters();
  if (statics.weight.size() > 0) {
    for (auto* p : statics.parameters()) out.push_back(p);
  }
  for (auto* p : fuse.parameters()) out.push_back(p);
  return out;
}

std::vector<nn::ParamTensor*> ForecastHead::parameters() {
  std::vector<nn::ParamTensor*> out = mix.parameters();
  for (auto* p : project.parameters()) out.push_back(p);
  return out;
}

ConditionEncoder make_condition_encoder(const ModelConfig& cfg, Rng& rng) {
  ConditionEncoder enc;
  enc.lstm = nn::Lstm("condition.lstm", cfg.use_covariates ? 4 : 2, cfg.hidden, rng);
  if (cfg.use_covariates) enc.statics = nn::Linear("condition.static", 8, cfg.hidden, rng);
  enc.fuse = nn::AttentionBlock("condition.self_attention", cfg.hidden, cfg.heads, rng);
  return enc;
}

ForecastHead make_forecast_head(const ModelConfig& cfg, int outputs, Rng& rng) {
  ForecastHead head;
  head.mix = nn::AttentionBlock("head.self_attention", cfg.hidden, cfg.heads, rng);
  head.project = nn::Linear("head.project", static_cast<Eigen::Index>(cfg.condition_tokens()) * cfg.hidden, outputs, rng);
  return head;
}

Matrix condition_sequence(const ConditionSet& cond, const ModelConfig& cfg) {
  cond.validate(cfg.history_len, cfg.horizon);
  const Eigen::Index steps = cfg.history_len + cfg.horizon;
  Matrix seq = Matrix::Zero(steps, cfg.use_covariates ? 4 : 2);
  for (int i = 0; i < cfg.history_len; ++i) seq(i, 0) = cond.history[static_cast<std::size_t>(i)];
  for (int j = 0; j < cfg.horizon; ++j) {
    const Eigen::Index row = cfg.history_len + j;
    if (cfg.use_covariates) {
      seq(row, 1) = cond.temperature[static_cast<std::size_t>(j)];
      seq(row, 2) = cond.humidity[static_cast<std::size_t>(j)];
      seq(row, 3) = 1.0;
    } else {
      seq(row, 1) = 1.0;
    }
  }
  return seq;
}

Matrix static_features(const ConditionSet& cond) {
  Matrix row(1, 8);
  for (int i = 0; i < 7; ++i) row(0, i) = cond.weekday[static_cast<std::size_t>(i)];
  row(0, 7) = cond.ev_count;
  return row;
}

Matrix sinusoidal_encoding(int t, int dim) {
  Matrix out = Matrix::Zero(1, dim);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(std::max(half, 1)));
    out(0, i) = std::sin(t * freq);
    out(0, half + i) = std::cos(t * freq);
  }
  return out;
}

std::vector<nn::ParamTensor*> DenoiserParams::component(Component c) {
  switch (c) {
    case Component::kPerturbationEncoder: return perturbation.parameters();
    case Component::kConditionEncoder: return condition.parameters();
    case Component::kCrossAttention: return cross ? cross->parameters() : std::vector<nn::ParamTensor*>{};
    case Component::kForecastHead: return head.parameters();
  }
  return {};
}

std::vector<nn::ParamTensor*> DenoiserParams::all() {
  std::vector<nn::ParamTensor*> out;
  for (Component c : kAllComponents) {
    for (auto* p : component(c)) out.push_back(p);
  }
  return out;
}

std::vector<const nn::ParamTensor*> DenoiserParams::all() const {
  auto mutable_list = const_cast<DenoiserParams*>(this)->all();
  return {mutable_list.begin(), mutable_list.end()};
}

Denoiser::Denoiser(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng = make_substream(seed, 0x5eed);
  params_.perturbation.lstm = nn::Lstm("perturbation.lstm", 1, cfg.hidden, rng);
  params_.perturbation.step = nn::Linear("perturbation.step", cfg.hidden, cfg.hidden, rng);
  params_.perturbation.fuse = nn::AttentionBlock("perturbation.self_attention", cfg.hidden, cfg.heads, rng);
  params_.condition = make_condition_encoder(cfg, rng);
  if (cfg.fusion == Fusion::kCrossAttention) {
    params_.cross = nn::AttentionBlock("cross_attention", cfg.hidden, cfg.heads, rng);
  }
  params_.head = make_forecast_head(cfg, cfg.horizon, rng);
}

template <class Self>
Var Denoiser::embed_impl(Self& self, Graph& g, int t) {
  if (t < 1 || t > self.cfg_.diffusion_steps) {
    throw DomainError("embed_step: step " + std::to_string(t) + " outside 1.." +
                      std::to_string(self.cfg_.diffusion_steps));
  }
  return self.params_.perturbation.step(g, g.constant(sinusoidal_encoding(t, self.cfg_.hidden)));
}

template <class Self>
Var Denoiser::perturbation_impl(Self& self, Graph& g, Var x_t, int t) {
  const Matrix& x = g.value(x_t);
  if (x.size() != self.cfg_.horizon) {
    throw ConfigError("denoiser: perturbed profile has " + std::to_string(x.size()) + " steps, expected " +
                      std::to_string(self.cfg_.horizon));
  }
  auto& enc = self.params_.perturbation;
  const Var seq = nn::reshape(g, x_t, self.cfg_.horizon, 1);
  const Var latent = nn::add_row(g, enc.lstm(g, seq), embed_impl(self, g, t));
  return attend(enc.fuse, g, latent, latent, self.cfg_.residual);
}

template <class Self>
Var Denoiser::combine_impl(Self& self, Graph& g, Var condition_latent, Var perturbation_latent) {
  const ModelConfig& cfg = self.cfg_;
  const auto aligned = [&] {
    // Horizon tokens of the condition latent are time-aligned with the
    // perturbation latent rows.
    const Eigen::Index tail = cfg.condition_tokens() - cfg.history_len - cfg.horizon;
    std::vector<Var> parts{g.constant(Matrix::Zero(cfg.history_len, cfg.hidden)), perturbation_latent};
    if (tail > 0) parts.push_back(g.constant(Matrix::Zero(tail, cfg.hidden)));
    return nn::add(g, condition_latent, nn::concat_rows(g, parts));
  };
  Var mixed;
  if (!self.params_.cross) {
    mixed = aligned();
  } else if (cfg.residual) {
    mixed = nn::add(g, aligned(), (*self.params_.cross)(g, condition_latent, perturbation_latent));
  } else {
    mixed = (*self.params_.cross)(g, condition_latent, perturbation_latent);
  }
  return run_forecast_head(self.params_.head, g, mixed, cfg);
}

Var Denoiser::embed_step(Graph& g, int t) { return embed_impl(*this, g, t); }
Var Denoiser::embed_step(Graph& g, int t) const { return embed_impl(*this, g, t); }
Var Denoiser::encode_perturbation(Graph& g, Var x_t, int t) { return perturbation_impl(*this, g, x_t, t); }
Var Denoiser::encode_perturbation(Graph& g, Var x_t, int t) const { return perturbation_impl(*this, g, x_t, t); }
Var Denoiser::encode_condition(Graph& g, const ConditionSet& cond) {
  return run_condition_encoder(params_.condition, g, cond, cfg_);
}
Var Denoiser::encode_condition(Graph& g, const ConditionSet& cond) const {
  return run_condition_encoder(params_.condition, g, cond, cfg_);
}

Var Denoiser::predict_noise(Graph& g, Var x_t, const ConditionSet& cond, int t) {
  const Var c = encode_condition(g, cond);
  const Var p = encode_perturbation(g, x_t, t);
  return combine_impl(*this, g, c, p);
}

namespace {

void check_finite(const Matrix& out, int t) {
  if (!out.allFinite()) throw ModelError("denoiser: non-finite output at step " + std::to_string(t));
}

}  // namespace

std::vector<double> Denoiser::predict(std::span<const double> x_t, const ConditionSet& cond, int t) const {
  Graph g(Graph::Mode::kInference);
  const Var x = g.constant(Eigen::Map<const Matrix>(x_t.data(), 1, static_cast<Eigen::Index>(x_t.size())));
  const Var c = encode_condition(g, cond);
  const Var out = combine_impl(*this, g, c, encode_perturbation(g, x, t));
  const Matrix& eps = g.value(out);
  check_finite(eps, t);
  return {eps.data(), eps.data() + eps.size()};
}

StepPredictor Denoiser::bind(const ConditionSet& cond) const {
  Matrix latent;
  {
    Graph g(Graph::Mode::kInference);
    latent = g.value(encode_condition(g, cond));
  }
  return [this, latent = std::move(latent)](std::span<const double> x_t, int t, std::span<double> eps_out) {
    Graph g(Graph::Mode::kInference);
    const Var x = g.constant(Eigen::Map<const Matrix>(x_t.data(), 1, static_cast<Eigen::Index>(x_t.size())));
    const Var c = g.constant(latent);
    const Matrix& eps = g.value(combine_impl(*this, g, c, encode_perturbation(g, x, t)));
    check_finite(eps, t);
    if (static_cast<Eigen::Index>(eps_out.size()) != eps.size()) throw ConfigError("denoiser: output span size");
    std::copy(eps.data(), eps.data() + eps.size(), eps_out.begin());
  };
}

}  // namespace chargecast
