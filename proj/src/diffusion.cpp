#include "chargecast/diffusion.hpp"

#include "chargecast/errors.hpp"
#include "chargecast/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

namespace chargecast {

using nn::Graph;
using nn::Matrix;
using nn::Var;

namespace {

Matrix row_of(std::span<const double> v) {
  return Eigen::Map<const Matrix>(v.data(), 1, static_cast<Eigen::Index>(v.size()));
}

void check_same(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw ConfigError(std::string(what) + ": length mismatch");
}

void pin_prefix(std::vector<double>& x, std::span<const double> observed, int t, Rng& rng,
                const NoiseSchedule& sched) {
  if (observed.empty()) return;
  std::vector<double> noise(observed.size());
  fill_standard_normal(rng, noise);
  const std::vector<double> pinned = forward_perturb(observed, t, noise, sched);
  std::copy(pinned.begin(), pinned.end(), x.begin());
}

void run_trajectory(const StepPredictor& predictor, int horizon, const NoiseSchedule& sched, const SamplerConfig& cfg,
                    std::span<const double> observed, int n, Matrix& out) {
  Rng rng = make_substream(cfg.seed, static_cast<std::uint64_t>(n));
  const auto tau = static_cast<std::size_t>(horizon);
  std::vector<double> x(tau), eps_hat(tau), z(tau, 0.0);
  fill_standard_normal(rng, x);
  const int steps = sched.steps();
  pin_prefix(x, observed, steps, rng, sched);
  for (int t = steps; t >= 1; --t) {
    try {
      predictor(x, t, eps_hat);
    } catch (const ModelError& e) {
      throw SamplingError("sampler: denoiser failed at step t=" + std::to_string(t) + ": " + e.what());
    }
    if (t > 1) {
      fill_standard_normal(rng, z);
    } else {
      std::fill(z.begin(), z.end(), 0.0);
    }
    x = reverse_step(x, t, eps_hat, z, sched);
    if (!std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); })) {
      throw SamplingError("sampler: non-finite state at step t=" + std::to_string(t) + " (trajectory " +
                          std::to_string(n) + ")");
    }
    if (t > 1) pin_prefix(x, observed, t - 1, rng, sched);
  }
  std::copy(observed.begin(), observed.end(), x.begin());
  for (std::size_t j = 0; j < tau; ++j) out(n, static_cast<Eigen::Index>(j)) = x[j];
}

}  // namespace

std::vector<double> forward_perturb(std::span<const double> x0, int t, std::span<const double> eps,
                                    const NoiseSchedule& sched) {
  check_same(x0.size(), eps.size(), "forward_perturb");
  const double a = sched.alpha_bar(t);
  if (t < 1) throw DomainError("forward_perturb: step must be >= 1");
  const double s = std::sqrt(a);
  const double r = std::sqrt(1.0 - a);
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = s * x0[i] + r * eps[i];
  return out;
}

std::vector<double> reverse_step(std::span<const double> x_t, int t, std::span<const double> eps_hat,
                                 std::span<const double> z, const NoiseSchedule& sched) {
  check_same(x_t.size(), eps_hat.size(), "reverse_step");
  check_same(x_t.size(), z.size(), "reverse_step");
  const double beta = sched.beta(t);
  const double a = sched.alpha_bar(t);
  const double inv = 1.0 / std::sqrt(1.0 - beta);
  const double coef = a < 1.0 ? beta / std::sqrt(1.0 - a) : 0.0;
  const double sigma = std::sqrt(sched.beta_tilde(t));
  std::vector<double> out(x_t.size());
  for (std::size_t i = 0; i < x_t.size(); ++i) out[i] = inv * (x_t[i] - coef * eps_hat[i]) + sigma * z[i];
  return out;
}

void SamplerConfig::validate(int horizon) const {
  if (ensemble_size < 1) throw ConfigError("sampler: ensemble_size must be >= 1");
  if (observed_prefix < 0 || observed_prefix >= horizon) {
    throw ConfigError("sampler: observed_prefix must be in [0, " + std::to_string(horizon) + ")");
  }
  if (threads < 0) throw ConfigError("sampler: threads must be >= 0");
}

Matrix sample_trajectories(const StepPredictor& predictor, int horizon, const NoiseSchedule& sched,
                           const SamplerConfig& cfg, std::span<const double> observed) {
  cfg.validate(horizon);
  if (static_cast<int>(observed.size()) < cfg.observed_prefix) {
    throw DataError("sampler: " + std::to_string(cfg.observed_prefix) + " observed steps requested, " +
                    std::to_string(observed.size()) + " given");
  }
  observed = observed.first(static_cast<std::size_t>(cfg.observed_prefix));
  Matrix out(cfg.ensemble_size, horizon);
  int threads = cfg.threads == 0 ? static_cast<int>(std::max(1U, std::thread::hardware_concurrency())) : cfg.threads;
  threads = std::min(threads, cfg.ensemble_size);
  if (threads <= 1) {
    for (int n = 0; n < cfg.ensemble_size; ++n) run_trajectory(predictor, horizon, sched, cfg, observed, n, out);
    return out;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.ensemble_size));
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      for (int n = w; n < cfg.ensemble_size; n += threads) {
        try {
          run_trajectory(predictor, horizon, sched, cfg, observed, n, out);
        } catch (...) {
          errors[static_cast<std::size_t>(n)] = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

ForecastEnsemble sample_ensemble(const Denoiser& model, const ConditionSet& cond, const NoiseSchedule& sched,
                                 const SamplerConfig& cfg, const NormalizationStats& stats,
                                 std::span<const double> observed_kw) {
  const int tau = model.horizon();
  cfg.validate(tau);
  if (static_cast<int>(observed_kw.size()) < cfg.observed_prefix) {
    throw DataError("forecast: observed prefix shorter than eta=" + std::to_string(cfg.observed_prefix));
  }
  const auto prefix = observed_kw.first(static_cast<std::size_t>(cfg.observed_prefix));
  const std::vector<double> observed = normalize_load(prefix, stats);
  Matrix traj = sample_trajectories(model.bind(cond), tau, sched, cfg, observed);
  for (Eigen::Index n = 0; n < traj.rows(); ++n) {
    for (Eigen::Index j = 0; j < traj.cols(); ++j) {
      traj(n, j) = j < cfg.observed_prefix ? prefix[static_cast<std::size_t>(j)]
                                           : std::max(0.0, stats.load.denormalize(traj(n, j)));
    }
  }
  return ForecastEnsemble::from_trajectories(std::move(traj));
}

DiffusionDraw draw_diffusion_noise(std::uint64_t seed, std::uint64_t id, int horizon, const NoiseSchedule& sched) {
  Rng rng = make_substream(seed, id);
  DiffusionDraw d;
  d.t = std::uniform_int_distribution<int>(1, sched.steps())(rng);
  d.eps.resize(static_cast<std::size_t>(horizon));
  fill_standard_normal(rng, d.eps);
  return d;
}

double epsilon_loss(NoisePredictor& model, std::span<const TrainingSample> batch, const NoiseSchedule& sched,
                    std::uint64_t seed) {
  if (batch.empty()) throw ConfigError("epsilon_loss: empty batch");
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const TrainingSample& s : batch) {
    const DiffusionDraw d = draw_diffusion_noise(seed, s.id, model.horizon(), sched);
    Graph g;
    const Var x_t = g.constant(row_of(forward_perturb(s.target, d.t, d.eps, sched)));
    const Var pred = model.predict_noise(g, x_t, s.cond, d.t);
    const Var loss = nn::sum_squares(g, nn::sub(g, g.constant(row_of(d.eps)), pred));
    total += g.scalar(loss);
    g.backward(loss, inv_b);
  }
  return total * inv_b;
}

namespace {

std::vector<double> qdm_perturbed_median(std::span<const double> m0, std::span<const double> x_t, int t,
                                         std::span<const double> eps, const NoiseSchedule& sched, int prefix) {
  std::vector<double> m_t = forward_perturb(m0, t, eps, sched);
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(std::max(prefix, 0)), m_t.size());
  std::copy(x_t.begin(), x_t.begin() + static_cast<long>(n), m_t.begin());
  return m_t;
}

// Records both branches on `g`; returns (eps loss node or invalid, qdm node).
std::pair<Var, Var> record_losses(Graph& g, NoisePredictor& model, std::span<const double> x0,
                                  std::span<const double> m0, const ConditionSet& cond, int t,
                                  std::span<const double> eps, const NoiseSchedule& sched, const QdmOptions& opts) {
  const std::vector<double> x_t = forward_perturb(x0, t, eps, sched);
  const std::vector<double> m_t = qdm_perturbed_median(m0, x_t, t, eps, sched, opts.observed_prefix);
  const Var pred_x = model.predict_noise(g, g.constant(row_of(x_t)), cond, t);
  const Var eps_term = nn::sum_squares(g, nn::sub(g, g.constant(row_of(eps)), pred_x));
  const Var pred_m = model.predict_noise(g, g.constant(row_of(m_t)), cond, t);
  const Var target = opts.both_branches ? pred_x : g.constant(g.value(pred_x));
  return {eps_term, nn::sum_squares(g, nn::sub(g, pred_m, target))};
}

}  // namespace

double qdm_loss(NoisePredictor& model, std::span<const double> x0, std::span<const double> m0,
                const ConditionSet& cond, int t, std::span<const double> eps, const NoiseSchedule& sched,
                const QdmOptions& opts, double grad_weight) {
  check_same(x0.size(), m0.size(), "qdm_loss");
  check_same(x0.size(), eps.size(), "qdm_loss");
  Graph g;
  const auto [eps_term, qdm] = record_losses(g, model, x0, m0, cond, t, eps, sched, opts);
  (void)eps_term;
  const double value = g.scalar(qdm);
  if (grad_weight != 0.0) g.backward(qdm, grad_weight);
  return value;
}

FinetuneLoss finetune_loss(NoisePredictor& model, std::span<const TrainingSample> batch, const NoiseSchedule& sched,
                           std::uint64_t seed, double weight, const QdmOptions& opts) {
  if (batch.empty()) throw ConfigError("finetune_loss: empty batch");
  if (weight < 0.0) throw ConfigError("finetune_loss: QDM weight must be >= 0");
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  FinetuneLoss out;
  for (const TrainingSample& s : batch) {
    if (s.median.size() != s.target.size()) {
      throw ConfigError("finetune_loss: sample " + std::to_string(s.id) + " has no median");
    }
    const DiffusionDraw d = draw_diffusion_noise(seed, s.id, model.horizon(), sched);
    Graph g;
    const auto [eps_term, qdm] = record_losses(g, model, s.target, s.median, s.cond, d.t, d.eps, sched, opts);
    const Var total = nn::add(g, eps_term, nn::scale(g, qdm, weight));
    out.epsilon += g.scalar(eps_term);
    out.qdm += g.scalar(qdm);
    g.backward(total, inv_b);
  }
  out.epsilon *= inv_b;
  out.qdm *= inv_b;
  out.total = combine_losses(out.epsilon, out.qdm, weight);
  return out;
}

}  // namespace chargecast
