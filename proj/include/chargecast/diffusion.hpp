#pragma once

#include "chargecast/data.hpp"
#include "chargecast/denoiser.hpp"
#include "chargecast/evaluation.hpp"
#include "chargecast/schedule.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace chargecast {

/// sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps.
std::vector<double> forward_perturb(std::span<const double> x0, int t, std::span<const double> eps,
                                    const NoiseSchedule& sched);

/// One ancestral step x_t -> x_{t-1}:
/// (x_t - beta_t / sqrt(1 - alpha_bar_t) eps_hat) / sqrt(1 - beta_t) + sqrt(beta_tilde_t) z.
std::vector<double> reverse_step(std::span<const double> x_t, int t, std::span<const double> eps_hat,
                                 std::span<const double> z, const NoiseSchedule& sched);

struct SamplerConfig {
  int ensemble_size = 1000;
  std::uint64_t seed = 0;
  int observed_prefix = 0;  // eta
  int threads = 1;          // 0 uses every hardware thread

  void validate(int horizon) const;
};

/// Runs the reverse process for every trajectory in normalized units.
///
/// Trajectory n draws from substream (seed, n), so the result does not depend
/// on the thread count. With eta > 0 the first eta entries of each
/// intermediate x_t are replaced by a fresh forward perturbation of
/// `observed` at step t, and set to `observed` exactly at the end.
/// Throws SamplingError naming the step at which a state became non-finite.
nn::Matrix sample_trajectories(const StepPredictor& predictor, int horizon, const NoiseSchedule& sched,
                               const SamplerConfig& cfg, std::span<const double> observed = {});

/// Ensemble in kW for one window: samples, denormalizes, floors at 0 kW and
/// restores the observed prefix exactly. `observed_kw` holds at least eta
/// values of the target.
ForecastEnsemble sample_ensemble(const Denoiser& model, const ConditionSet& cond, const NoiseSchedule& sched,
                                 const SamplerConfig& cfg, const NormalizationStats& stats,
                                 std::span<const double> observed_kw = {});

/// One window in normalized units as consumed by the training losses.
struct TrainingSample {
  std::uint64_t id = 0;
  ConditionSet cond;
  std::vector<double> target;
  std::vector<double> median;  // Stage 2 only
};

/// Draws t ~ U{1..T} and then eps for sample `id` from substream (seed, id).
struct DiffusionDraw {
  int t = 1;
  std::vector<double> eps;
};
DiffusionDraw draw_diffusion_noise(std::uint64_t seed, std::uint64_t id, int horizon, const NoiseSchedule& sched);

/// Mean over the batch of ||eps - eps_theta(x_t, c, t)||^2. Gradients of the
/// mean are accumulated into the model parameters.
double epsilon_loss(NoisePredictor& model, std::span<const TrainingSample> batch, const NoiseSchedule& sched,
                    std::uint64_t seed);

struct QdmOptions {
  bool both_branches = false;  // otherwise eps_theta(x_t) is a detached target
  int observed_prefix = 0;     // m_t takes the first eta entries of x_t
};

/// ||eps_theta(m_t, c, t) - eps_theta(x_t, c, t)||^2 with m0 and x0 perturbed
/// by the same (t, eps). Gradients scaled by `grad_weight` are accumulated;
/// pass 0 to only evaluate.
double qdm_loss(NoisePredictor& model, std::span<const double> x0, std::span<const double> m0,
                const ConditionSet& cond, int t, std::span<const double> eps, const NoiseSchedule& sched,
                const QdmOptions& opts = {}, double grad_weight = 1.0);

inline double combine_losses(double eps_loss, double qdm, double weight) { return eps_loss + weight * qdm; }

struct FinetuneLoss {
  double epsilon = 0.0;
  double qdm = 0.0;
  double total = 0.0;
};

/// Batch mean of eps-loss + weight * QDM loss, both terms using the same
/// (t, eps) draw per sample as epsilon_loss would. Requires sample medians.
FinetuneLoss finetune_loss(NoisePredictor& model, std::span<const TrainingSample> batch, const NoiseSchedule& sched,
                           std::uint64_t seed, double weight, const QdmOptions& opts = {});

}  // namespace chargecast
