#pragma once

#include "chargecast/data.hpp"
#include "chargecast/denoiser.hpp"
#include "chargecast/diffusion.hpp"
#include "chargecast/nn/graph.hpp"
#include "chargecast/nn/ops.hpp"
#include "chargecast/random.hpp"
#include "chargecast/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace testing {

using chargecast::Rng;
using chargecast::nn::Graph;
using chargecast::nn::Matrix;
using chargecast::nn::Var;

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

/// Analytic and numeric gradients agree if the gap is within `rel` of the
/// larger magnitude, or below `abs_floor` when both are essentially zero.
inline bool grads_agree(double analytic, double numeric, double rel = 1e-4, double abs_floor = 1e-8) {
  const double gap = std::abs(analytic - numeric);
  return gap <= rel * std::max(std::abs(analytic), std::abs(numeric)) || gap <= abs_floor;
}

/// Central difference of `f` with respect to the scalar `x`.
inline double central_difference(const std::function<double()>& f, double& x, double h = 1e-5) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * h);
}

/// Reduces any node to a scalar with fixed random weights: sum(W .* out).
inline Var weighted_sum(Graph& g, Var out, const Matrix& weights) {
  const Var flat = chargecast::nn::flatten(g, out);
  const Matrix w = Eigen::Map<const Matrix>(weights.data(), weights.size(), 1);
  return chargecast::nn::matmul(g, flat, g.constant(w));
}

using OpBuilder = std::function<Var(Graph&, const std::vector<Var>&)>;

struct OpCheck {
  int checked = 0;
  int failed = 0;
  double worst = 0.0;
};

/// Compares backprop against central differences on `points` random
/// coordinates of each input.
inline OpCheck check_op_gradients(const OpBuilder& build, std::vector<Matrix> inputs, Rng& rng, int points = 10) {
  Matrix weights;
  const auto forward = [&](Graph& g, std::vector<Var>& vars) {
    vars.clear();
    for (const Matrix& m : inputs) vars.push_back(g.variable(m));
    const Var out = build(g, vars);
    if (weights.size() == 0) weights = random_matrix(g.value(out).rows(), g.value(out).cols(), rng);
    return weighted_sum(g, out, weights);
  };
  Graph g;
  std::vector<Var> vars;
  const Var loss = forward(g, vars);
  g.backward(loss);
  std::vector<Matrix> analytic;
  for (const Var v : vars) analytic.push_back(g.grad(v));

  OpCheck result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    std::uniform_int_distribution<Eigen::Index> pick(0, inputs[k].size() - 1);
    for (int p = 0; p < points; ++p) {
      const Eigen::Index idx = pick(rng);
      const double numeric = central_difference(
          [&] {
            Graph h;
            std::vector<Var> hv;
            return h.scalar(forward(h, hv));
          },
          inputs[k].data()[idx]);
      const double a = analytic[k].size() ? analytic[k].data()[idx] : 0.0;
      ++result.checked;
      if (!grads_agree(a, numeric)) ++result.failed;
      result.worst = std::max(result.worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-12}));
    }
  }
  return result;
}

inline chargecast::ModelConfig tiny_model(int history = 16, int horizon = 8, int hidden = 8, int heads = 2,
                                          int steps = 10) {
  chargecast::ModelConfig cfg;
  cfg.history_len = history;
  cfg.horizon = horizon;
  cfg.hidden = hidden;
  cfg.heads = heads;
  cfg.diffusion_steps = steps;
  return cfg;
}

inline chargecast::ConditionSet random_condition(const chargecast::ModelConfig& cfg, Rng& rng, int weekday = 0) {
  std::normal_distribution<double> normal(0.0, 1.0);
  chargecast::ConditionSet c;
  c.history.resize(static_cast<std::size_t>(cfg.history_len));
  c.temperature.resize(static_cast<std::size_t>(cfg.horizon));
  c.humidity.resize(static_cast<std::size_t>(cfg.horizon));
  for (double& v : c.history) v = normal(rng);
  for (double& v : c.temperature) v = normal(rng);
  for (double& v : c.humidity) v = normal(rng);
  c.weekday[static_cast<std::size_t>(weekday)] = 1.0;
  c.ev_count = normal(rng);
  return c;
}

inline std::vector<double> random_vector(std::size_t n, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

/// Predicts zero noise everywhere.
class ZeroPredictor final : public chargecast::NoisePredictor {
 public:
  explicit ZeroPredictor(int horizon) : horizon_(horizon) {}
  Var predict_noise(Graph& g, Var, const chargecast::ConditionSet&, int) override {
    return g.constant(Matrix::Zero(1, horizon_));
  }
  std::vector<double> predict(std::span<const double>, const chargecast::ConditionSet&, int) const override {
    return std::vector<double>(static_cast<std::size_t>(horizon_), 0.0);
  }
  int horizon() const override { return horizon_; }

 private:
  int horizon_;
};

/// Knows the clean profile and recovers the injected noise exactly (up to
/// rounding) from x_t.
class OraclePredictor final : public chargecast::NoisePredictor {
 public:
  OraclePredictor(std::vector<double> x0, const chargecast::NoiseSchedule& sched) : x0_(std::move(x0)), sched_(sched) {}
  Var predict_noise(Graph& g, Var x_t, const chargecast::ConditionSet& c, int t) override {
    const Matrix& x = g.value(x_t);
    const std::vector<double> eps = predict(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())), c, t);
    return g.constant(Eigen::Map<const Matrix>(eps.data(), 1, static_cast<Eigen::Index>(eps.size())));
  }
  std::vector<double> predict(std::span<const double> x_t, const chargecast::ConditionSet&, int t) const override {
    const double a = sched_.alpha_bar(t);
    std::vector<double> eps(x_t.size());
    for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = (x_t[i] - std::sqrt(a) * x0_[i]) / std::sqrt(1.0 - a);
    return eps;
  }
  int horizon() const override { return static_cast<int>(x0_.size()); }

 private:
  std::vector<double> x0_;
  const chargecast::NoiseSchedule& sched_;
};

}  // namespace testing
