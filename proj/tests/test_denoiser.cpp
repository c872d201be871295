#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "chargecast/artifact.hpp"
#include "chargecast/errors.hpp"
#include "support.hpp"

#include <filesystem>
#include <fstream>
#include <set>

using namespace chargecast;
using nn::Graph;
using nn::Matrix;
using nn::Var;

namespace {

Matrix predict_row(const Denoiser& m, std::span<const double> x, const ConditionSet& c, int t) {
  const std::vector<double> v = m.predict(x, c, t);
  return Eigen::Map<const Matrix>(v.data(), 1, static_cast<Eigen::Index>(v.size()));
}

double gap(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "chargecast_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("output has the horizon shape for every configuration") {
  Rng rng(1);
  for (Fusion fusion : {Fusion::kCrossAttention, Fusion::kAddition}) {
    for (bool cov : {true, false}) {
      for (bool residual : {true, false}) {
        ModelConfig cfg = testing::tiny_model(12, 6, 8, 2, 10);
        cfg.fusion = fusion;
        cfg.use_covariates = cov;
        cfg.residual = residual;
        Denoiser m(cfg, 2);
        const ConditionSet c = testing::random_condition(cfg, rng);
        Graph g;
        const Var x = g.constant(testing::random_matrix(1, 6, rng));
        CHECK(g.value(m.encode_condition(g, c)).rows() == cfg.condition_tokens());
        CHECK(g.value(m.encode_condition(g, c)).cols() == 8);
        CHECK(g.value(m.encode_perturbation(g, x, 3)).rows() == 6);
        const Matrix& out = g.value(m.predict_noise(g, x, c, 3));
        CHECK(out.rows() == 1);
        CHECK(out.cols() == 6);
      }
    }
  }
}

TEST_CASE("invalid model configurations and inputs are rejected") {
  ModelConfig cfg = testing::tiny_model();
  cfg.heads = 3;
  CHECK_THROWS_AS(Denoiser(cfg, 1), ConfigError);
  cfg = testing::tiny_model();
  Denoiser m(cfg, 1);
  Rng rng(2);
  ConditionSet c = testing::random_condition(cfg, rng);
  const std::vector<double> short_x(5, 0.0), x(8, 0.0);
  CHECK_THROWS_AS(m.predict(short_x, c, 1), ConfigError);
  CHECK_THROWS_AS(m.predict(x, c, 0), DomainError);
  CHECK_THROWS_AS(m.predict(x, c, 11), DomainError);
  c.weekday[3] = 1.0;
  CHECK_THROWS_AS(m.predict(x, c, 1), DataError);
  c = testing::random_condition(cfg, rng);
  c.history.pop_back();
  CHECK_THROWS_AS(m.predict(x, c, 1), DataError);
  CHECK_THROWS_AS(parse_component("decoder"), ConfigError);
  for (Component comp : kAllComponents) CHECK(parse_component(component_name(comp)) == comp);
}

TEST_CASE("output responds to every conditioning input") {
  Rng rng(3);
  const ModelConfig cfg = testing::tiny_model();
  Denoiser m(cfg, 4);
  const ConditionSet c = testing::random_condition(cfg, rng, 2);
  const std::vector<double> x = testing::random_vector(8, rng);
  const Matrix base = predict_row(m, x, c, 5);

  ConditionSet h = c;
  h.history[3] += 1.0;
  CHECK(gap(base, predict_row(m, x, h, 5)) > 1e-8);
  ConditionSet u = c;
  u.temperature[1] += 1.0;
  CHECK(gap(base, predict_row(m, x, u, 5)) > 1e-8);
  ConditionSet v = c;
  v.humidity[6] += 1.0;
  CHECK(gap(base, predict_row(m, x, v, 5)) > 1e-8);
  ConditionSet e = c;
  e.ev_count += 1.0;
  CHECK(gap(base, predict_row(m, x, e, 5)) > 1e-8);
  std::vector<double> x2 = x;
  x2[0] += 1.0;
  CHECK(gap(base, predict_row(m, x2, c, 5)) > 1e-8);
  CHECK(gap(base, predict_row(m, x, c, 6)) > 1e-8);
  for (int day = 0; day < 7; ++day) {
    if (day == 2) continue;
    ConditionSet w = c;
    w.weekday = {};
    w.weekday[static_cast<std::size_t>(day)] = 1.0;
    CHECK(gap(base, predict_row(m, x, w, 5)) > 1e-8);
  }
}

TEST_CASE("without covariates only the load history conditions the output") {
  Rng rng(5);
  ModelConfig cfg = testing::tiny_model();
  cfg.use_covariates = false;
  Denoiser m(cfg, 6);
  const ConditionSet c = testing::random_condition(cfg, rng, 1);
  const std::vector<double> x = testing::random_vector(8, rng);
  const Matrix base = predict_row(m, x, c, 4);
  ConditionSet other = testing::random_condition(cfg, rng, 5);
  other.history = c.history;
  CHECK(predict_row(m, x, other, 4) == base);
  other.history[0] += 0.5;
  CHECK(gap(base, predict_row(m, x, other, 4)) > 1e-8);
}

TEST_CASE("prediction composes the encoders, fusion and head") {
  Rng rng(7);
  for (Fusion fusion : {Fusion::kCrossAttention, Fusion::kAddition}) {
    ModelConfig cfg = testing::tiny_model();
    cfg.fusion = fusion;
    Denoiser m(cfg, 8);
    const ConditionSet c = testing::random_condition(cfg, rng, 4);
    const Matrix xm = testing::random_matrix(1, 8, rng);
    Graph g;
    const Var x = g.constant(xm);
    const Var cl = m.encode_condition(g, c);
    const Var pl = m.encode_perturbation(g, x, 7);
    const Matrix padded = [&] {
      Matrix p = Matrix::Zero(cfg.condition_tokens(), cfg.hidden);
      p.block(cfg.history_len, 0, cfg.horizon, cfg.hidden) = g.value(pl);
      return p;
    }();
    Var mixed = nn::add(g, cl, g.constant(padded));
    if (fusion == Fusion::kCrossAttention) mixed = nn::add(g, mixed, (*m.params().cross)(g, cl, pl));
    const Matrix expect = g.value(run_forecast_head(m.params().head, g, mixed, cfg));
    CHECK(gap(expect, g.value(m.predict_noise(g, x, c, 7))) < 1e-13);

    const std::span<const double> xs(xm.data(), 8);
    CHECK(gap(expect, predict_row(m, xs, c, 7)) < 1e-13);
    std::vector<double> bound(8);
    m.bind(c)(xs, 7, bound);
    CHECK(gap(expect, Eigen::Map<const Matrix>(bound.data(), 1, 8)) < 1e-13);
  }
}

TEST_CASE("step embedding is a linear map of the sinusoidal code") {
  const ModelConfig cfg = testing::tiny_model();
  Denoiser m(cfg, 9);
  const Matrix e1 = sinusoidal_encoding(1, 8);
  CHECK(e1(0, 0) == doctest::Approx(std::sin(1.0)));
  CHECK(e1(0, 4) == doctest::Approx(std::cos(1.0)));
  CHECK(e1(0, 3) == doctest::Approx(std::sin(std::pow(10000.0, -0.75))));
  for (int t = 1; t <= 10; ++t) {
    const Matrix code = sinusoidal_encoding(t, 8);
    for (int i = 0; i < 4; ++i) CHECK(code(0, i) * code(0, i) + code(0, 4 + i) * code(0, 4 + i) == doctest::Approx(1.0));
  }
  std::set<std::vector<double>> distinct;
  for (int t = 1; t <= 10; ++t) {
    Graph g;
    const Matrix& e = g.value(m.embed_step(g, t));
    const auto& lin = m.params().perturbation.step;
    const Matrix expect = sinusoidal_encoding(t, 8) * lin.weight.value.transpose() + lin.bias.value;
    CHECK(gap(e, expect) < 1e-14);
    distinct.insert(std::vector<double>(e.data(), e.data() + e.size()));
  }
  CHECK(distinct.size() == 10);
  Graph g;
  CHECK_THROWS_AS(m.embed_step(g, 0), DomainError);
}

TEST_CASE("components partition the parameters") {
  for (Fusion fusion : {Fusion::kCrossAttention, Fusion::kAddition}) {
    ModelConfig cfg = testing::tiny_model();
    cfg.fusion = fusion;
    Denoiser m(cfg, 10);
    std::set<nn::ParamTensor*> seen;
    std::size_t total = 0;
    for (Component c : kAllComponents) {
      for (nn::ParamTensor* p : m.params().component(c)) {
        CHECK(seen.insert(p).second);
        ++total;
      }
    }
    const auto all = m.params().all();
    CHECK(all.size() == total);
    CHECK(std::set<nn::ParamTensor*>(all.begin(), all.end()) == seen);
    CHECK(m.params().component(Component::kCrossAttention).empty() == (fusion == Fusion::kAddition));
    std::set<std::string> names;
    for (nn::ParamTensor* p : all) CHECK(names.insert(p->name).second);
  }
}

TEST_CASE("end-to-end gradients match finite differences") {
  Rng rng(11);
  for (Fusion fusion : {Fusion::kCrossAttention, Fusion::kAddition}) {
    ModelConfig cfg = testing::tiny_model(16, 8, 8, 2, 10);
    cfg.fusion = fusion;
    Denoiser m(cfg, 12);
    const ConditionSet c = testing::random_condition(cfg, rng, 6);
    const Matrix x = testing::random_matrix(1, 8, rng);
    const Matrix w = testing::random_matrix(1, 8, rng);
    const auto objective = [&] {
      Graph g(Graph::Mode::kInference);
      return g.scalar(testing::weighted_sum(g, m.predict_noise(g, g.constant(x), c, 4), w));
    };
    const auto all = m.params().all();
    for (nn::ParamTensor* p : all) p->zero_grad();
    {
      Graph g;
      g.backward(testing::weighted_sum(g, m.predict_noise(g, g.constant(x), c, 4), w));
    }
    int checked = 0, failed = 0;
    for (nn::ParamTensor* p : all) {
      std::uniform_int_distribution<Eigen::Index> pick(0, p->size() - 1);
      const Eigen::Index i = pick(rng);
      const double numeric = testing::central_difference(objective, p->value.data()[i]);
      if (!testing::grads_agree(p->grad.data()[i], numeric, 1e-4, 1e-8)) {
        ++failed;
        MESSAGE(p->name << "[" << i << "] analytic " << p->grad.data()[i] << " numeric " << numeric);
      }
      ++checked;
    }
    CHECK(checked >= 20);
    CHECK(failed == 0);
  }
}

TEST_CASE("seeded initialization is reproducible") {
  const ModelConfig cfg = testing::tiny_model();
  Denoiser a(cfg, 13), b(cfg, 13), c(cfg, 14);
  const auto pa = a.params().all(), pb = b.params().all(), pc = c.params().all();
  bool any_diff = false;
  for (std::size_t k = 0; k < pa.size(); ++k) {
    CHECK(pa[k]->value == pb[k]->value);
    any_diff = any_diff || pa[k]->value != pc[k]->value;
  }
  CHECK(any_diff);
}

TEST_CASE("artifact round trip is bit-identical") {
  Rng rng(15);
  ModelConfig cfg = testing::tiny_model();
  Denoiser m(cfg, 16);
  ArtifactMeta meta;
  meta.stage = "pretrained";
  meta.schedule = {10, 1e-4, 0.5};
  meta.window = {60, 16, 8};
  meta.stats.load = {12.345678901234567, 3.3};
  meta.stats.temperature = {15.1, 4.2};
  meta.stats.humidity = {60.0, 9.1};
  meta.stats.ev_count = {25.0, 7.7};
  const auto path = temp_file("roundtrip.json");
  save_artifact(path, m, meta);
  const ModelArtifact loaded = load_artifact(path);
  CHECK(loaded.meta.stage == "pretrained");
  CHECK(loaded.meta.stats.load.mean == meta.stats.load.mean);
  CHECK(loaded.meta.window.history_steps == 16);
  const auto before = m.params().all();
  const auto after = loaded.model.params().all();
  REQUIRE(before.size() == after.size());
  for (std::size_t k = 0; k < before.size(); ++k) {
    CHECK(before[k]->name == after[k]->name);
    CHECK(before[k]->value == after[k]->value);
  }
  const ConditionSet c = testing::random_condition(cfg, rng);
  const std::vector<double> x = testing::random_vector(8, rng);
  CHECK(m.predict(x, c, 3) == loaded.model.predict(x, c, 3));
}

TEST_CASE("corrupt artifacts raise model errors") {
  ModelConfig cfg = testing::tiny_model();
  Denoiser m(cfg, 17);
  ArtifactMeta meta;
  meta.stage = "pretrained";
  meta.schedule = {10, 1e-4, 0.5};
  meta.window = {60, 16, 8};
  const auto path = temp_file("corrupt.json");
  save_artifact(path, m, meta);
  nlohmann::json doc;
  {
    std::ifstream in(path);
    in >> doc;
  }
  const auto write_variant = [&](const std::function<void(nlohmann::json&)>& edit) {
    nlohmann::json copy = doc;
    edit(copy);
    const auto p = temp_file("variant.json");
    std::ofstream(p) << copy.dump();
    return p;
  };
  CHECK_THROWS_AS(load_artifact(write_variant([](nlohmann::json& j) { j["version"] = 99; })), ModelError);
  CHECK_THROWS_AS(load_artifact(write_variant([](nlohmann::json& j) { j["format"] = "other"; })), ModelError);
  CHECK_THROWS_AS(load_artifact(write_variant([](nlohmann::json& j) { j["parameters"][0]["rows"] = 1; })),
                  ModelError);
  CHECK_THROWS_AS(load_artifact(write_variant([](nlohmann::json& j) { j["parameters"].erase(0); })), ModelError);
  CHECK_THROWS_AS(load_artifact(write_variant([](nlohmann::json& j) { j["model"]["hidden"] = 4; })), ModelError);
  CHECK_THROWS_AS(load_artifact(temp_file("missing_artifact.json")), ModelError);
}

TEST_CASE("step embedding degenerate weights and distinguishable ends") {
  const ModelConfig cfg = testing::tiny_model();
  Denoiser m(cfg, 18);
  Graph g;
  const double n1 = g.value(m.embed_step(g, 1)).norm();
  const double nT = g.value(m.embed_step(g, cfg.diffusion_steps)).norm();
  CHECK(n1 != nT);
  CHECK(g.value(m.embed_step(g, 4)) == g.value(m.embed_step(g, 4)));
  m.params().perturbation.step.weight.value.setZero();
  CHECK(g.value(m.embed_step(g, 7)) == m.params().perturbation.step.bias.value);
}
