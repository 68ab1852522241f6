#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>

#include "ftl/data.hpp"
#include "ftl/objectives.hpp"
#include "ftl/optim.hpp"
#include "ftl/stiefel.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace ftl;

namespace {

void set_from_flat(ModelGradients& g, const ModelParams& shape, const std::vector<double>& flat) {
  ModelParams tmp = shape;
  unpack(flat, tmp);
  for (std::size_t k = 0; k < tmp.local.size(); ++k) g.local[k] = tmp.local[k].weight;
  g.shared_weight = tmp.shared.weight;
  g.shared_bias = tmp.shared.bias;
}

/// 0.5·Σ c_i·p_i² over the packed parameters.
class Quadratic : public Objective {
 public:
  explicit Quadratic(std::vector<double> c) : c_(std::move(c)) {}
  EpochResult evaluate(const ModelParams& params, ModelGradients& grads) const override {
    const auto p = pack(params);
    std::vector<double> g(p.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      loss += 0.5 * c_[i] * p[i] * p[i];
      g[i] = c_[i] * p[i];
    }
    set_from_flat(grads, params, g);
    return {loss, 0.0};
  }

 private:
  std::vector<double> c_;
};

ModelParams toy_params(std::uint64_t seed) {
  constexpr std::size_t chain[] = {2};
  return gradcheck::random_network(seed, 3, chain, 2);
}

/// Seed-pinned separable two-class set: 8 channels, 40 trials per class.
TrialSet separable_set(std::uint64_t seed) {
  SynthSpec spec;
  spec.subject = "sep";
  spec.class_bases = {SpdMatrix(oracle::diag({4, 4, 4, 4, 1, 1, 1, 1})),
                      SpdMatrix(oracle::diag({1, 1, 1, 1, 4, 4, 4, 4}))};
  spec.spread = 0.1;
  spec.trials_per_class = 40;
  spec.samples = 256;
  spec.seed = seed;
  return synth_generate(spec);
}

}  // namespace

TEST_CASE("lr_at examples") {
  Schedule s;
  CHECK(lr_at(s, 0) == 0.1);
  CHECK(lr_at(s, 49) == 0.1);
  CHECK(std::abs(lr_at(s, 50) - 0.098) < 1e-15);
  CHECK(std::abs(lr_at(s, 51) - 0.09604) < 1e-15);
  double prev = lr_at(s, 0);
  for (std::size_t e = 1; e < 500; ++e) {
    CHECK(lr_at(s, e) <= prev);
    prev = lr_at(s, e);
  }
  s.decay_mode = DecayMode::kOneShot;
  CHECK(std::abs(lr_at(s, 51) - 0.098) < 1e-15);
  CHECK(std::abs(lr_at(s, 400) - 0.098) < 1e-15);
}

TEST_CASE("Schedule validation") {
  Schedule s;
  s.lr0 = 0.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = Schedule{};
  s.max_epochs = 0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = Schedule{};
  s.stop_loss = -1.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("sgd_step examples") {
  std::vector<double> p{1.0};
  sgd_step(p, std::vector<double>{2.0}, 0.1);
  CHECK(p[0] == 0.8);
  sgd_step(p, std::vector<double>{5.0}, 0.0);
  CHECK(p[0] == 0.8);
  CHECK_THROWS_AS(sgd_step(p, std::vector<double>{NAN}, 0.1), DivergenceError);
  CHECK_THROWS_AS(sgd_step(p, std::vector<double>{1.0, 2.0}, 0.1), std::invalid_argument);

  ModelParams params = toy_params(1);
  const auto before = pack(params);
  auto g = ModelGradients::zeros_like(params);
  for (auto& m : g.local) m = Matrix(m.rows(), m.cols(), 1.0);
  sgd_step(params, g, 0.0);
  CHECK(pack(params) == before);
}

TEST_CASE("two steps on a quadratic differ from one summed step") {
  // constant gradients would make them equal; a quadratic does not
  ModelParams a = toy_params(2);
  ModelParams b = a;
  const auto flat = pack(a);
  std::vector<double> c(flat.size(), 1.0);
  Quadratic q(c);
  Schedule s;
  s.decay_start_epoch = 1000;
  (void)train_epochs(a, q, s, 2);
  auto g1 = ModelGradients::zeros_like(b);
  (void)q.evaluate(b, g1);
  auto twice = g1;
  twice *= 2.0;
  sgd_step(b, twice, 0.1);
  const auto pa = pack(a), pb = pack(b);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (flat[i] == 0.0) continue;
    CHECK(std::abs(pa[i] - flat[i] * 0.81) < 1e-15);
    CHECK(std::abs(pb[i] - flat[i] * 0.8) < 1e-15);
  }
}

TEST_CASE("train decreases a convex quadratic monotonically") {
  ModelParams params = toy_params(3);
  std::vector<double> c(pack(params).size());
  Rng rng(3);
  for (double& v : c) v = rng.uniform(0.5, 4.0);
  Quadratic q(c);
  Schedule s;
  s.stop_loss = 0.0;
  s.max_epochs = 100;
  auto report = train(params, q, s);
  REQUIRE(report.epochs.size() == 100);
  CHECK(report.stop_reason == StopReason::kMaxEpochs);
  for (std::size_t e = 1; e < report.epochs.size(); ++e) {
    CHECK(report.epochs[e].loss < report.epochs[e - 1].loss);
    CHECK(report.epochs[e].epoch == report.epochs[e - 1].epoch + 1);
  }
}

TEST_CASE("train with an infinite threshold stops after the first epoch") {
  ModelParams params = toy_params(4);
  Quadratic q(std::vector<double>(pack(params).size(), 1.0));
  Schedule s;
  s.stop_loss = std::numeric_limits<double>::infinity();
  auto report = train(params, q, s);
  CHECK(report.epochs.size() == 1);
  CHECK(report.stop_reason == StopReason::kThreshold);
  CHECK(to_string(report.stop_reason) == "threshold");
}

TEST_CASE("train reports divergence") {
  ModelParams params = toy_params(5);
  Quadratic q(std::vector<double>(pack(params).size(), 1e4));  // lr·c far above 2
  Schedule s;
  s.stop_loss = 0.0;
  s.max_epochs = 2000;
  try {
    (void)train(params, q, s);
    FAIL("expected divergence");
  } catch (const TrainingDivergedError& e) {
    CHECK(!e.report().epochs.empty());
  }
}

TEST_CASE("stiefel mode keeps BiMap rows orthonormal") {
  ModelParams params = toy_params(6);
  for (auto& l : params.local) orthonormalize_rows(l.weight);
  Quadratic q(std::vector<double>(pack(params).size(), 1.0));
  Schedule s;
  s.stop_loss = 0.0;
  s.max_epochs = 20;
  (void)train(params, q, s, OptimizerOptions{true});
  for (const auto& l : params.local) {
    Matrix wwt = oracle::mul(l.weight, oracle::trans(l.weight));
    CHECK(oracle::fro(oracle::sub(wwt, oracle::eye(l.out_dim()))) <= 1e-8);
  }
}

TEST_CASE("classification objective gradient matches central differences") {
  Rng rng(7);
  std::vector<SpdMatrix> covs;
  std::vector<std::size_t> labels, subjects;
  for (std::size_t i = 0; i < 7; ++i) {
    covs.push_back(oracle::random_spd(4, rng, 5.0));
    labels.push_back(i % 2);
    subjects.push_back(i < 3 ? 0 : 1);
  }
  ClassificationObjective obj(covs, labels, kDefaultClampEps, subjects);
  CHECK(obj.subject_count() == 2);
  CHECK(obj.trial_scale(0) == 1.0 / 3.0);
  CHECK(obj.trial_scale(5) == 0.25);
  constexpr std::size_t chain[] = {3, 2};
  ModelParams params = gradcheck::random_network(8, 4, chain, 2);
  auto grads = ModelGradients::zeros_like(params);
  const auto result = obj.evaluate(params, grads);

  double want = 0.0;
  for (std::size_t s = 0; s < 2; ++s) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < covs.size(); ++i)
      if (subjects[i] == s) {
        sum += cross_entropy(network_forward(params, covs[i]).probs, labels[i]);
        ++n;
      }
    want += sum / static_cast<double>(n);
  }
  CHECK(std::abs(result.loss - want) < 1e-14);

  auto loss = [&](const std::vector<double>& flat) {
    ModelParams p = params;
    unpack(flat, p);
    auto g = ModelGradients::zeros_like(p);
    return obj.evaluate(p, g).loss;
  };
  CHECK(oracle::grad_rel_err(pack(grads), gradcheck::flat_fd(loss, pack(params), 1e-5)) <= 1e-4);
}

TEST_CASE("domain-adapted objective gradient matches central differences") {
  Rng rng(9);
  std::vector<SpdMatrix> covs;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < 6; ++i) {
    covs.push_back(oracle::random_spd(5, rng, 5.0));
    labels.push_back(i % 2);
  }
  PeerDomain peer;
  peer.samples = ClassSamples(2);
  for (std::size_t y = 0; y < 2; ++y)
    for (int k = 0; k < 3; ++k) peer.samples[y].push_back(oracle::random_spd(2, rng, 3.0));
  peer.lambda = {0.1, 0.4};
  DomainAdaptedObjective obj(ClassificationObjective(covs, labels), {peer}, 2.0);
  constexpr std::size_t chain[] = {3, 2};
  ModelParams params = gradcheck::random_network(10, 5, chain, 2);
  auto grads = ModelGradients::zeros_like(params);
  const auto result = obj.evaluate(params, grads);

  ClassificationObjective plain(covs, labels);
  auto g0 = ModelGradients::zeros_like(params);
  const double ce = plain.evaluate(params, g0).loss;
  const auto own = reduce_by_class(params, covs, labels, 2);
  const double want = ce + 0.1 * oracle::mmd2(own[0], peer.samples[0], 2.0) +
                      0.4 * oracle::mmd2(own[1], peer.samples[1], 2.0);
  CHECK(std::abs(result.loss - want) < 1e-13);

  auto loss = [&](const std::vector<double>& flat) {
    ModelParams p = params;
    unpack(flat, p);
    auto g = ModelGradients::zeros_like(p);
    return obj.evaluate(p, g).loss;
  };
  CHECK(oracle::grad_rel_err(pack(grads), gradcheck::flat_fd(loss, pack(params), 1e-5)) <= 1e-4);
}

TEST_CASE("separable synthetic data reaches the stop loss within 500 epochs") {
  const TrialSet set = separable_set(42);
  const auto covs = trial_covariances(set);
  ClassificationObjective obj(covs, set.labels());
  constexpr std::size_t chain[] = {4, 4};
  Rng rng(1);
  ModelParams params = init_params(8, chain, 2, rng);
  ModelParams again = params;
  Schedule s;
  s.max_epochs = 500;
  auto report = train(params, obj, s);
  CHECK(report.stop_reason == StopReason::kThreshold);
  CHECK(report.final_loss() < 0.1);
  CHECK(report.epochs.size() <= 500);
  CHECK(accuracy(params, covs, set.labels()) >= 0.95);

  auto rerun = train(again, obj, s);
  REQUIRE(rerun.epochs.size() == report.epochs.size());
  for (std::size_t e = 0; e < rerun.epochs.size(); ++e) CHECK(rerun.epochs[e].loss == report.epochs[e].loss);
  CHECK(pack(again) == pack(params));
}
