#include <cmath>
#include <limits>

#include "doctest.h"
#include "frn/dataset.hpp"
#include "frn/errors.hpp"
#include "frn/synthetic.hpp"
#include "frn/training.hpp"
#include "test_util.hpp"

using namespace frn;

namespace {

ModelConfig small_model() {
  ModelConfig c;
  c.feature_dim = 32;
  c.projection_dim = 16;
  c.g_layers = {32, 16};
  c.f_layers = {16, 8};
  return c;
}

struct SmallData {
  SyntheticDataset data;
  FeatureStore store;
  ItemResolver resolver;
  ExampleSet train;
  ExampleSet valid;

  explicit SmallData(std::uint64_t seed, std::size_t n_train = 150)
      : data(make(seed, n_train)),
        store(data.feature_store()),
        resolver(store, &data.catalog, nullptr),
        train(resolver, data.train),
        valid(resolver, data.valid) {}

  static SyntheticDataset make(std::uint64_t seed, std::size_t n_train) {
    SyntheticConfig c;
    c.n_train = n_train;
    c.n_valid = 60;
    c.n_test = 10;
    c.seed = seed;
    return gen_synthetic(c);
  }
};

double scalar_cross_entropy(const std::vector<double>& m_s, const std::vector<int>& labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < m_s.size(); ++i) {
    total -= labels[i] == 1 ? std::log(m_s[i]) : std::log(1.0 - m_s[i]);
  }
  return total / static_cast<double>(m_s.size());
}

ModelParams<double> fill(ModelParams<double> p, double value) {
  p.visit([value](const std::string&, Tensor<double>& t) { t.fill(value); });
  return p;
}

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.learning_rate == 0.001);
  CHECK(c.batch_size == 64);
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.beta1 = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("batch_loss: closed forms and scalar recomputation") {
  SmallData d(1);
  const auto& inputs = d.train.inputs();
  const std::vector<std::vector<ItemInput>> batch(inputs.begin(), inputs.begin() + 8);
  const std::vector<int> labels(d.train.labels().begin(), d.train.labels().begin() + 8);

  SUBCASE("uniform predictions give ln 2") {
    auto p = allocate_params<double>(small_model());
    Rng rng(1);
    p = init_params<double>(small_model(), rng);
    p.classifier.weight.fill(0.0);
    const auto bl = batch_loss<double>(p, batch, labels, Mode::eval, nullptr);
    CHECK(bl.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("confident correct predictions give a tiny loss") {
    Rng rng(2);
    auto p = init_params<double>(small_model(), rng);
    p.classifier.weight.fill(0.0);
    const std::vector<int> ones(8, 1);
    p.classifier.bias[0] = -20.0;
    p.classifier.bias[1] = 20.0;
    CHECK(batch_loss<double>(p, batch, ones, Mode::eval, nullptr).loss < 1e-6);
  }
  SUBCASE("loss equals the scalar cross-entropy of m_s") {
    Rng rng(3);
    const auto p = init_params<double>(small_model(), rng);
    const auto bl = batch_loss<double>(p, batch, labels, Mode::eval, nullptr);
    CHECK(std::abs(bl.loss - scalar_cross_entropy(bl.m_s, labels)) < 1e-8);
    std::size_t relations = 0;
    for (const auto& o : batch) relations += o.size() * (o.size() - 1) / 2;
    CHECK(bl.relation_count == relations);
  }
  SUBCASE("bad batches") {
    const auto p = allocate_params<double>(small_model());
    const std::vector<std::vector<ItemInput>> none;
    CHECK_THROWS_AS(batch_loss<double>(p, none, std::vector<int>{}, Mode::eval, nullptr),
                    InputError);
    CHECK_THROWS_AS(batch_loss<double>(p, batch, std::vector<int>{1}, Mode::eval, nullptr),
                    InputError);
  }
}

TEST_CASE("adam_step: zero gradient from zero state is a no-op") {
  Rng rng(4);
  auto p = init_params<double>(small_model(), rng);
  const auto before = p;
  auto state = AdamState<double>::zeros_for(p);
  const TrainConfig cfg;
  for (int i = 0; i < 3; ++i) adam_step(p, p.zeros_like(), state, cfg);
  CHECK(p == before);
  CHECK(state.t == 3);
}

TEST_CASE("adam_step: hand-evaluated recurrence") {
  const TrainConfig cfg;
  auto p = fill(allocate_params<double>(small_model()), 0.0);
  auto state = AdamState<double>::zeros_for(p);

  adam_step(p, fill(p.zeros_like(), 1.0), state, cfg);
  // t = 1: m_hat = 1, u_hat = 1, step = lr / (1 + eps).
  const double step1 = 0.001 / (1.0 + 1e-8);
  p.visit([&](const std::string&, const Tensor<double>& t) {
    for (double v : t.span()) CHECK(v == doctest::Approx(-step1).epsilon(1e-12));
  });
  CHECK(step1 == doctest::Approx(0.001).epsilon(1e-7));

  adam_step(p, fill(p.zeros_like(), -0.5), state, cfg);
  // t = 2: m = 0.9*0.1 - 0.1*0.5 = 0.04; u = 0.999*0.001 + 0.001*0.25 = 0.001249.
  const double m_hat = 0.04 / (1.0 - 0.81);
  const double u_hat = 0.001249 / (1.0 - 0.998001);
  const double step2 = 0.001 * m_hat / (std::sqrt(u_hat) + 1e-8);
  p.visit([&](const std::string&, const Tensor<double>& t) {
    for (double v : t.span()) CHECK(v == doctest::Approx(-step1 - step2).epsilon(1e-10));
  });
}

TEST_CASE("adam_step: shape mismatch") {
  Rng rng(5);
  auto p = init_params<double>(small_model(), rng);
  auto state = AdamState<double>::zeros_for(p);
  ModelConfig other = small_model();
  other.projection_dim = 8;
  const auto wrong = allocate_params<double>(other);
  CHECK_THROWS_AS(adam_step(p, wrong, state, TrainConfig{}), DimensionError);
}

TEST_CASE("adam_step: ten steps are bit-identical across runs") {
  SmallData d(6);
  auto run = [&] {
    Rng init(7), drop(8);
    auto p = init_params<float>(small_model(), init);
    auto state = AdamState<float>::zeros_for(p);
    const auto& inputs = d.train.inputs();
    const std::vector<std::vector<ItemInput>> batch(inputs.begin(), inputs.begin() + 16);
    const std::vector<int> labels(d.train.labels().begin(), d.train.labels().begin() + 16);
    for (int i = 0; i < 10; ++i) {
      const auto bl = batch_loss<float>(p, batch, labels, Mode::train, &drop);
      adam_step(p, bl.grads, state, TrainConfig{});
    }
    return p;
  };
  CHECK(run() == run());
}

TEST_CASE("train: steps per epoch, early stopping rule, best parameters") {
  SmallData d(9);
  for (std::size_t patience : {0, 1, 2}) {
    TrainConfig cfg;
    cfg.seed = 3;
    cfg.max_epochs = 12;
    cfg.patience = patience;
    cfg.learning_rate = 0.01;  // make plateaus appear within a few epochs
    std::size_t callbacks = 0;
    const auto result = train<float>(small_model(), d.train, d.valid, cfg,
                                     [&callbacks](const EpochMetrics&) { ++callbacks; });
    const auto& epochs = result.report.epochs;
    REQUIRE_FALSE(epochs.empty());
    CHECK(callbacks == epochs.size());
    CHECK(result.report.stopping_epoch == epochs.size());

    // Replay the stopping rule.
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0, bad = 0, stop = 0;
    for (const auto& e : epochs) {
      CHECK(e.steps == (d.train.size() + cfg.batch_size - 1) / cfg.batch_size);
      CHECK(std::isfinite(e.train_loss));
      CHECK(e.valid_auc >= 0.0);
      stop = e.epoch;
      if (e.valid_loss < best) {
        best = e.valid_loss;
        best_epoch = e.epoch;
        bad = 0;
      } else if (++bad >= patience) {
        break;
      }
    }
    CHECK(stop == result.report.stopping_epoch);
    CHECK(best_epoch == result.report.best_epoch);
    if (patience == 0 && epochs.size() < cfg.max_epochs) {
      CHECK(epochs.back().valid_loss >= epochs[epochs.size() - 2].valid_loss);
    }
    CHECK(mean_loss(result.params, d.valid) == doctest::Approx(best).epsilon(1e-9));
  }
}

TEST_CASE("train: deterministic in data, config and seed") {
  SmallData d(10);
  TrainConfig cfg;
  cfg.seed = 11;
  cfg.max_epochs = 3;
  const auto a = train<float>(small_model(), d.train, d.valid, cfg);
  const auto b = train<float>(small_model(), d.train, d.valid, cfg);
  CHECK(a.report.same_curve(b.report));
  CHECK(a.params == b.params);
  cfg.seed = 12;
  const auto c = train<float>(small_model(), d.train, d.valid, cfg);
  CHECK_FALSE(a.report.same_curve(c.report));
}

TEST_CASE("train: result does not depend on heap layout") {
  // Scratch buffers land at different addresses once earlier allocations are held.
  SmallData d(10);
  TrainConfig cfg;
  cfg.seed = 11;
  cfg.max_epochs = 3;
  const auto ref = train<float>(small_model(), d.train, d.valid, cfg);
  std::vector<std::vector<char>> held;
  for (std::size_t k = 1; k <= 12; ++k) {
    held.emplace_back(k * 24);
    const auto again = train<float>(small_model(), d.train, d.valid, cfg);
    CAPTURE(k);
    CHECK(again.report.same_curve(ref.report));
    CHECK(again.params == ref.params);
  }
}

TEST_CASE("train: learns the small synthetic task") {
  SmallData d(13, 400);
  TrainConfig cfg;
  cfg.seed = 1;
  cfg.max_epochs = 15;
  const auto result = train<float>(small_model(), d.train, d.valid, cfg);
  CHECK(result.report.epochs[result.report.best_epoch - 1].valid_auc > 0.8);
}

TEST_CASE("train: rejects empty sets and bad configs") {
  SmallData d(14);
  const ExampleSet empty(d.resolver, std::vector<Outfit>{});
  CHECK_THROWS_AS(train<float>(small_model(), empty, d.valid, TrainConfig{}), InputError);
  TrainConfig bad;
  bad.max_epochs = 0;
  CHECK_THROWS_AS(train<float>(small_model(), d.train, d.valid, bad), ConfigError);
}

TEST_CASE("train report JSON writes non-finite values as null") {
  EpochMetrics m{1, 0.5, 0.25, std::numeric_limits<double>::quiet_NaN(), 4};
  const auto j = to_json(m);
  CHECK(j["valid_auc"].is_null());
  CHECK(j["train_loss"].get<double>() == 0.5);
  TrainReport r;
  r.epochs.push_back(m);
  r.best_epoch = r.stopping_epoch = 1;
  CHECK(to_json(r)["epochs"].size() == 1);
}
