#include "frn/training.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "frn/errors.hpp"
#include "frn/evaluation.hpp"

namespace frn {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train config: learning_rate must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ConfigError("train config: beta1 and beta2 must lie in (0, 1)");
  }
  if (!(eps_adam > 0.0)) throw ConfigError("train config: eps_adam must be positive");
  if (batch_size == 0) throw ConfigError("train config: batch_size must be at least 1");
  if (max_epochs == 0) throw ConfigError("train config: max_epochs must be at least 1");
}

template <typename T>
BatchLoss<T> batch_loss(const ModelParams<T>& params,
                        std::span<const std::vector<ItemInput>> outfits,
                        std::span<const int> labels, Mode mode, Rng* rng) {
  if (outfits.empty()) throw InputError("batch_loss: empty batch");
  if (outfits.size() != labels.size()) {
    throw InputError("batch_loss: outfit and label counts differ");
  }
  Tape<T> tape;
  const BoundParams<T> bound = bind(tape, params, true);
  const ForwardPass<T> pass = forward<T>(bound, outfits, mode, rng);
  const CrossEntropy<T> ce =
      softmax_cross_entropy(pass.logits, std::vector<int>(labels.begin(), labels.end()));

  BatchLoss<T> out{ce.loss.value().item(), params, {}, pass.relation_count};
  for (std::size_t r = 0; r < ce.probs.rows(); ++r) out.m_s.push_back(ce.probs(r, 1));
  std::vector<Tensor<T>> grads = tape.backward(ce.loss);
  std::size_t k = 0;
  out.grads.visit([&](const std::string&, Tensor<T>& g) { g = std::move(grads[k++]); });
  return out;
}

template <typename T>
double mean_loss(const ModelParams<T>& params, const ExampleSet& examples,
                 std::size_t batch_size) {
  if (examples.empty()) throw InputError("mean_loss: no examples");
  const auto scores = score_outfits<T>(params, examples.inputs(), batch_size);
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto lp =
        softmax_cross_entropy(Tensor<T>({2}, scores[i].logits), examples.labels()[i]);
    total += static_cast<double>(lp.loss);
  }
  return total / static_cast<double>(scores.size());
}

template <typename T>
void adam_step(ModelParams<T>& params, const ModelParams<T>& grads, AdamState<T>& state,
               const TrainConfig& config) {
  std::vector<const Tensor<T>*> g;
  grads.visit([&g](const std::string&, const Tensor<T>& t) { g.push_back(&t); });
  std::vector<Tensor<T>*> m, u;
  state.m.visit([&m](const std::string&, Tensor<T>& t) { m.push_back(&t); });
  state.u.visit([&u](const std::string&, Tensor<T>& t) { u.push_back(&t); });
  if (g.size() != m.size() || g.size() != u.size()) {
    throw DimensionError("adam_step: gradient/state tensor counts differ");
  }
  std::size_t k = 0;
  params.visit([&](const std::string& name, const Tensor<T>& p) {
    if (k >= g.size() || g[k]->shape() != p.shape() || m[k]->shape() != p.shape() ||
        u[k]->shape() != p.shape()) {
      throw DimensionError("adam_step: gradient/state shape mismatch at '" + name + "'");
    }
    ++k;
  });
  if (k != g.size()) throw DimensionError("adam_step: parameter count mismatch");

  state.t += 1;
  const double t = static_cast<double>(state.t);
  const T b1 = static_cast<T>(config.beta1), b2 = static_cast<T>(config.beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(config.beta1, t));
  const T c2 = static_cast<T>(1.0 - std::pow(config.beta2, t));
  const T lr = static_cast<T>(config.learning_rate);
  const T eps = static_cast<T>(config.eps_adam);
  k = 0;
  params.visit([&](const std::string&, Tensor<T>& p) {
    const Tensor<T>& gk = *g[k];
    Tensor<T>& mk = *m[k];
    Tensor<T>& uk = *u[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      mk[i] = b1 * mk[i] + (T{1} - b1) * gk[i];
      uk[i] = b2 * uk[i] + (T{1} - b2) * gk[i] * gk[i];
      const T m_hat = mk[i] / c1;
      const T u_hat = uk[i] / c2;
      p[i] -= lr * m_hat / (std::sqrt(u_hat) + eps);
    }
    ++k;
  });
}

nlohmann::json to_json(const EpochMetrics& m) {
  auto finite_or_null = [](double v) -> nlohmann::json {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
  };
  return {{"epoch", m.epoch},
          {"train_loss", finite_or_null(m.train_loss)},
          {"valid_loss", finite_or_null(m.valid_loss)},
          {"valid_auc", finite_or_null(m.valid_auc)},
          {"steps", m.steps}};
}

nlohmann::json to_json(const TrainReport& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.epochs) epochs.push_back(to_json(e));
  return {{"epochs", epochs},
          {"best_epoch", r.best_epoch},
          {"stopping_epoch", r.stopping_epoch},
          {"wall_seconds", r.wall_seconds}};
}

template <typename T>
TrainResult<T> train(const ModelConfig& model_config, const ExampleSet& train_set,
                     const ExampleSet& valid_set, const TrainConfig& config,
                     const EpochCallback& on_epoch) {
  config.validate();
  model_config.validate();
  if (train_set.empty() || valid_set.empty()) {
    throw InputError("train: training and validation sets must be non-empty");
  }
  const auto start = std::chrono::steady_clock::now();
  Rng init_rng(derive_seed(config.seed, "init"));
  Rng shuffle_rng(derive_seed(config.seed, "shuffle"));
  Rng dropout_rng(derive_seed(config.seed, "dropout"));

  ModelParams<T> params = init_params<T>(model_config, init_rng);
  AdamState<T> state = AdamState<T>::zeros_for(params);
  TrainResult<T> result{params, {}};
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t non_improving = 0;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::vector<ItemInput>> batch;
  std::vector<int> labels;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle(order, shuffle_rng);
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      batch.clear();
      labels.clear();
      for (std::size_t i = begin; i < end; ++i) {
        batch.push_back(train_set.inputs()[order[i]]);
        labels.push_back(train_set.labels()[order[i]]);
      }
      const BatchLoss<T> bl = batch_loss<T>(params, batch, labels, Mode::train, &dropout_rng);
      loss_sum += static_cast<double>(bl.loss) * static_cast<double>(end - begin);
      adam_step(params, bl.grads, state, config);
      ++steps;
    }

    EpochMetrics metrics;
    metrics.epoch = epoch;
    metrics.steps = steps;
    metrics.train_loss = loss_sum / static_cast<double>(order.size());
    const auto valid_scores = score_outfits<T>(params, valid_set.inputs());
    double valid_total = 0.0;
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < valid_scores.size(); ++i) {
      const int y = valid_set.labels()[i];
      valid_total += static_cast<double>(
          softmax_cross_entropy(Tensor<T>({2}, valid_scores[i].logits), y).loss);
      (y == 1 ? pos : neg).push_back(static_cast<double>(valid_scores[i].m_s));
    }
    metrics.valid_loss = valid_total / static_cast<double>(valid_scores.size());
    metrics.valid_auc = pos.empty() || neg.empty()
                            ? std::numeric_limits<double>::quiet_NaN()
                            : auc(pos, neg);
    result.report.epochs.push_back(metrics);
    result.report.stopping_epoch = epoch;
    if (on_epoch) on_epoch(metrics);

    if (metrics.valid_loss < best_loss) {
      best_loss = metrics.valid_loss;
      result.params = params;
      result.report.best_epoch = epoch;
      non_improving = 0;
    } else if (++non_improving >= config.patience) {
      break;
    }
  }
  result.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

#define FRN_INSTANTIATE(T)                                                                \
  template BatchLoss<T> batch_loss(const ModelParams<T>&,                                 \
                                   std::span<const std::vector<ItemInput>>,               \
                                   std::span<const int>, Mode, Rng*);                     \
  template double mean_loss(const ModelParams<T>&, const ExampleSet&, std::size_t);       \
  template void adam_step(ModelParams<T>&, const ModelParams<T>&, AdamState<T>&,          \
                          const TrainConfig&);                                            \
  template TrainResult<T> train(const ModelConfig&, const ExampleSet&, const ExampleSet&, \
                                const TrainConfig&, const EpochCallback&);

FRN_INSTANTIATE(float)
FRN_INSTANTIATE(double)

#undef FRN_INSTANTIATE

}  // namespace frn
