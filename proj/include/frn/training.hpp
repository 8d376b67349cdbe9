#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <vector>

#include <json.hpp>

#include "frn/dataset.hpp"
#include "frn/model.hpp"

namespace frn {

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 64;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  std::size_t max_epochs = 30;
  std::size_t patience = 3;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

template <typename T>
struct AdamState {
  ModelParams<T> m;  // first moment
  ModelParams<T> u;  // second moment
  std::uint64_t t = 0;

  static AdamState zeros_for(const ModelParams<T>& params) {
    return {params.zeros_like(), params.zeros_like(), 0};
  }
};

template <typename T>
struct BatchLoss {
  T loss;                // mean cross-entropy over the batch
  ModelParams<T> grads;  // same layout as the parameters
  std::vector<T> m_s;    // P(compatible) per outfit
  std::size_t relation_count = 0;
};

// Forward + backward over one batch of labeled outfits.
template <typename T>
BatchLoss<T> batch_loss(const ModelParams<T>& params,
                        std::span<const std::vector<ItemInput>> outfits,
                        std::span<const int> labels, Mode mode, Rng* rng);

// Mean cross-entropy in eval mode, no gradients.
template <typename T>
double mean_loss(const ModelParams<T>& params, const ExampleSet& examples,
                 std::size_t batch_size = 256);

// m <- b1 m + (1-b1) g; u <- b2 u + (1-b2) g^2;
// theta <- theta - lr * m_hat / (sqrt(u_hat) + eps) with bias-corrected moments.
template <typename T>
void adam_step(ModelParams<T>& params, const ModelParams<T>& grads, AdamState<T>& state,
               const TrainConfig& config);

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double valid_auc = 0.0;
  std::size_t steps = 0;

  bool operator==(const EpochMetrics&) const = default;
};

struct TrainReport {
  std::vector<EpochMetrics> epochs;
  std::size_t best_epoch = 0;
  std::size_t stopping_epoch = 0;
  double wall_seconds = 0.0;

  // Ignores wall time.
  bool same_curve(const TrainReport& other) const {
    return epochs == other.epochs && best_epoch == other.best_epoch &&
           stopping_epoch == other.stopping_epoch;
  }
};

nlohmann::json to_json(const EpochMetrics& m);
nlohmann::json to_json(const TrainReport& r);

template <typename T>
struct TrainResult {
  ModelParams<T> params;  // best validation loss
  TrainReport report;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Shuffles each epoch with a seeded generator, takes one Adam step per batch,
// evaluates validation loss/AUC after every epoch, keeps the best-validation
// parameters, and stops after `patience` consecutive non-improving epochs or
// at max_epochs. Deterministic in (data, configs, seed).
template <typename T>
TrainResult<T> train(const ModelConfig& model_config, const ExampleSet& train_set,
                     const ExampleSet& valid_set, const TrainConfig& config,
                     const EpochCallback& on_epoch = {});

}  // namespace frn
