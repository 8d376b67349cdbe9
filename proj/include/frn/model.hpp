#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "frn/autodiff.hpp"
#include "frn/rng.hpp"
#include "frn/tensor.hpp"

namespace frn {

struct ModelConfig {
  std::size_t feature_dim = 0;
  std::size_t projection_dim = 1000;
  std::vector<std::size_t> g_layers{512, 512, 256, 256};
  std::vector<std::size_t> f_layers{128, 128, 32};
  double dropout_rate = 0.35;
  bool vse_enabled = false;
  std::size_t vocab_size = 0;
  std::size_t text_projection_dim = 300;
  double layer_norm_eps = 1e-5;

  void validate() const;
  // Width of one item's representation before pairing.
  std::size_t item_width() const;
  std::size_t pair_input_dim() const { return 2 * item_width(); }

  bool operator==(const ModelConfig&) const = default;
};

// Downscaled configuration for single-core runs over the synthetic data.
ModelConfig desk_config(std::size_t feature_dim);

template <typename T>
struct LinearParams {
  Tensor<T> weight;  // [in x out]
  Tensor<T> bias;    // [out]

  bool operator==(const LinearParams&) const = default;
};

template <typename T>
struct NormLayerParams {
  Tensor<T> weight;
  Tensor<T> bias;
  Tensor<T> ln_gain;
  Tensor<T> ln_bias;

  bool operator==(const NormLayerParams&) const = default;
};

// Learnable parameters. visit() walks tensors in the declared order used by
// gradients, optimizer state and checkpoints.
template <typename T>
struct ModelParams {
  ModelConfig config;
  LinearParams<T> projection;
  std::optional<LinearParams<T>> text_projection;
  std::vector<NormLayerParams<T>> g;
  std::vector<NormLayerParams<T>> f;
  LinearParams<T> classifier;

  template <typename Fn>
  void visit(Fn&& fn) {
    visit_impl(*this, fn);
  }
  template <typename Fn>
  void visit(Fn&& fn) const {
    visit_impl(*this, fn);
  }

  std::size_t scalar_count() const;
  // Same structure, every tensor zero.
  ModelParams zeros_like() const;

  bool operator==(const ModelParams&) const = default;

 private:
  template <typename Self, typename Fn>
  static void visit_impl(Self& self, Fn& fn) {
    fn("projection.weight", self.projection.weight);
    fn("projection.bias", self.projection.bias);
    if (self.text_projection) {
      fn("text_projection.weight", self.text_projection->weight);
      fn("text_projection.bias", self.text_projection->bias);
    }
    auto layers = [&fn](auto& list, const char* prefix) {
      for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string p = std::string(prefix) + "." + std::to_string(i) + ".";
        fn(p + "weight", list[i].weight);
        fn(p + "bias", list[i].bias);
        fn(p + "ln_gain", list[i].ln_gain);
        fn(p + "ln_bias", list[i].ln_bias);
      }
    };
    layers(self.g, "g");
    layers(self.f, "f");
    fn("classifier.weight", self.classifier.weight);
    fn("classifier.bias", self.classifier.bias);
  }
};

// Tensor shapes implied by a configuration, in visit() order.
std::vector<std::pair<std::string, Shape>> parameter_shapes(const ModelConfig& config);
std::size_t parameter_count(const ModelConfig& config);

// Correctly shaped parameters: weights and biases 0, LN gain 1.
template <typename T>
ModelParams<T> allocate_params(const ModelConfig& config);

// Weights ~ U(-s, s) with s = sqrt(6 / (fan_in + fan_out)); biases 0; LN gain 1.
template <typename T>
ModelParams<T> init_params(const ModelConfig& config, Rng& rng);

// One item as seen by the model. Non-owning; the referenced storage must
// outlive the call. `description` is the multi-hot vector (vocab_size
// entries) and must be present iff the model is VSE-enabled.
struct ItemInput {
  std::string_view item_id;
  std::span<const float> features;
  std::span<const float> description;
};

struct ItemPair {
  std::size_t first;   // index into the input list
  std::size_t second;
};

// Exactly C(n,2) unordered pairs. With `canonical`, items are visited in
// ascending id order and each pair is ordered (smaller id, larger id), so any
// permutation of `items` gives the same pairs in the same order.
std::vector<ItemPair> build_pairs(std::span<const ItemInput> items, bool canonical = true);

template <typename T>
struct CompatibilityScore {
  T m_s;                  // P(compatible)
  std::vector<T> logits;  // [incompatible, compatible]
  std::vector<T> probs;
};

// Parameters bound to a tape. Parameters are tracked when `track` is set,
// otherwise recorded as constants.
template <typename T>
struct BoundParams {
  std::vector<Var<T>> vars;  // visit() order
  const ModelParams<T>* params = nullptr;
};

template <typename T>
BoundParams<T> bind(Tape<T>& tape, const ModelParams<T>& params, bool track);

template <typename T>
struct ForwardPass {
  Var<T> logits;                 // [outfits x 2]
  std::size_t relation_count{};  // rows pushed through g
};

// Batched forward over several outfits. Each outfit needs >= 2 items.
template <typename T>
ForwardPass<T> forward(const BoundParams<T>& bound,
                       std::span<const std::vector<ItemInput>> outfits, Mode mode,
                       Rng* rng);

// v = W_proj x + b_proj.
template <typename T>
std::vector<T> embed_item(const ModelParams<T>& params, const ItemInput& item);

// h = g(pair) for one concatenated pair vector.
template <typename T>
std::vector<T> relation(const ModelParams<T>& params, std::span<const T> pair, Mode mode,
                        Rng* rng);

// FashionRN scoring. Rejects VSE-configured parameters.
template <typename T>
CompatibilityScore<T> score_outfit(const ModelParams<T>& params,
                                   std::span<const ItemInput> items, Mode mode = Mode::eval,
                                   Rng* rng = nullptr);

// FashionRN-VSE scoring. Requires a VSE configuration and a description on every item.
template <typename T>
CompatibilityScore<T> score_outfit_vse(const ModelParams<T>& params,
                                       std::span<const ItemInput> items,
                                       Mode mode = Mode::eval, Rng* rng = nullptr);

// Eval-mode scores for many outfits, chunked into batches. Works for both variants.
template <typename T>
std::vector<CompatibilityScore<T>> score_outfits(const ModelParams<T>& params,
                                                 std::span<const std::vector<ItemInput>> outfits,
                                                 std::size_t batch_size = 256);

}  // namespace frn
