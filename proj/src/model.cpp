#include "frn/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace frn {

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("model config: ") + name + " must be positive");
  };
  positive(feature_dim, "feature_dim");
  positive(projection_dim, "projection_dim");
  if (g_layers.empty()) throw ConfigError("model config: g_layers must be non-empty");
  if (f_layers.empty()) throw ConfigError("model config: f_layers must be non-empty");
  for (std::size_t w : g_layers) positive(w, "g layer width");
  for (std::size_t w : f_layers) positive(w, "f layer width");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("model config: dropout_rate must lie in [0, 1)");
  }
  if (!(layer_norm_eps > 0.0)) throw ConfigError("model config: layer_norm_eps must be positive");
  if (vse_enabled) {
    positive(vocab_size, "vocab_size");
    positive(text_projection_dim, "text_projection_dim");
  }
}

std::size_t ModelConfig::item_width() const {
  return projection_dim + (vse_enabled ? text_projection_dim : 0);
}

ModelConfig desk_config(std::size_t feature_dim) {
  ModelConfig config;
  config.feature_dim = feature_dim;
  config.projection_dim = 64;
  config.g_layers = {128, 128, 64, 64};
  config.f_layers = {64, 64, 16};
  config.text_projection_dim = 32;
  return config;
}

std::vector<std::pair<std::string, Shape>> parameter_shapes(const ModelConfig& config) {
  config.validate();
  std::vector<std::pair<std::string, Shape>> shapes;
  shapes.emplace_back("projection.weight", Shape{config.feature_dim, config.projection_dim});
  shapes.emplace_back("projection.bias", Shape{config.projection_dim});
  if (config.vse_enabled) {
    shapes.emplace_back("text_projection.weight",
                        Shape{config.vocab_size, config.text_projection_dim});
    shapes.emplace_back("text_projection.bias", Shape{config.text_projection_dim});
  }
  auto mlp = [&shapes](const std::vector<std::size_t>& widths, std::size_t in,
                       const char* prefix) {
    for (std::size_t i = 0; i < widths.size(); ++i) {
      const std::string p = std::string(prefix) + "." + std::to_string(i) + ".";
      shapes.emplace_back(p + "weight", Shape{in, widths[i]});
      shapes.emplace_back(p + "bias", Shape{widths[i]});
      shapes.emplace_back(p + "ln_gain", Shape{widths[i]});
      shapes.emplace_back(p + "ln_bias", Shape{widths[i]});
      in = widths[i];
    }
  };
  mlp(config.g_layers, config.pair_input_dim(), "g");
  mlp(config.f_layers, config.g_layers.back(), "f");
  shapes.emplace_back("classifier.weight", Shape{config.f_layers.back(), 2});
  shapes.emplace_back("classifier.bias", Shape{2});
  return shapes;
}

std::size_t parameter_count(const ModelConfig& config) {
  std::size_t total = 0;
  for (const auto& [name, shape] : parameter_shapes(config)) total += shape_size(shape);
  return total;
}

template <typename T>
std::size_t ModelParams<T>::scalar_count() const {
  std::size_t total = 0;
  visit([&total](const std::string&, const Tensor<T>& t) { total += t.size(); });
  return total;
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros_like() const {
  ModelParams<T> out = *this;
  out.visit([](const std::string&, Tensor<T>& t) { t.fill(T{0}); });
  return out;
}

template <typename T>
ModelParams<T> allocate_params(const ModelConfig& config) {
  config.validate();
  ModelParams<T> params;
  params.config = config;
  auto linear = [](std::size_t in, std::size_t out) {
    return LinearParams<T>{Tensor<T>({in, out}), Tensor<T>({out})};
  };
  auto norm_layer = [](std::size_t in, std::size_t out) {
    return NormLayerParams<T>{Tensor<T>({in, out}), Tensor<T>({out}),
                              Tensor<T>({out}, T{1}), Tensor<T>({out})};
  };
  params.projection = linear(config.feature_dim, config.projection_dim);
  if (config.vse_enabled) {
    params.text_projection = linear(config.vocab_size, config.text_projection_dim);
  }
  std::size_t in = config.pair_input_dim();
  for (std::size_t w : config.g_layers) {
    params.g.push_back(norm_layer(in, w));
    in = w;
  }
  for (std::size_t w : config.f_layers) {
    params.f.push_back(norm_layer(in, w));
    in = w;
  }
  params.classifier = linear(in, 2);
  return params;
}

template <typename T>
ModelParams<T> init_params(const ModelConfig& config, Rng& rng) {
  ModelParams<T> params = allocate_params<T>(config);
  params.visit([&rng](const std::string& name, Tensor<T>& t) {
    if (!name.ends_with(".weight")) return;
    const double fan_in = static_cast<double>(t.shape()[0]);
    const double fan_out = static_cast<double>(t.shape()[1]);
    const double s = std::sqrt(6.0 / (fan_in + fan_out));
    for (std::size_t i = 0; i < t.size(); ++i) {
      t[i] = static_cast<T>((2.0 * uniform01(rng) - 1.0) * s);
    }
  });
  return params;
}

std::vector<ItemPair> build_pairs(std::span<const ItemInput> items, bool canonical) {
  if (items.size() < 2) {
    throw InputError("build_pairs: an outfit needs at least 2 items, got " +
                     std::to_string(items.size()));
  }
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (canonical) {
    std::sort(order.begin(), order.end(), [&items](std::size_t a, std::size_t b) {
      return items[a].item_id < items[b].item_id;
    });
    for (std::size_t k = 1; k < order.size(); ++k) {
      if (items[order[k - 1]].item_id == items[order[k]].item_id) {
        throw InputError("build_pairs: duplicate item id '" +
                         std::string(items[order[k]].item_id) + "' in outfit");
      }
    }
  }
  std::vector<ItemPair> pairs;
  pairs.reserve(items.size() * (items.size() - 1) / 2);
  for (std::size_t a = 0; a < order.size(); ++a) {
    for (std::size_t b = a + 1; b < order.size(); ++b) {
      pairs.push_back({order[a], order[b]});
    }
  }
  return pairs;
}

template <typename T>
BoundParams<T> bind(Tape<T>& tape, const ModelParams<T>& params, bool track) {
  BoundParams<T> bound;
  bound.params = &params;
  params.visit([&](const std::string&, const Tensor<T>& t) {
    bound.vars.push_back(track ? tape.parameter(t) : tape.constant_ref(t));
  });
  return bound;
}

namespace {

template <typename T>
Tensor<T> gather_rows(std::span<const std::vector<ItemInput>> outfits, std::size_t width,
                      std::size_t total_items, bool description) {
  Tensor<T> m({total_items, width});
  std::size_t row = 0;
  for (const auto& outfit : outfits) {
    for (const ItemInput& item : outfit) {
      const auto src = description ? item.description : item.features;
      if (src.size() != width) {
        throw InputError(std::string(description ? "description" : "feature") +
                         " vector of item '" + std::string(item.item_id) + "' has " +
                         std::to_string(src.size()) + " entries, expected " +
                         std::to_string(width));
      }
      T* dst = m.data() + row * width;
      for (std::size_t c = 0; c < width; ++c) dst[c] = static_cast<T>(src[c]);
      ++row;
    }
  }
  return m;
}

// Applies linear -> layer_norm -> relu -> dropout per layer; `dropout_last`
// controls the final layer.
template <typename T>
Var<T> mlp(Var<T> x, const std::vector<Var<T>>& vars, std::size_t first_var,
           std::size_t layers, const ModelConfig& config, Mode mode, Rng* rng,
           bool dropout_last) {
  const T eps = static_cast<T>(config.layer_norm_eps);
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t v = first_var + 4 * l;
    x = linear(x, vars[v], vars[v + 1]);
    x = layer_norm(x, vars[v + 2], vars[v + 3], eps);
    x = relu(x);
    if (l + 1 < layers || dropout_last) x = dropout(x, config.dropout_rate, rng, mode);
  }
  return x;
}

}  // namespace

template <typename T>
ForwardPass<T> forward(const BoundParams<T>& bound,
                       std::span<const std::vector<ItemInput>> outfits, Mode mode,
                       Rng* rng) {
  const ModelParams<T>& params = *bound.params;
  const ModelConfig& config = params.config;
  if (outfits.empty()) throw InputError("forward: empty batch");
  Tape<T>& tape = *bound.vars.front().tape;

  // Canonical item order per outfit; rows of the item matrix follow it.
  std::vector<std::vector<ItemInput>> sorted;
  sorted.reserve(outfits.size());
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<std::size_t> offsets{0};
  std::size_t total_items = 0;
  for (const auto& outfit : outfits) {
    build_pairs(outfit, true);  // rejects n < 2 and duplicate ids
    std::vector<ItemInput> ordered = outfit;
    std::sort(ordered.begin(), ordered.end(),
              [](const ItemInput& a, const ItemInput& b) { return a.item_id < b.item_id; });
    const std::size_t n = ordered.size();
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        pairs.emplace_back(total_items + a, total_items + b);
      }
    }
    total_items += n;
    offsets.push_back(pairs.size());
    sorted.push_back(std::move(ordered));
  }

  const std::vector<Var<T>>& vars = bound.vars;
  std::size_t v = 0;
  Var<T> x = tape.constant(gather_rows<T>(sorted, config.feature_dim, total_items, false));
  Var<T> items = linear(x, vars[v], vars[v + 1]);
  v += 2;
  if (config.vse_enabled) {
    for (const auto& outfit : sorted) {
      for (const ItemInput& item : outfit) {
        if (item.description.empty()) {
          throw InputError("item '" + std::string(item.item_id) +
                           "' has no description but the model is VSE-enabled");
        }
      }
    }
    Var<T> d = tape.constant(gather_rows<T>(sorted, config.vocab_size, total_items, true));
    items = concat_cols(items, linear(d, vars[v], vars[v + 1]));
    v += 2;
  }

  Var<T> h = gather_pairs(items, pairs);
  h = mlp(h, vars, v, config.g_layers.size(), config, mode, rng, true);
  const std::size_t relation_count = h.value().rows();
  v += 4 * config.g_layers.size();

  Var<T> pooled = segment_mean(h, offsets);
  pooled = mlp(pooled, vars, v, config.f_layers.size(), config, mode, rng, false);
  v += 4 * config.f_layers.size();
  Var<T> logits = linear(pooled, vars[v], vars[v + 1]);
  return {logits, relation_count};
}

namespace {

template <typename T>
CompatibilityScore<T> make_score(std::span<const T> logits) {
  CompatibilityScore<T> s;
  s.logits.assign(logits.begin(), logits.end());
  s.probs = softmax<T>(logits);
  s.m_s = s.probs[1];
  return s;
}

template <typename T>
CompatibilityScore<T> score_one(const ModelParams<T>& params,
                                std::span<const ItemInput> items, Mode mode, Rng* rng) {
  Tape<T> tape;
  const BoundParams<T> bound = bind(tape, params, false);
  const std::vector<std::vector<ItemInput>> batch{
      std::vector<ItemInput>(items.begin(), items.end())};
  const ForwardPass<T> pass = forward<T>(bound, batch, mode, rng);
  return make_score<T>(pass.logits.value().row(0));
}

}  // namespace

template <typename T>
std::vector<T> embed_item(const ModelParams<T>& params, const ItemInput& item) {
  const std::size_t d = params.config.feature_dim;
  const std::size_t p = params.config.projection_dim;
  if (item.features.size() != d) {
    throw InputError("embed_item: item '" + std::string(item.item_id) + "' has " +
                     std::to_string(item.features.size()) + " features, expected " +
                     std::to_string(d));
  }
  const Tensor<T>& w = params.projection.weight;
  std::vector<T> v(params.projection.bias.values());
  for (std::size_t k = 0; k < d; ++k) {
    const T xk = static_cast<T>(item.features[k]);
    const T* wrow = w.data() + k * p;
    for (std::size_t c = 0; c < p; ++c) v[c] += xk * wrow[c];
  }
  return v;
}

template <typename T>
std::vector<T> relation(const ModelParams<T>& params, std::span<const T> pair, Mode mode,
                        Rng* rng) {
  const ModelConfig& config = params.config;
  if (pair.size() != config.pair_input_dim()) {
    throw InputError("relation: pair vector has " + std::to_string(pair.size()) +
                     " entries, expected " + std::to_string(config.pair_input_dim()));
  }
  Tape<T> tape;
  const BoundParams<T> bound = bind(tape, params, false);
  Var<T> x = tape.constant(Tensor<T>({1, pair.size()}, std::vector<T>(pair.begin(), pair.end())));
  const std::size_t first = config.vse_enabled ? 4 : 2;
  Var<T> h = mlp(x, bound.vars, first, config.g_layers.size(), config, mode, rng, true);
  return h.value().values();
}

template <typename T>
CompatibilityScore<T> score_outfit(const ModelParams<T>& params,
                                   std::span<const ItemInput> items, Mode mode, Rng* rng) {
  if (params.config.vse_enabled) {
    throw ConfigError("score_outfit: parameters belong to a VSE model; use score_outfit_vse");
  }
  return score_one(params, items, mode, rng);
}

template <typename T>
CompatibilityScore<T> score_outfit_vse(const ModelParams<T>& params,
                                       std::span<const ItemInput> items, Mode mode,
                                       Rng* rng) {
  if (!params.config.vse_enabled) {
    throw ConfigError("score_outfit_vse: parameters belong to a non-VSE model");
  }
  return score_one(params, items, mode, rng);
}

template <typename T>
std::vector<CompatibilityScore<T>> score_outfits(const ModelParams<T>& params,
                                                 std::span<const std::vector<ItemInput>> outfits,
                                                 std::size_t batch_size) {
  if (batch_size == 0) throw ParameterError("score_outfits: batch_size must be positive");
  std::vector<CompatibilityScore<T>> scores;
  scores.reserve(outfits.size());
  for (std::size_t start = 0; start < outfits.size(); start += batch_size) {
    const std::size_t end = std::min(outfits.size(), start + batch_size);
    Tape<T> tape;
    const BoundParams<T> bound = bind(tape, params, false);
    const ForwardPass<T> pass =
        forward<T>(bound, outfits.subspan(start, end - start), Mode::eval, nullptr);
    const Tensor<T>& logits = pass.logits.value();
    for (std::size_t r = 0; r < logits.rows(); ++r) {
      scores.push_back(make_score<T>(logits.row(r)));
    }
  }
  return scores;
}

#define FRN_INSTANTIATE(T)                                                             \
  template struct ModelParams<T>;                                                      \
  template ModelParams<T> allocate_params<T>(const ModelConfig&);                      \
  template ModelParams<T> init_params<T>(const ModelConfig&, Rng&);                    \
  template BoundParams<T> bind(Tape<T>&, const ModelParams<T>&, bool);                 \
  template ForwardPass<T> forward(const BoundParams<T>&,                               \
                                  std::span<const std::vector<ItemInput>>, Mode, Rng*); \
  template std::vector<T> embed_item(const ModelParams<T>&, const ItemInput&);         \
  template std::vector<T> relation(const ModelParams<T>&, std::span<const T>, Mode,    \
                                   Rng*);                                              \
  template CompatibilityScore<T> score_outfit(const ModelParams<T>&,                   \
                                              std::span<const ItemInput>, Mode, Rng*); \
  template CompatibilityScore<T> score_outfit_vse(                                     \
      const ModelParams<T>&, std::span<const ItemInput>, Mode, Rng*);                  \
  template std::vector<CompatibilityScore<T>> score_outfits(                           \
      const ModelParams<T>&, std::span<const std::vector<ItemInput>>, std::size_t);

FRN_INSTANTIATE(float)
FRN_INSTANTIATE(double)

#undef FRN_INSTANTIATE

}  // namespace frn
