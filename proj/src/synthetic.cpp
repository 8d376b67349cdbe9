#include "frn/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>

#include "frn/errors.hpp"
#include "frn/rng.hpp"
#include "frn/sampling.hpp"

namespace frn {

namespace {

constexpr const char* kStyleWords[] = {"boho",  "minimal", "sporty", "preppy",
                                       "grunge", "romantic", "street", "formal"};
constexpr const char* kCategoryWords[] = {"top", "bottom", "shoes", "bag", "outerwear",
                                          "jewelry"};
constexpr const char* kFillerWords[] = {"classic", "new", "soft", "light"};

std::string style_word(std::size_t s) {
  return s < std::size(kStyleWords) ? kStyleWords[s] : "style" + std::to_string(s);
}

std::string category_word(std::size_t c) {
  return c < std::size(kCategoryWords) ? kCategoryWords[c] : "category" + std::to_string(c);
}

std::string padded(const char* prefix, std::size_t value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%06zu", prefix, value);
  return buf;
}

}  // namespace

void SyntheticConfig::validate() const {
  if (n_styles == 0 || feature_dim == 0 || n_categories == 0 || items_per_cell == 0) {
    throw ConfigError("synthetic config: styles, dims, categories and items per cell must be positive");
  }
  if (n_train == 0 || n_valid == 0 || n_test == 0) {
    throw ConfigError("synthetic config: split counts must be positive");
  }
  if (!(sigma >= 0.0)) throw ConfigError("synthetic config: sigma must be non-negative");
  if (min_outfit_size < 2 || min_outfit_size > max_outfit_size) {
    throw ConfigError("synthetic config: outfit size range must satisfy 2 <= min <= max");
  }
  if (min_outfit_size > n_categories) {
    throw ConfigError("synthetic config: min outfit size exceeds the number of categories");
  }
}

FeatureStore SyntheticDataset::feature_store() const {
  FeatureStore store(config.feature_dim);
  for (const auto& item : items) store.add(item);
  return store;
}

SyntheticDataset gen_synthetic(const SyntheticConfig& config) {
  config.validate();
  SyntheticDataset data;
  data.config = config;
  const std::size_t K = config.n_styles, C = config.n_categories, D = config.feature_dim;

  Rng centroid_rng(derive_seed(config.seed, "centroids"));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> style_part(K, std::vector<double>(D));
  std::vector<std::vector<double>> category_part(C, std::vector<double>(D));
  for (auto& v : style_part) for (double& e : v) e = normal(centroid_rng);
  for (auto& v : category_part) for (double& e : v) e = normal(centroid_rng);
  data.centroids.resize(K * C, std::vector<double>(D));
  for (std::size_t s = 0; s < K; ++s) {
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t k = 0; k < D; ++k) {
        data.centroids[s * C + c][k] = style_part[s][k] + category_part[c][k];
      }
    }
  }

  // Item ids are assigned through a shuffled numbering so ids carry no style order.
  Rng item_rng(derive_seed(config.seed, "items"));
  const std::size_t total_items = K * C * config.items_per_cell;
  std::vector<std::size_t> numbering(total_items);
  std::iota(numbering.begin(), numbering.end(), std::size_t{0});
  shuffle(numbering, item_rng);
  std::normal_distribution<double> noise(0.0, 1.0);
  // cell_items[s * C + c] lists ids of that cell.
  std::vector<std::vector<std::string>> cell_items(K * C);
  data.items.reserve(total_items);
  std::size_t next = 0;
  for (std::size_t s = 0; s < K; ++s) {
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t i = 0; i < config.items_per_cell; ++i) {
        ItemRecord rec;
        rec.item_id = padded("item", numbering[next++]);
        rec.x.resize(D);
        for (std::size_t k = 0; k < D; ++k) {
          rec.x[k] = static_cast<float>(data.centroids[s * C + c][k] +
                                        config.sigma * noise(item_rng));
        }
        rec.category = category_word(c);
        rec.description = {style_word(s), category_word(c),
                           kFillerWords[uniform_index(item_rng, std::size(kFillerWords))]};
        data.catalog[rec.item_id] = ItemMeta{rec.category, rec.description};
        data.item_style.emplace(rec.item_id, s);
        cell_items[s * C + c].push_back(rec.item_id);
        data.items.push_back(std::move(rec));
      }
    }
  }
  std::sort(data.items.begin(), data.items.end(),
            [](const ItemRecord& a, const ItemRecord& b) { return a.item_id < b.item_id; });

  Rng outfit_rng(derive_seed(config.seed, "outfits"));
  const std::size_t max_size = std::min(config.max_outfit_size, C);
  std::vector<std::size_t> categories(C);
  std::iota(categories.begin(), categories.end(), std::size_t{0});
  std::size_t outfit_counter = 0;
  auto make_positives = [&](std::size_t count) {
    std::vector<Outfit> out;
    out.reserve(count);
    for (std::size_t o = 0; o < count; ++o) {
      const std::size_t style = uniform_index(outfit_rng, K);
      const std::size_t n =
          config.min_outfit_size + uniform_index(outfit_rng, max_size - config.min_outfit_size + 1);
      for (std::size_t k = 0; k < n; ++k) {
        std::swap(categories[k], categories[k + uniform_index(outfit_rng, C - k)]);
      }
      Outfit outfit;
      outfit.outfit_id = padded("outfit", outfit_counter++);
      outfit.label = 1;
      outfit.provenance = Provenance::synthetic;
      for (std::size_t k = 0; k < n; ++k) {
        const auto& cell = cell_items[style * C + categories[k]];
        outfit.item_ids.push_back(cell[uniform_index(outfit_rng, cell.size())]);
      }
      out.push_back(std::move(outfit));
    }
    return out;
  };
  std::vector<Outfit> train = make_positives(config.n_train);
  std::vector<Outfit> valid = make_positives(config.n_valid);
  std::vector<Outfit> test = make_positives(config.n_test);

  Rng negative_rng(derive_seed(config.seed, "negatives"));
  auto with_negatives = [&negative_rng](std::vector<Outfit> positives) {
    std::vector<Outfit> negatives = sample_negatives(positives, positives, negative_rng);
    positives.insert(positives.end(), std::make_move_iterator(negatives.begin()),
                     std::make_move_iterator(negatives.end()));
    return positives;
  };
  data.train = with_negatives(std::move(train));
  data.valid = with_negatives(std::move(valid));
  data.test = with_negatives(std::move(test));

  std::vector<Outfit> all = data.train;
  all.insert(all.end(), data.valid.begin(), data.valid.end());
  all.insert(all.end(), data.test.begin(), data.test.end());
  data.oracle_accuracy = nearest_centroid_accuracy(data, all);
  return data;
}

double nearest_centroid_accuracy(const SyntheticDataset& data,
                                 const std::vector<Outfit>& outfits) {
  if (outfits.empty()) return 0.0;
  const std::size_t C = data.config.n_categories;
  std::map<std::string, std::size_t, std::less<>> predicted_style;
  for (const ItemRecord& item : data.items) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_cell = 0;
    for (std::size_t cell = 0; cell < data.centroids.size(); ++cell) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < item.x.size(); ++k) {
        const double diff = item.x[k] - data.centroids[cell][k];
        d2 += diff * diff;
      }
      if (d2 < best) {
        best = d2;
        best_cell = cell;
      }
    }
    predicted_style.emplace(item.item_id, best_cell / C);
  }
  std::size_t correct = 0;
  for (const Outfit& o : outfits) {
    const std::size_t first = predicted_style.at(o.item_ids.front());
    const bool single = std::all_of(o.item_ids.begin(), o.item_ids.end(), [&](const auto& id) {
      return predicted_style.at(id) == first;
    });
    if ((single ? 1 : 0) == o.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(outfits.size());
}

}  // namespace frn
