#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "frn/features.hpp"
#include "frn/manifest.hpp"

namespace frn {

struct SyntheticConfig {
  std::size_t n_styles = 8;
  std::size_t feature_dim = 32;
  std::size_t n_categories = 6;
  double sigma = 0.1;
  std::size_t min_outfit_size = 2;
  std::size_t max_outfit_size = 8;  // capped at n_categories
  std::size_t items_per_cell = 40;  // items per (style, category)
  std::size_t n_train = 5000;       // positives per split
  std::size_t n_valid = 1000;
  std::size_t n_test = 1000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticDataset {
  SyntheticConfig config;
  std::vector<ItemRecord> items;  // category and description filled in
  ItemCatalog catalog;
  std::map<std::string, std::size_t, std::less<>> item_style;
  std::vector<std::vector<double>> centroids;  // [style * n_categories + category]
  // Positives followed by their sampled negatives, per split.
  std::vector<Outfit> train;
  std::vector<Outfit> valid;
  std::vector<Outfit> test;
  // Accuracy of the nearest-centroid single-style test over all splits.
  double oracle_accuracy = 0.0;

  FeatureStore feature_store() const;
};

// Style s and category c have centroid a_s + b_c with a_s, b_c ~ N(0, I_D);
// each item is its cell centroid plus N(0, sigma^2) noise. A positive picks
// one style, distinct categories, and one item per category. Descriptions
// are "<style word> <category word> <filler>". Deterministic in config.seed.
SyntheticDataset gen_synthetic(const SyntheticConfig& config);

// Fraction of outfits where "all items share the style of their nearest
// centroid" agrees with the label.
double nearest_centroid_accuracy(const SyntheticDataset& data,
                                 const std::vector<Outfit>& outfits);

}  // namespace frn
