#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "frn/manifest.hpp"
#include "frn/rng.hpp"

namespace frn {

// One artificial negative per positive, same size as its positive. Every item
// of a negative comes from a distinct source outfit of `pool` (never the
// paired positive itself) and no item repeats. Throws SamplingError when the
// pool cannot satisfy that.
std::vector<Outfit> sample_negatives(std::span<const Outfit> positives,
                                     std::span<const Outfit> pool, Rng& rng);

struct SplitRatios {
  double train = 0.70;
  double valid = 0.15;
  double test = 0.15;
};

struct DatasetSplits {
  std::vector<Outfit> train;
  std::vector<Outfit> valid;
  std::vector<Outfit> test;
};

// Disjoint, exhaustive, seed-deterministic partition. Split sizes are
// round(N * train), round(N * valid) and the remainder; outfits keep their
// input order inside each split.
DatasetSplits split_dataset(std::span<const Outfit> outfits, const SplitRatios& ratios,
                            std::uint64_t seed);

struct FitbQuery {
  std::string query_id;               // source outfit id
  std::vector<std::string> partial;   // outfit minus the held-out item
  std::array<std::string, 4> candidates;
  std::size_t answer_index = 0;
  std::string category;

  bool operator==(const FitbQuery&) const = default;
};

struct FitbSkip {
  std::string outfit_id;
  std::string reason;
};

struct FitbBuild {
  std::vector<FitbQuery> queries;
  std::vector<FitbSkip> skipped;
};

// One query per outfit with >= 3 items: a random item is held out and three
// distractors of its category are drawn from items of other outfits that are
// not in the partial outfit. Outfits whose category pool is too small are
// skipped, with the reason recorded.
FitbBuild build_fitb(std::span<const Outfit> positives, const ItemCatalog& items, Rng& rng);

void save_fitb(const std::filesystem::path& path, std::span<const FitbQuery> queries);
std::vector<FitbQuery> load_fitb(const std::filesystem::path& path);

}  // namespace frn
