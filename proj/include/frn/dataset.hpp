#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "frn/features.hpp"
#include "frn/manifest.hpp"
#include "frn/model.hpp"
#include "frn/vocabulary.hpp"

namespace frn {

// Maps item ids to model inputs. With a vocabulary, every resolved item gets
// its multi-hot description from the catalog (missing description -> InputError).
// Holds references to `store`; the store must outlive the resolver and
// everything resolved from it.
class ItemResolver {
 public:
  ItemResolver(const FeatureStore& store, const ItemCatalog* catalog,
               const Vocabulary* vocab);

  ItemInput resolve(std::string_view item_id) const;
  std::vector<ItemInput> resolve(std::span<const std::string> item_ids) const;
  bool with_descriptions() const { return vocab_ != nullptr; }

 private:
  const FeatureStore* store_;
  const Vocabulary* vocab_;
  std::unordered_map<std::string, std::vector<float>> descriptions_;
};

// Labeled outfits resolved against a store, ready for batching.
class ExampleSet {
 public:
  ExampleSet(const ItemResolver& resolver, std::span<const Outfit> outfits);

  std::size_t size() const { return outfits_.size(); }
  bool empty() const { return outfits_.empty(); }
  const Outfit& outfit(std::size_t i) const { return outfits_[i]; }
  const std::vector<Outfit>& outfits() const { return outfits_; }
  const std::vector<std::vector<ItemInput>>& inputs() const { return inputs_; }
  const std::vector<int>& labels() const { return labels_; }

 private:
  std::vector<Outfit> outfits_;
  std::vector<std::vector<ItemInput>> inputs_;
  std::vector<int> labels_;
};

}  // namespace frn
