#include "frn/dataset.hpp"

#include "frn/errors.hpp"

namespace frn {

ItemResolver::ItemResolver(const FeatureStore& store, const ItemCatalog* catalog,
                           const Vocabulary* vocab)
    : store_(&store), vocab_(vocab) {
  if (vocab_ == nullptr) return;
  if (catalog == nullptr) throw UsageError("ItemResolver: descriptions need an item catalog");
  for (const auto& [id, meta] : *catalog) {
    if (!store.contains(id) || !meta.description) continue;
    descriptions_.emplace(id, encode_description(*meta.description, *vocab_));
  }
}

ItemInput ItemResolver::resolve(std::string_view item_id) const {
  const ItemRecord& record = store_->at(item_id);
  ItemInput input{record.item_id, record.x, {}};
  if (vocab_ != nullptr) {
    const auto it = descriptions_.find(record.item_id);
    if (it == descriptions_.end()) {
      throw InputError("item '" + record.item_id + "' has no description");
    }
    input.description = it->second;
  }
  return input;
}

std::vector<ItemInput> ItemResolver::resolve(std::span<const std::string> item_ids) const {
  std::vector<ItemInput> out;
  out.reserve(item_ids.size());
  for (const auto& id : item_ids) out.push_back(resolve(id));
  return out;
}

ExampleSet::ExampleSet(const ItemResolver& resolver, std::span<const Outfit> outfits)
    : outfits_(outfits.begin(), outfits.end()) {
  inputs_.reserve(outfits_.size());
  labels_.reserve(outfits_.size());
  for (const Outfit& o : outfits_) {
    inputs_.push_back(resolver.resolve(o.item_ids));
    labels_.push_back(o.label);
  }
}

}  // namespace frn
