#include "frn/features.hpp"

#include "frn/binary_io.hpp"
#include "frn/errors.hpp"

namespace frn {

void FeatureStore::add(ItemRecord record) {
  if (records_.empty() && dim_ == 0) dim_ = record.x.size();
  if (record.x.size() != dim_) {
    throw DimensionError("item '" + record.item_id + "' has " +
                         std::to_string(record.x.size()) + " features, store dim is " +
                         std::to_string(dim_));
  }
  if (index_.contains(record.item_id)) {
    throw DuplicateIdError("duplicate item id '" + record.item_id + "'");
  }
  index_.emplace(record.item_id, records_.size());
  records_.push_back(std::move(record));
}

const ItemRecord* FeatureStore::find(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &records_[it->second];
}

const ItemRecord& FeatureStore::at(std::string_view id) const {
  const ItemRecord* r = find(id);
  if (r == nullptr) throw InputError("item '" + std::string(id) + "' not in feature store");
  return *r;
}

void write_features(std::span<const ItemRecord> records, const std::filesystem::path& path,
                    std::size_t dim_if_empty) {
  const std::size_t dim = records.empty() ? dim_if_empty : records.front().x.size();
  io::Writer w;
  w.put_bytes(kFeatureMagic, 4);
  w.put(kFeatureVersion);
  w.put(std::uint16_t{0});
  w.put(static_cast<std::uint32_t>(dim));
  w.put(static_cast<std::uint64_t>(records.size()));
  for (const ItemRecord& r : records) {
    if (r.x.size() != dim) {
      throw DimensionError("write_features: item '" + r.item_id + "' has " +
                           std::to_string(r.x.size()) + " features, expected " +
                           std::to_string(dim));
    }
    w.put_string16(r.item_id);
    w.put_bytes(r.x.data(), r.x.size() * sizeof(float));
  }
  w.save(path);
}

FeatureStore read_features(const std::filesystem::path& path) {
  io::Reader r = io::Reader::load(path);
  char magic[4];
  if (!r.get_bytes(magic, 4) || std::memcmp(magic, kFeatureMagic, 4) != 0) {
    throw BadMagicError(path.string() + ": not an FRNF feature file");
  }
  std::uint16_t version = 0, reserved = 0;
  std::uint32_t dim = 0;
  std::uint64_t count = 0;
  if (!r.get(version)) throw TruncatedError(path.string() + ": truncated header", 0);
  if (version != kFeatureVersion) {
    throw VersionError(path.string() + ": unsupported FRNF version " + std::to_string(version));
  }
  if (!r.get(reserved) || !r.get(dim) || !r.get(count)) {
    throw TruncatedError(path.string() + ": truncated header", 0);
  }
  FeatureStore store(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    ItemRecord rec;
    rec.x.resize(dim);
    if (!r.get_string16(rec.item_id) || !r.get_bytes(rec.x.data(), dim * sizeof(float))) {
      throw TruncatedError(path.string() + ": truncated at record " + std::to_string(i) +
                               " of " + std::to_string(count),
                           static_cast<std::size_t>(i));
    }
    store.add(std::move(rec));
  }
  return store;
}

}  // namespace frn
