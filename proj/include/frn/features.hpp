#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace frn {

struct ItemRecord {
  std::string item_id;
  std::vector<float> x;
  std::optional<std::string> category;
  std::vector<std::string> description;  // tokens

  bool operator==(const ItemRecord&) const = default;
};

// Immutable-after-load collection of item feature vectors with a uniform dimension.
class FeatureStore {
 public:
  FeatureStore() = default;
  explicit FeatureStore(std::size_t dim) : dim_(dim) {}

  // Throws DuplicateIdError or DimensionError.
  void add(ItemRecord record);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const std::vector<ItemRecord>& records() const { return records_; }

  const ItemRecord* find(std::string_view id) const;
  // Throws InputError naming the missing id.
  const ItemRecord& at(std::string_view id) const;
  bool contains(std::string_view id) const { return find(id) != nullptr; }

 private:
  std::size_t dim_ = 0;
  std::vector<ItemRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

// FRNF, little-endian:
//   "FRNF" | version u16 = 1 | reserved u16 = 0 | dim u32 | count u64 |
//   count x [id_len u16 | id bytes | dim x f32]
// Only ids and vectors are persisted.
inline constexpr char kFeatureMagic[4] = {'F', 'R', 'N', 'F'};
inline constexpr std::uint16_t kFeatureVersion = 1;

void write_features(std::span<const ItemRecord> records, const std::filesystem::path& path,
                    std::size_t dim_if_empty = 0);
FeatureStore read_features(const std::filesystem::path& path);

}  // namespace frn
