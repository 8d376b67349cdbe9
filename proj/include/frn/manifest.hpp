#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace frn {

enum class Provenance { positive, sampled_negative, synthetic };

const char* to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

struct Outfit {
  std::string outfit_id;
  std::vector<std::string> item_ids;
  int label = 1;  // 1 compatible, 0 incompatible
  Provenance provenance = Provenance::positive;

  bool operator==(const Outfit&) const = default;
};

struct ItemMeta {
  std::optional<std::string> category;
  std::optional<std::vector<std::string>> description;  // tokens

  bool operator==(const ItemMeta&) const = default;
};

using ItemCatalog = std::map<std::string, ItemMeta, std::less<>>;

struct Manifest {
  std::vector<Outfit> outfits;
  ItemCatalog items;
};

inline constexpr std::size_t kDefaultMaxOutfitSize = 12;

// Newline-delimited JSON objects:
//   {"outfit_id": "o1", "items": ["a", "b"], "label": 1,
//    "categories": ["top", "shoes"], "descriptions": ["Red top", ["black", "boots"]],
//    "provenance": "positive"}
// label defaults to 1; categories/descriptions are optional parallel lists;
// a description is either raw text (tokenized on load) or a token list.
// Blank lines are skipped.
Manifest parse_manifest(std::istream& in, std::size_t max_items = kDefaultMaxOutfitSize,
                        const std::string& source = "manifest");
Manifest load_manifest(const std::filesystem::path& path,
                       std::size_t max_items = kDefaultMaxOutfitSize);

// Writes outfits with per-item metadata drawn from `items` when present.
void write_manifest(std::ostream& out, std::span<const Outfit> outfits,
                    const ItemCatalog& items);
void save_manifest(const std::filesystem::path& path, std::span<const Outfit> outfits,
                   const ItemCatalog& items);

// Merges `extra` into `into`; conflicting categories raise InputError.
void merge_catalog(ItemCatalog& into, const ItemCatalog& extra);

}  // namespace frn
