#include "frn/manifest.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include <json.hpp>

#include "frn/errors.hpp"
#include "frn/vocabulary.hpp"

namespace frn {

using nlohmann::json;

const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::positive: return "positive";
    case Provenance::sampled_negative: return "sampled-negative";
    case Provenance::synthetic: return "synthetic";
  }
  return "positive";
}

Provenance provenance_from_string(const std::string& s) {
  if (s == "positive") return Provenance::positive;
  if (s == "sampled-negative") return Provenance::sampled_negative;
  if (s == "synthetic") return Provenance::synthetic;
  throw InputError("unknown provenance '" + s + "'");
}

namespace {

void merge_item(ItemCatalog& catalog, const std::string& id, const ItemMeta& meta,
                const std::string& where) {
  auto [it, inserted] = catalog.try_emplace(id, meta);
  if (inserted) return;
  ItemMeta& existing = it->second;
  if (meta.category) {
    if (existing.category && *existing.category != *meta.category) {
      throw InputError(where + ": item '" + id + "' has conflicting categories '" +
                       *existing.category + "' and '" + *meta.category + "'");
    }
    existing.category = meta.category;
  }
  if (meta.description && !existing.description) existing.description = meta.description;
}

}  // namespace

void merge_catalog(ItemCatalog& into, const ItemCatalog& extra) {
  for (const auto& [id, meta] : extra) merge_item(into, id, meta, "catalog merge");
}

Manifest parse_manifest(std::istream& in, std::size_t max_items, const std::string& source) {
  Manifest manifest;
  std::set<std::string, std::less<>> seen_outfits;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    auto fail = [&](const std::string& why) -> ManifestError {
      return ManifestError(where + ": " + why, line_no);
    };
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw fail(std::string("malformed line: ") + e.what());
    }
    if (!j.is_object()) throw fail("record is not an object");
    Outfit outfit;
    try {
      if (!j.contains("outfit_id") || !j["outfit_id"].is_string()) {
        throw fail("missing string field 'outfit_id'");
      }
      outfit.outfit_id = j["outfit_id"].get<std::string>();
      if (!j.contains("items") || !j["items"].is_array()) {
        throw fail("missing list field 'items'");
      }
      outfit.item_ids = j["items"].get<std::vector<std::string>>();
      if (j.contains("label")) {
        const int label = j["label"].get<int>();
        if (label != 0 && label != 1) throw fail("label must be 0 or 1");
        outfit.label = label;
      }
      outfit.provenance = outfit.label == 1 ? Provenance::positive : Provenance::sampled_negative;
      if (j.contains("provenance")) {
        outfit.provenance = provenance_from_string(j["provenance"].get<std::string>());
      }
    } catch (const json::exception& e) {
      throw fail(std::string("bad field type: ") + e.what());
    } catch (const InputError& e) {
      throw fail(e.what());
    }

    const std::size_t n = outfit.item_ids.size();
    if (n < 2) {
      throw fail("outfit '" + outfit.outfit_id + "' has " + std::to_string(n) +
                 " item(s); an outfit needs at least 2 items");
    }
    if (n > max_items) {
      throw fail("outfit '" + outfit.outfit_id + "' has " + std::to_string(n) +
                 " items, limit is " + std::to_string(max_items));
    }
    std::set<std::string_view> unique(outfit.item_ids.begin(), outfit.item_ids.end());
    if (unique.size() != n) throw fail("outfit '" + outfit.outfit_id + "' repeats an item");
    if (!seen_outfits.insert(outfit.outfit_id).second) {
      throw fail("duplicate outfit_id '" + outfit.outfit_id + "'");
    }

    std::vector<ItemMeta> metas(n);
    try {
      if (j.contains("categories")) {
        const auto& cats = j["categories"];
        if (!cats.is_array() || cats.size() != n) {
          throw fail("'categories' must be a list parallel to 'items'");
        }
        for (std::size_t i = 0; i < n; ++i) {
          if (!cats[i].is_null()) metas[i].category = cats[i].get<std::string>();
        }
      }
      if (j.contains("descriptions")) {
        const auto& descs = j["descriptions"];
        if (!descs.is_array() || descs.size() != n) {
          throw fail("'descriptions' must be a list parallel to 'items'");
        }
        for (std::size_t i = 0; i < n; ++i) {
          if (descs[i].is_string()) {
            metas[i].description = tokenize(descs[i].get<std::string>());
          } else if (descs[i].is_array()) {
            metas[i].description = descs[i].get<std::vector<std::string>>();
          } else if (!descs[i].is_null()) {
            throw fail("description must be text or a token list");
          }
        }
      }
    } catch (const json::exception& e) {
      throw fail(std::string("bad field type: ") + e.what());
    }
    try {
      for (std::size_t i = 0; i < n; ++i) {
        merge_item(manifest.items, outfit.item_ids[i], metas[i], where);
      }
    } catch (const InputError& e) {
      throw fail(e.what());
    }
    manifest.outfits.push_back(std::move(outfit));
  }
  return manifest;
}

Manifest load_manifest(const std::filesystem::path& path, std::size_t max_items) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_manifest(in, max_items, path.string());
}

void write_manifest(std::ostream& out, std::span<const Outfit> outfits,
                    const ItemCatalog& items) {
  for (const Outfit& o : outfits) {
    json j;
    j["outfit_id"] = o.outfit_id;
    j["items"] = o.item_ids;
    j["label"] = o.label;
    j["provenance"] = to_string(o.provenance);
    bool any_category = false, any_description = false;
    json cats = json::array(), descs = json::array();
    for (const auto& id : o.item_ids) {
      const auto it = items.find(id);
      const ItemMeta* meta = it == items.end() ? nullptr : &it->second;
      if (meta && meta->category) {
        cats.push_back(*meta->category);
        any_category = true;
      } else {
        cats.push_back(nullptr);
      }
      if (meta && meta->description) {
        descs.push_back(*meta->description);
        any_description = true;
      } else {
        descs.push_back(nullptr);
      }
    }
    if (any_category) j["categories"] = std::move(cats);
    if (any_description) j["descriptions"] = std::move(descs);
    out << j.dump() << '\n';
  }
}

void save_manifest(const std::filesystem::path& path, std::span<const Outfit> outfits,
                   const ItemCatalog& items) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_manifest(out, outfits, items);
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace frn
