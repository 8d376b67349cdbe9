#include "frn/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <unordered_set>

#include <json.hpp>

#include "frn/errors.hpp"

namespace frn {

std::vector<Outfit> sample_negatives(std::span<const Outfit> positives,
                                     std::span<const Outfit> pool, Rng& rng) {
  if (pool.size() < 2) {
    throw SamplingError("sample_negatives: the pool must span at least 2 source outfits");
  }
  std::vector<std::size_t> sources(pool.size());
  std::iota(sources.begin(), sources.end(), std::size_t{0});

  std::vector<Outfit> negatives;
  negatives.reserve(positives.size());
  for (const Outfit& positive : positives) {
    const std::size_t n = positive.item_ids.size();
    Outfit negative;
    negative.outfit_id = positive.outfit_id + "-neg";
    negative.label = 0;
    negative.provenance = Provenance::sampled_negative;
    std::unordered_set<std::string> chosen;
    // Partial Fisher-Yates over source outfits; each source contributes at most one item.
    for (std::size_t k = 0; k < sources.size() && negative.item_ids.size() < n; ++k) {
      std::swap(sources[k], sources[k + uniform_index(rng, sources.size() - k)]);
      const Outfit& source = pool[sources[k]];
      if (source.outfit_id == positive.outfit_id) continue;
      std::vector<const std::string*> available;
      for (const auto& id : source.item_ids) {
        if (!chosen.contains(id)) available.push_back(&id);
      }
      if (available.empty()) continue;
      const std::string& pick = *available[uniform_index(rng, available.size())];
      chosen.insert(pick);
      negative.item_ids.push_back(pick);
    }
    if (negative.item_ids.size() < n) {
      throw SamplingError("sample_negatives: cannot draw " + std::to_string(n) +
                          " items from distinct source outfits for '" +
                          positive.outfit_id + "' (pool of " +
                          std::to_string(pool.size()) + " outfits)");
    }
    negatives.push_back(std::move(negative));
  }
  return negatives;
}

DatasetSplits split_dataset(std::span<const Outfit> outfits, const SplitRatios& ratios,
                            std::uint64_t seed) {
  const double total = ratios.train + ratios.valid + ratios.test;
  if (ratios.train <= 0.0 || ratios.valid < 0.0 || ratios.test < 0.0 ||
      std::abs(total - 1.0) > 1e-9) {
    throw ParameterError("split_dataset: ratios must be non-negative, train positive, and sum to 1");
  }
  const std::size_t n = outfits.size();
  const auto n_train = std::min<std::size_t>(n, std::llround(n * ratios.train));
  const auto n_valid = std::min<std::size_t>(n - n_train, std::llround(n * ratios.valid));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  shuffle(order, rng);

  auto take = [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> idx(order.begin() + begin, order.begin() + end);
    std::sort(idx.begin(), idx.end());
    std::vector<Outfit> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(outfits[i]);
    return out;
  };
  DatasetSplits splits;
  splits.train = take(0, n_train);
  splits.valid = take(n_train, n_train + n_valid);
  splits.test = take(n_train + n_valid, n);
  return splits;
}

FitbBuild build_fitb(std::span<const Outfit> positives, const ItemCatalog& items, Rng& rng) {
  auto category_of = [&items](const std::string& id) -> const std::string& {
    const auto it = items.find(id);
    if (it == items.end() || !it->second.category) {
      throw InputError("build_fitb: item '" + id + "' has no category");
    }
    return *it->second.category;
  };

  // Distinct items per category, in first-seen order.
  std::map<std::string, std::vector<std::string>> by_category;
  std::unordered_set<std::string> seen;
  for (const Outfit& o : positives) {
    for (const auto& id : o.item_ids) {
      const std::string& category = category_of(id);
      if (seen.insert(id).second) by_category[category].push_back(id);
    }
  }

  FitbBuild result;
  for (const Outfit& o : positives) {
    if (o.item_ids.size() < 3) {
      result.skipped.push_back({o.outfit_id, "outfit has fewer than 3 items"});
      continue;
    }
    const std::size_t held = uniform_index(rng, o.item_ids.size());
    const std::string& answer = o.item_ids[held];
    const std::string& category = category_of(answer);
    const std::unordered_set<std::string> in_outfit(o.item_ids.begin(), o.item_ids.end());
    std::vector<const std::string*> pool;
    for (const auto& id : by_category[category]) {
      if (!in_outfit.contains(id)) pool.push_back(&id);
    }
    if (pool.size() < 3) {
      result.skipped.push_back(
          {o.outfit_id, "category '" + category + "' has fewer than 4 distinct items"});
      continue;
    }
    for (std::size_t k = 0; k < 3; ++k) {
      std::swap(pool[k], pool[k + uniform_index(rng, pool.size() - k)]);
    }
    FitbQuery q;
    q.query_id = o.outfit_id;
    q.category = category;
    for (std::size_t i = 0; i < o.item_ids.size(); ++i) {
      if (i != held) q.partial.push_back(o.item_ids[i]);
    }
    q.answer_index = uniform_index(rng, 4);
    std::size_t next = 0;
    for (std::size_t slot = 0; slot < 4; ++slot) {
      q.candidates[slot] = slot == q.answer_index ? answer : *pool[next++];
    }
    result.queries.push_back(std::move(q));
  }
  return result;
}

void save_fitb(const std::filesystem::path& path, std::span<const FitbQuery> queries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const FitbQuery& q : queries) {
    nlohmann::json j;
    j["query_id"] = q.query_id;
    j["partial"] = q.partial;
    j["candidates"] = q.candidates;
    j["answer_index"] = q.answer_index;
    j["category"] = q.category;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<FitbQuery> load_fitb(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<FitbQuery> queries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      FitbQuery q;
      q.query_id = j.at("query_id").get<std::string>();
      q.partial = j.at("partial").get<std::vector<std::string>>();
      const auto candidates = j.at("candidates").get<std::vector<std::string>>();
      if (candidates.size() != 4) {
        throw ManifestError(path.string() + ":" + std::to_string(line_no) +
                                ": a query needs exactly 4 candidates",
                            line_no);
      }
      std::copy(candidates.begin(), candidates.end(), q.candidates.begin());
      q.answer_index = j.at("answer_index").get<std::size_t>();
      if (q.answer_index > 3) {
        throw ManifestError(path.string() + ":" + std::to_string(line_no) +
                                ": answer_index must be 0..3",
                            line_no);
      }
      q.category = j.value("category", "");
      queries.push_back(std::move(q));
    } catch (const nlohmann::json::exception& e) {
      throw ManifestError(path.string() + ":" + std::to_string(line_no) +
                              ": malformed query: " + e.what(),
                          line_no);
    }
  }
  return queries;
}

}  // namespace frn
