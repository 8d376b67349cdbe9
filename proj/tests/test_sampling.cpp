#include <algorithm>
#include <map>
#include <set>

#include "doctest.h"
#include "frn/errors.hpp"
#include "frn/sampling.hpp"
#include "test_util.hpp"

using namespace frn;
using frn::test::TempDir;

namespace {

std::vector<Outfit> make_positives(std::size_t count, Rng& rng) {
  std::vector<Outfit> out;
  std::size_t next_item = 0;
  for (std::size_t i = 0; i < count; ++i) {
    Outfit o;
    o.outfit_id = "o" + std::to_string(i);
    const std::size_t n = 2 + uniform_index(rng, 11);
    for (std::size_t k = 0; k < n; ++k) o.item_ids.push_back("i" + std::to_string(next_item++));
    out.push_back(std::move(o));
  }
  return out;
}

std::map<std::string, std::string> source_of(const std::vector<Outfit>& outfits) {
  std::map<std::string, std::string> out;
  for (const auto& o : outfits) {
    for (const auto& id : o.item_ids) out[id] = o.outfit_id;
  }
  return out;
}

// Outfits of three items, one per category, with `per_category` items per category.
std::pair<std::vector<Outfit>, ItemCatalog> categorized(std::size_t count,
                                                        std::size_t per_category, Rng& rng) {
  const char* cats[] = {"top", "bottom", "shoes"};
  ItemCatalog catalog;
  for (const char* c : cats) {
    for (std::size_t i = 0; i < per_category; ++i) {
      catalog[std::string(c) + std::to_string(i)] = {std::string(c), std::nullopt};
    }
  }
  std::vector<Outfit> outfits;
  for (std::size_t i = 0; i < count; ++i) {
    Outfit o;
    o.outfit_id = "o" + std::to_string(i);
    for (const char* c : cats) {
      o.item_ids.push_back(std::string(c) + std::to_string(uniform_index(rng, per_category)));
    }
    outfits.push_back(std::move(o));
  }
  return {outfits, catalog};
}

}  // namespace

TEST_CASE("sample_negatives: one per positive, same sizes, distinct sources") {
  Rng rng(1);
  const auto positives = make_positives(100, rng);
  Rng neg_rng(2);
  const auto negatives = sample_negatives(positives, positives, neg_rng);
  REQUIRE(negatives.size() == 100);
  const auto source = source_of(positives);
  for (std::size_t i = 0; i < 100; ++i) {
    const auto& neg = negatives[i];
    CHECK(neg.label == 0);
    CHECK(neg.provenance == Provenance::sampled_negative);
    CHECK(neg.item_ids.size() == positives[i].item_ids.size());
    std::set<std::string> items(neg.item_ids.begin(), neg.item_ids.end());
    CHECK(items.size() == neg.item_ids.size());
    std::set<std::string> sources;
    for (const auto& id : neg.item_ids) {
      sources.insert(source.at(id));
      CHECK(source.at(id) != positives[i].outfit_id);
    }
    CHECK(sources.size() == neg.item_ids.size());
  }
}

TEST_CASE("sample_negatives: deterministic in the seed") {
  Rng rng(1);
  const auto positives = make_positives(50, rng);
  Rng a(7), b(7), c(8);
  const auto na = sample_negatives(positives, positives, a);
  CHECK(na == sample_negatives(positives, positives, b));
  CHECK_FALSE(na == sample_negatives(positives, positives, c));
}

TEST_CASE("sample_negatives: pool too small") {
  Rng rng(3);
  std::vector<Outfit> one{{"o", {"a", "b"}, 1, Provenance::positive}};
  CHECK_THROWS_AS(sample_negatives(one, one, rng), SamplingError);
  // Three outfits cannot supply a 3-item negative that avoids its own positive.
  std::vector<Outfit> three{{"a", {"a1", "a2", "a3"}, 1, Provenance::positive},
                            {"b", {"b1", "b2"}, 1, Provenance::positive},
                            {"c", {"c1", "c2"}, 1, Provenance::positive}};
  CHECK_THROWS_AS(sample_negatives(three, three, rng), SamplingError);
}

TEST_CASE("split_dataset: sizes, disjointness, determinism") {
  Rng rng(4);
  const auto outfits = make_positives(1000, rng);
  const auto s = split_dataset(outfits, {}, 123);
  CHECK(s.train.size() == 700);
  CHECK(s.valid.size() == 150);
  CHECK(s.test.size() == 150);
  std::multiset<std::string> ids;
  for (const auto* part : {&s.train, &s.valid, &s.test}) {
    for (const auto& o : *part) ids.insert(o.outfit_id);
  }
  std::multiset<std::string> all;
  for (const auto& o : outfits) all.insert(o.outfit_id);
  CHECK(ids == all);

  const auto again = split_dataset(outfits, {}, 123);
  CHECK(again.train == s.train);
  CHECK(again.test == s.test);
  CHECK_FALSE(split_dataset(outfits, {}, 124).train == s.train);
}

TEST_CASE("split_dataset: full-size dataset proportions") {
  std::vector<Outfit> outfits(49740);
  for (std::size_t i = 0; i < outfits.size(); ++i) {
    outfits[i] = {"o" + std::to_string(i), {"a", "b"}, 1, Provenance::positive};
  }
  const auto s = split_dataset(outfits, {}, 1);
  CHECK(s.train.size() == 34818);
  CHECK(s.valid.size() == 7461);
  CHECK(s.test.size() == 7461);
}

TEST_CASE("split_dataset: degenerate ratios") {
  std::vector<Outfit> outfits(10, Outfit{"o", {"a", "b"}, 1, Provenance::positive});
  CHECK_THROWS_AS(split_dataset(outfits, {0.5, 0.5, 0.5}, 1), ParameterError);
  CHECK_THROWS_AS(split_dataset(outfits, {0.0, 0.5, 0.5}, 1), ParameterError);
  CHECK_THROWS_AS(split_dataset(outfits, {1.2, -0.1, -0.1}, 1), ParameterError);
}

TEST_CASE("split then sample: negatives stay inside their split") {
  Rng rng(5);
  const auto outfits = make_positives(300, rng);
  const auto s = split_dataset(outfits, {}, 9);
  Rng neg(10);
  for (const auto* part : {&s.train, &s.valid, &s.test}) {
    std::set<std::string> allowed;
    for (const auto& o : *part) allowed.insert(o.item_ids.begin(), o.item_ids.end());
    for (const auto& n : sample_negatives(*part, *part, neg)) {
      for (const auto& id : n.item_ids) CHECK(allowed.contains(id));
    }
  }
}

TEST_CASE("build_fitb: construction on a shirt/jeans/shoes outfit") {
  ItemCatalog catalog;
  std::vector<Outfit> outfits{{"target", {"shirtA", "jeansB", "shoesC"}, 1, Provenance::positive}};
  for (int i = 0; i < 4; ++i) {
    const std::string k = std::to_string(i);
    outfits.push_back({"other" + k, {"shirt" + k, "jeans" + k, "shoes" + k}, 1,
                       Provenance::positive});
  }
  for (const auto& o : outfits) {
    for (const auto& id : o.item_ids) {
      const std::string cat = id.starts_with("shirt") ? "top"
                              : id.starts_with("jeans") ? "bottom"
                                                        : "shoes";
      catalog[id] = {cat, std::nullopt};
    }
  }
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto built = build_fitb(outfits, catalog, rng);
    REQUIRE(built.queries.size() == outfits.size());
    const auto& q = built.queries.front();
    CHECK(q.query_id == "target");
    const std::string& answer = q.candidates[q.answer_index];
    CHECK(q.partial.size() == 2);
    CHECK(std::find(q.partial.begin(), q.partial.end(), answer) == q.partial.end());
    std::set<std::string> candidates(q.candidates.begin(), q.candidates.end());
    CHECK(candidates.size() == 4);
    for (const auto& c : q.candidates) {
      CHECK(*catalog.at(c).category == q.category);
      CHECK(std::find(q.partial.begin(), q.partial.end(), c) == q.partial.end());
    }
    std::set<std::string> original{"shirtA", "jeansB", "shoesC"};
    CHECK(original.contains(answer));
    std::size_t from_outfit = 0;
    for (const auto& c : q.candidates) from_outfit += original.contains(c);
    CHECK(from_outfit == 1);
  }
}

TEST_CASE("build_fitb: answer position is uniform") {
  Rng rng(6);
  auto [outfits, catalog] = categorized(12000, 50, rng);
  Rng q_rng(7);
  const auto built = build_fitb(outfits, catalog, q_rng);
  REQUIRE(built.queries.size() >= 10000);
  std::array<double, 4> counts{};
  for (const auto& q : built.queries) counts[q.answer_index] += 1.0;
  const double expected = static_cast<double>(built.queries.size()) / 4.0;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 16.27);  // 3 degrees of freedom, p = 0.001
}

TEST_CASE("build_fitb: small outfits and thin categories are skipped") {
  ItemCatalog catalog{{"a", {std::string("x"), std::nullopt}},
                      {"b", {std::string("y"), std::nullopt}},
                      {"c", {std::string("z"), std::nullopt}},
                      {"d", {std::string("x"), std::nullopt}}};
  std::vector<Outfit> outfits{{"tiny", {"a", "b"}, 1, Provenance::positive},
                              {"unique", {"a", "b", "c"}, 1, Provenance::positive},
                              {"other", {"d", "b"}, 1, Provenance::positive}};
  Rng rng(8);
  const auto built = build_fitb(outfits, catalog, rng);
  CHECK(built.queries.empty());
  REQUIRE(built.skipped.size() == 3);
  CHECK(built.skipped[0].outfit_id == "tiny");
  CHECK(built.skipped[1].outfit_id == "unique");
  CHECK(built.skipped[1].reason.find("fewer than 4") != std::string::npos);

  ItemCatalog missing{{"a", {std::nullopt, std::nullopt}}};
  std::vector<Outfit> one{{"o", {"a", "b", "c"}, 1, Provenance::positive}};
  CHECK_THROWS_AS(build_fitb(one, missing, rng), InputError);
}

TEST_CASE("build_fitb: deterministic, and queries round-trip through a file") {
  Rng rng(9);
  auto [outfits, catalog] = categorized(200, 20, rng);
  Rng a(1), b(1);
  const auto qa = build_fitb(outfits, catalog, a).queries;
  CHECK(qa == build_fitb(outfits, catalog, b).queries);
  TempDir dir("fitb");
  save_fitb(dir / "q.jsonl", qa);
  CHECK(load_fitb(dir / "q.jsonl") == qa);
}
