#include "frn/vocabulary.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "frn/errors.hpp"

namespace frn {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
      current.push_back(static_cast<char>(c));
    } else if (c >= 'A' && c <= 'Z') {
      current.push_back(static_cast<char>(c - 'A' + 'a'));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) {
      throw InputError("vocabulary: duplicate token '" + tokens_[i] + "'");
    }
  }
}

std::optional<std::size_t> Vocabulary::lookup(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Vocabulary build_vocabulary(std::span<const std::vector<std::string>> token_lists,
                            std::size_t max_size, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& tokens : token_lists) {
    for (const auto& t : tokens) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [token, count] : counts) {
    if (count >= min_count) ranked.emplace_back(token, count);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > max_size) ranked.resize(max_size);
  std::vector<std::string> tokens;
  tokens.reserve(ranked.size());
  for (auto& [token, count] : ranked) tokens.push_back(std::move(token));
  return Vocabulary(std::move(tokens));
}

Vocabulary build_vocabulary_from_text(std::span<const std::string> documents,
                                      std::size_t max_size, std::size_t min_count) {
  std::vector<std::vector<std::string>> lists;
  lists.reserve(documents.size());
  for (const auto& doc : documents) lists.push_back(tokenize(doc));
  return build_vocabulary(lists, max_size, min_count);
}

std::vector<float> encode_description(std::span<const std::string> tokens,
                                      const Vocabulary& vocab) {
  std::vector<float> d(vocab.size(), 0.0f);
  for (const auto& t : tokens) {
    if (const auto index = vocab.lookup(t)) d[*index] = 1.0f;
  }
  return d;
}

void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& t : vocab.tokens()) out << t << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw InputError(path.string() + ": empty token at line " +
                                       std::to_string(tokens.size() + 1));
    tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

}  // namespace frn
