#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace frn {

// Lowercases ASCII letters and splits on every run of characters outside
// [a-z0-9]. "Red-Dress 2019" -> {"red", "dress", "2019"}.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  bool empty() const { return tokens_.empty(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(std::size_t index) const { return tokens_.at(index); }
  std::optional<std::size_t> lookup(std::string_view token) const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Top `max_size` tokens by frequency with count >= min_count; ties broken
// lexicographically.
Vocabulary build_vocabulary(std::span<const std::vector<std::string>> token_lists,
                            std::size_t max_size = 5000, std::size_t min_count = 2);
Vocabulary build_vocabulary_from_text(std::span<const std::string> documents,
                                      std::size_t max_size = 5000,
                                      std::size_t min_count = 2);

// Presence multi-hot; out-of-vocabulary tokens are ignored.
std::vector<float> encode_description(std::span<const std::string> tokens,
                                      const Vocabulary& vocab);

// One token per line; index = line number.
void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path);
Vocabulary load_vocabulary(const std::filesystem::path& path);

}  // namespace frn
