#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include "frn/errors.hpp"

namespace frn::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

// Appends fixed-width little-endian values to a byte buffer.
class Writer {
 public:
  template <typename V>
    requires std::is_arithmetic_v<V>
  void put(V value) {
    const auto* p = reinterpret_cast<const char*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(V));
  }

  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }

  void put_string16(const std::string& s) {
    if (s.size() > UINT16_MAX) throw IoError("string longer than 65535 bytes: " + s.substr(0, 32));
    put(static_cast<std::uint16_t>(s.size()));
    put_bytes(s.data(), s.size());
  }

  const std::vector<char>& bytes() const { return bytes_; }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(bytes_.data(), static_cast<std::streamsize>(bytes_.size()));
    if (!out) throw IoError("write failed: " + path.string());
  }

 private:
  std::vector<char> bytes_;
};

// Bounds-checked cursor over a byte buffer. Reads past the end return false
// so callers can raise a format-specific truncation error.
class Reader {
 public:
  explicit Reader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

  static Reader load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    return Reader(std::move(bytes));
  }

  template <typename V>
    requires std::is_arithmetic_v<V>
  bool get(V& value) {
    if (remaining() < sizeof(V)) return false;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(V));
    pos_ += sizeof(V);
    return true;
  }

  bool get_bytes(void* dst, std::size_t n) {
    if (remaining() < n) return false;
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
    return true;
  }

  bool get_string16(std::string& s) {
    std::uint16_t len = 0;
    if (!get(len) || remaining() < len) return false;
    s.assign(bytes_.data() + pos_, len);
    pos_ += len;
    return true;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace frn::io
