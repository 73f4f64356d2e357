#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nymkit {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

inline std::string to_string(ByteView b) {
  return std::string(reinterpret_cast<const char*>(b.data()), b.size());
}

inline ByteView as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

// True if `needle` occurs anywhere in `haystack`.
bool contains(ByteView haystack, ByteView needle);

std::string to_hex(ByteView b);

// Overwrites the buffer with zeros in a way the optimizer cannot elide.
void secure_zero(void* data, std::size_t size);

inline void secure_zero(Bytes& b) { secure_zero(b.data(), b.size()); }
inline void secure_zero(std::string& s) { secure_zero(s.data(), s.size()); }

// Big-endian append/read helpers used by every on-disk format in the project.
class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void raw(ByteView b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void raw(std::string_view s) { raw(as_bytes(s)); }
  // u32 length prefix followed by the bytes.
  void str(std::string_view s);
  void blob(ByteView b);

  std::size_t size() const { return out_.size(); }
  Bytes& buffer() { return out_; }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

// Throws Error(kBadFormat) on any attempt to read past the end.
class Reader {
 public:
  explicit Reader(ByteView in) : in_(in) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  ByteView raw(std::size_t n);
  std::string str();
  Bytes blob();

  std::size_t remaining() const { return in_.size() - pos_; }
  std::size_t position() const { return pos_; }
  bool done() const { return pos_ == in_.size(); }

 private:
  ByteView in_;
  std::size_t pos_ = 0;
};

}  // namespace nymkit
