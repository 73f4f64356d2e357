#include "nymkit/common/bytes.h"

#include <sodium.h>

#include <algorithm>

#include "nymkit/common/error.h"

namespace nymkit {

bool contains(ByteView haystack, ByteView needle) {
  if (needle.empty()) return true;
  return std::search(haystack.begin(), haystack.end(), needle.begin(),
                     needle.end()) != haystack.end();
}

std::string to_hex(ByteView b) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(b.size() * 2);
  for (std::uint8_t c : b) {
    out.push_back(kDigits[c >> 4]);
    out.push_back(kDigits[c & 0xf]);
  }
  return out;
}

void secure_zero(void* data, std::size_t size) {
  if (size != 0) sodium_memzero(data, size);
}

void Writer::u16(std::uint16_t v) {
  u8(static_cast<std::uint8_t>(v >> 8));
  u8(static_cast<std::uint8_t>(v));
}

void Writer::u32(std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8)
    u8(static_cast<std::uint8_t>(v >> shift));
}

void Writer::u64(std::uint64_t v) {
  for (int shift = 56; shift >= 0; shift -= 8)
    u8(static_cast<std::uint8_t>(v >> shift));
}

void Writer::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  raw(s);
}

void Writer::blob(ByteView b) {
  u32(static_cast<std::uint32_t>(b.size()));
  raw(b);
}

ByteView Reader::raw(std::size_t n) {
  if (n > remaining()) fail(Errc::kBadFormat, "truncated input");
  ByteView out = in_.subspan(pos_, n);
  pos_ += n;
  return out;
}

std::uint8_t Reader::u8() { return raw(1)[0]; }

std::uint16_t Reader::u16() {
  ByteView b = raw(2);
  return static_cast<std::uint16_t>((b[0] << 8) | b[1]);
}

std::uint32_t Reader::u32() {
  std::uint32_t v = 0;
  for (std::uint8_t c : raw(4)) v = (v << 8) | c;
  return v;
}

std::uint64_t Reader::u64() {
  std::uint64_t v = 0;
  for (std::uint8_t c : raw(8)) v = (v << 8) | c;
  return v;
}

std::string Reader::str() {
  std::uint32_t n = u32();
  return to_string(raw(n));
}

Bytes Reader::blob() {
  std::uint32_t n = u32();
  ByteView b = raw(n);
  return Bytes(b.begin(), b.end());
}

}  // namespace nymkit
