#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <string>

#include "nymkit/common/bytes.h"

namespace nymkit {

// 32-byte content digest. SHA-256 unless stated otherwise at the call site.
struct Digest {
  std::array<std::uint8_t, 32> bytes{};

  auto operator<=>(const Digest&) const = default;

  std::string hex() const { return to_hex(bytes); }
  static Digest from_hex(std::string_view hex);
};

Digest sha256(ByteView data);
inline Digest sha256(std::string_view s) { return sha256(as_bytes(s)); }

// Incremental SHA-256.
class Sha256 {
 public:
  Sha256();
  Sha256& update(ByteView data);
  Sha256& update(std::string_view s) { return update(as_bytes(s)); }
  Digest finish();

 private:
  alignas(64) std::array<std::uint8_t, 128> state_{};
};

// BLAKE2b-256, optionally keyed. Used where a fast keyed hash is needed.
Digest blake2b(ByteView data, ByteView key = {});

// Call once before using any crypto primitive; safe to call repeatedly.
void crypto_init();

// Fills the buffer from the OS CSPRNG.
void random_bytes(std::span<std::uint8_t> out);

}  // namespace nymkit
