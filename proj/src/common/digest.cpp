#include "nymkit/common/digest.h"

#include <sodium.h>

#include <cstring>
#include <mutex>

#include "nymkit/common/error.h"

namespace nymkit {

static_assert(sizeof(crypto_hash_sha256_state) <= 128);

void crypto_init() {
  static std::once_flag once;
  std::call_once(once, [] {
    if (sodium_init() < 0) throw std::runtime_error("libsodium init failed");
  });
}

Digest Digest::from_hex(std::string_view hex) {
  Digest d;
  std::size_t bin_len = 0;
  if (hex.size() != 64 ||
      sodium_hex2bin(d.bytes.data(), d.bytes.size(), hex.data(), hex.size(),
                     nullptr, &bin_len, nullptr) != 0 ||
      bin_len != d.bytes.size()) {
    fail(Errc::kBadFormat, "malformed digest hex");
  }
  return d;
}

Digest sha256(ByteView data) {
  crypto_init();
  Digest d;
  crypto_hash_sha256(d.bytes.data(), data.data(), data.size());
  return d;
}

Sha256::Sha256() {
  crypto_init();
  crypto_hash_sha256_init(
      reinterpret_cast<crypto_hash_sha256_state*>(state_.data()));
}

Sha256& Sha256::update(ByteView data) {
  crypto_hash_sha256_update(
      reinterpret_cast<crypto_hash_sha256_state*>(state_.data()), data.data(),
      data.size());
  return *this;
}

Digest Sha256::finish() {
  Digest d;
  crypto_hash_sha256_final(
      reinterpret_cast<crypto_hash_sha256_state*>(state_.data()),
      d.bytes.data());
  return d;
}

Digest blake2b(ByteView data, ByteView key) {
  crypto_init();
  Digest d;
  crypto_generichash(d.bytes.data(), d.bytes.size(), data.data(), data.size(),
                     key.empty() ? nullptr : key.data(), key.size());
  return d;
}

void random_bytes(std::span<std::uint8_t> out) {
  crypto_init();
  randombytes_buf(out.data(), out.size());
}

}  // namespace nymkit
