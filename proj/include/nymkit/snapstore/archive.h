#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "nymkit/common/bytes.h"
#include "nymkit/common/digest.h"
#include "nymkit/overlay/layer.h"
#include "nymkit/transports/transport.h"

namespace nymkit::snapstore {

// Argon2id cost parameters, recorded in the archive header.
struct KdfParams {
  std::uint32_t opslimit = 2;
  std::uint32_t memlimit_kib = 64 * 1024;

  bool operator==(const KdfParams&) const = default;

  // Bounds enforced on unpack so a hostile header cannot demand unbounded work.
  static constexpr std::uint32_t kMinOps = 1;
  static constexpr std::uint32_t kMaxOps = 10;
  static constexpr std::uint32_t kMinMemKib = 8;
  static constexpr std::uint32_t kMaxMemKib = 256 * 1024;

  // Cheapest accepted setting, for tests and bulk trials.
  static KdfParams fast() { return {1, kMinMemKib}; }
};

struct Manifest {
  std::string nym_name;
  std::string mode;
  Digest anon_digest;
  Digest comm_digest;
  std::uint64_t created_at = 0;
  // Preconfigured snapshots mark themselves as the boot image.
  bool boot_image = false;
  // Free-form attributes, e.g. the lower-disk digest of a host nym.
  std::map<std::string, std::string> attributes;

  bool operator==(const Manifest&) const = default;
};

struct PackOptions {
  KdfParams kdf;
  // Fresh random values when unset; fixed values make output reproducible.
  std::optional<std::array<std::uint8_t, 16>> salt;
  std::optional<std::array<std::uint8_t, 24>> nonce;
};

struct Unpacked {
  overlay::Layer anon;
  overlay::Layer comm;
  Manifest manifest;
};

// Archive layout (integers big-endian):
//   "NYMKIT-SNAP\0"            12-byte magic
//   u16 version                 1
//   u8  kdf_alg                 1 = Argon2id v1.3
//   u32 opslimit
//   u32 memlimit_kib
//   u8  compression             1 = zlib
//   u8  cipher                  1 = XChaCha20-Poly1305
//   salt                        16 bytes
//   nonce                       24 bytes
//   u64 body_length             ciphertext length, excluding the tag
//   body
//   tag                         16 bytes
//
// Everything up to and including body_length is authenticated as associated
// data. The plaintext is u64 raw_length || zlib(inner), where inner is
//   u32 manifest_json_length, manifest_json
//   u64 anon_length, serialized anon layer
//   u64 comm_length, serialized comm layer
inline constexpr std::string_view kArchiveMagic{"NYMKIT-SNAP\0", 12};
inline constexpr std::uint16_t kArchiveVersion = 1;
inline constexpr std::size_t kHeaderSize = 12 + 2 + 1 + 4 + 4 + 1 + 1 + 16 + 24 + 8;
inline constexpr std::size_t kTagSize = 16;

// Layer digests in the manifest are recomputed from the layers.
Bytes pack(const overlay::Layer& anon, const overlay::Layer& comm,
           Manifest manifest, std::string_view password,
           const PackOptions& options = {});

// Wrong password and any tampering both surface as kAuthFailure; structural
// damage that is visible before decryption (magic, version, truncation,
// out-of-range parameters) is kBadFormat. Never returns partial results.
Unpacked unpack(ByteView archive, std::string_view password);

// Header fields, readable without the password.
struct HeaderInfo {
  std::uint16_t version = 0;
  KdfParams kdf;
  std::uint64_t body_length = 0;
};
HeaderInfo read_header(ByteView archive);

// Argon2id over location || 0x00 || password with fixed costs. The salt is
// derived from the location so the function is pure.
transports::GuardSeed derive_guard_seed(std::string_view location,
                                        std::string_view password);

}  // namespace nymkit::snapstore
