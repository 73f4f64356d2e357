#include "nymkit/snapstore/archive.h"

#include <sodium.h>
#include <zlib.h>

#include <json.hpp>

#include "nymkit/common/error.h"

namespace nymkit::snapstore {
namespace {

constexpr std::uint8_t kKdfArgon2id13 = 1;
constexpr std::uint8_t kCompressionZlib = 1;
constexpr std::uint8_t kCipherXChaCha20Poly1305 = 1;
constexpr std::uint64_t kMaxPlaintext = std::uint64_t{1} << 32;

static_assert(crypto_aead_xchacha20poly1305_ietf_NPUBBYTES == 24);
static_assert(crypto_aead_xchacha20poly1305_ietf_ABYTES == kTagSize);
static_assert(crypto_pwhash_SALTBYTES == 16);

using Key = std::array<std::uint8_t, crypto_aead_xchacha20poly1305_ietf_KEYBYTES>;

struct KeyGuard {
  Key key{};
  ~KeyGuard() { secure_zero(key.data(), key.size()); }
};

void derive_key(Key& key, std::string_view password, const std::uint8_t* salt,
                const KdfParams& kdf) {
  crypto_init();
  if (crypto_pwhash(key.data(), key.size(), password.data(), password.size(),
                    salt, kdf.opslimit,
                    static_cast<std::size_t>(kdf.memlimit_kib) * 1024,
                    crypto_pwhash_ALG_ARGON2ID13) != 0) {
    fail(Errc::kBackendFailure, "key derivation ran out of memory");
  }
}

void check_kdf(const KdfParams& kdf, Errc code) {
  if (kdf.opslimit < KdfParams::kMinOps || kdf.opslimit > KdfParams::kMaxOps ||
      kdf.memlimit_kib < KdfParams::kMinMemKib ||
      kdf.memlimit_kib > KdfParams::kMaxMemKib) {
    fail(code, "kdf parameters out of range");
  }
}

std::string manifest_json(const Manifest& m) {
  nlohmann::json j = {
      {"nym_name", m.nym_name},
      {"mode", m.mode},
      {"anon_digest", m.anon_digest.hex()},
      {"comm_digest", m.comm_digest.hex()},
      {"created_at", m.created_at},
      {"boot_image", m.boot_image},
      {"attributes", m.attributes},
  };
  return j.dump();
}

Manifest parse_manifest(std::string_view text) {
  auto j = nlohmann::json::parse(text);
  Manifest m;
  m.nym_name = j.at("nym_name").get<std::string>();
  m.mode = j.at("mode").get<std::string>();
  m.anon_digest = Digest::from_hex(j.at("anon_digest").get<std::string>());
  m.comm_digest = Digest::from_hex(j.at("comm_digest").get<std::string>());
  m.created_at = j.at("created_at").get<std::uint64_t>();
  m.boot_image = j.at("boot_image").get<bool>();
  m.attributes = j.at("attributes").get<std::map<std::string, std::string>>();
  return m;
}

Bytes compress(ByteView raw) {
  uLongf bound = compressBound(raw.size());
  Writer w;
  w.u64(raw.size());
  Bytes& out = w.buffer();
  std::size_t prefix = out.size();
  out.resize(prefix + bound);
  if (compress2(out.data() + prefix, &bound, raw.data(), raw.size(),
                Z_DEFAULT_COMPRESSION) != Z_OK) {
    fail(Errc::kBackendFailure, "compression failed");
  }
  out.resize(prefix + bound);
  return w.take();
}

// Only reached on authenticated plaintext, so a failure here means the
// writer produced garbage rather than that someone tampered in transit.
Bytes decompress(ByteView packed) {
  Reader r(packed);
  std::uint64_t raw_len = r.u64();
  if (raw_len > kMaxPlaintext) fail(Errc::kBadFormat, "plaintext too large");
  Bytes out(raw_len);
  uLongf out_len = raw_len;
  ByteView rest = r.raw(r.remaining());
  if (uncompress(out.data(), &out_len, rest.data(), rest.size()) != Z_OK ||
      out_len != raw_len) {
    fail(Errc::kBadFormat, "corrupt compressed body");
  }
  return out;
}

}  // namespace

Bytes pack(const overlay::Layer& anon, const overlay::Layer& comm,
           Manifest manifest, std::string_view password,
           const PackOptions& options) {
  crypto_init();
  check_kdf(options.kdf, Errc::kInvalidArgument);

  Bytes anon_bytes = anon.serialize();
  Bytes comm_bytes = comm.serialize();
  manifest.anon_digest = sha256(anon_bytes);
  manifest.comm_digest = sha256(comm_bytes);

  Writer inner;
  std::string mj = manifest_json(manifest);
  inner.str(mj);
  inner.u64(anon_bytes.size());
  inner.raw(anon_bytes);
  inner.u64(comm_bytes.size());
  inner.raw(comm_bytes);
  Bytes plain = inner.take();
  Bytes packed = compress(plain);
  secure_zero(plain);
  secure_zero(anon_bytes);
  secure_zero(comm_bytes);
  secure_zero(mj);

  std::array<std::uint8_t, 16> salt;
  std::array<std::uint8_t, 24> nonce;
  if (options.salt) salt = *options.salt; else random_bytes(salt);
  if (options.nonce) nonce = *options.nonce; else random_bytes(nonce);

  Writer out;
  out.raw(kArchiveMagic);
  out.u16(kArchiveVersion);
  out.u8(kKdfArgon2id13);
  out.u32(options.kdf.opslimit);
  out.u32(options.kdf.memlimit_kib);
  out.u8(kCompressionZlib);
  out.u8(kCipherXChaCha20Poly1305);
  out.raw(salt);
  out.raw(nonce);
  out.u64(packed.size());

  KeyGuard kg;
  derive_key(kg.key, password, salt.data(), options.kdf);

  Bytes& buf = out.buffer();
  std::size_t header_len = buf.size();
  buf.resize(header_len + packed.size() + kTagSize);
  unsigned long long clen = 0;
  crypto_aead_xchacha20poly1305_ietf_encrypt(
      buf.data() + header_len, &clen, packed.data(), packed.size(), buf.data(),
      header_len, nullptr, nonce.data(), kg.key.data());
  secure_zero(packed);
  return out.take();
}

HeaderInfo read_header(ByteView archive) {
  Reader r(archive);
  if (to_string(r.raw(kArchiveMagic.size())) != kArchiveMagic) {
    fail(Errc::kBadFormat, "not a snapshot archive");
  }
  HeaderInfo info;
  info.version = r.u16();
  if (info.version != kArchiveVersion) fail(Errc::kBadFormat, "unsupported archive version");
  if (r.u8() != kKdfArgon2id13) fail(Errc::kBadFormat, "unknown kdf");
  info.kdf.opslimit = r.u32();
  info.kdf.memlimit_kib = r.u32();
  check_kdf(info.kdf, Errc::kBadFormat);
  if (r.u8() != kCompressionZlib) fail(Errc::kBadFormat, "unknown compression");
  if (r.u8() != kCipherXChaCha20Poly1305) fail(Errc::kBadFormat, "unknown cipher");
  r.raw(16 + 24);
  info.body_length = r.u64();
  if (archive.size() - kHeaderSize < kTagSize ||
      info.body_length != archive.size() - kHeaderSize - kTagSize) {
    fail(Errc::kBadFormat, "archive length does not match header");
  }
  return info;
}

Unpacked unpack(ByteView archive, std::string_view password) {
  HeaderInfo info = read_header(archive);
  const std::uint8_t* salt = archive.data() + kHeaderSize - 8 - 24 - 16;
  const std::uint8_t* nonce = salt + 16;

  KeyGuard kg;
  derive_key(kg.key, password, salt, info.kdf);

  Bytes packed(info.body_length);
  unsigned long long plen = 0;
  if (crypto_aead_xchacha20poly1305_ietf_decrypt(
          packed.data(), &plen, nullptr, archive.data() + kHeaderSize,
          info.body_length + kTagSize, archive.data(), kHeaderSize, nonce,
          kg.key.data()) != 0) {
    fail(Errc::kAuthFailure, "authentication failed");
  }

  Bytes plain = decompress(packed);
  secure_zero(packed);
  try {
    Reader r(plain);
    std::string mj = r.str();
    Manifest manifest = parse_manifest(mj);
    ByteView anon_bytes = r.raw(r.u64());
    ByteView comm_bytes = r.raw(r.u64());
    if (!r.done()) fail(Errc::kBadFormat, "trailing bytes in archive body");
    if (sha256(anon_bytes) != manifest.anon_digest ||
        sha256(comm_bytes) != manifest.comm_digest) {
      fail(Errc::kAuthFailure, "authentication failed");
    }
    Unpacked out{
        overlay::Layer::deserialize(anon_bytes, manifest.nym_name + "/anon",
                                    overlay::LayerMode::kReadOnly),
        overlay::Layer::deserialize(comm_bytes, manifest.nym_name + "/comm",
                                    overlay::LayerMode::kReadOnly),
        std::move(manifest)};
    secure_zero(plain);
    return out;
  } catch (const nlohmann::json::exception&) {
    secure_zero(plain);
    fail(Errc::kBadFormat, "malformed manifest");
  } catch (...) {
    secure_zero(plain);
    throw;
  }
}

transports::GuardSeed derive_guard_seed(std::string_view location,
                                        std::string_view password) {
  crypto_init();
  Bytes input = to_bytes(location);
  input.push_back(0x00);
  input.insert(input.end(), password.begin(), password.end());
  Digest salt_src = blake2b(as_bytes(location), as_bytes("nymkit guard seed"));

  transports::GuardSeed seed;
  if (crypto_pwhash(seed.bytes.data(), seed.bytes.size(),
                    reinterpret_cast<const char*>(input.data()), input.size(),
                    salt_src.bytes.data(), 2, 2 * 1024 * 1024,
                    crypto_pwhash_ALG_ARGON2ID13) != 0) {
    secure_zero(input);
    fail(Errc::kBackendFailure, "key derivation ran out of memory");
  }
  secure_zero(input);
  return seed;
}

}  // namespace nymkit::snapstore
