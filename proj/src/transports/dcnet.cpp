#include "nymkit/transports/dcnet.h"

#include <sodium.h>

#include <algorithm>

#include "nymkit/common/error.h"

namespace nymkit::transports {

DcnetGroup::DcnetGroup(DcnetParams params, const Digest& group_secret)
    : params_(params) {
  if (params_.members < 2) fail(Errc::kInvalidArgument, "DC-net needs >= 2 members");
  if (params_.slot_bytes == 0) fail(Errc::kInvalidArgument, "zero slot size");
  pair_keys_.assign(params_.members, std::vector<Digest>(params_.members));
  for (std::size_t a = 0; a < params_.members; ++a) {
    for (std::size_t b = a + 1; b < params_.members; ++b) {
      Writer w;
      w.u32(static_cast<std::uint32_t>(a));
      w.u32(static_cast<std::uint32_t>(b));
      Digest k = blake2b(w.buffer(), group_secret.bytes);
      pair_keys_[a][b] = k;
      pair_keys_[b][a] = k;
    }
  }
}

Bytes DcnetGroup::pad(std::size_t a, std::size_t b, std::size_t round) const {
  Bytes out(params_.slot_bytes);
  std::array<std::uint8_t, crypto_stream_chacha20_ietf_NONCEBYTES> nonce{};
  for (std::size_t i = 0; i < 8; ++i)
    nonce[i] = static_cast<std::uint8_t>(static_cast<std::uint64_t>(round) >> (8 * i));
  crypto_stream_chacha20_ietf(out.data(), out.size(), nonce.data(),
                              pair_keys_[a][b].bytes.data());
  return out;
}

std::vector<Bytes> DcnetGroup::round_ciphertexts(std::size_t round,
                                                 ByteView slot) const {
  if (slot.size() > params_.slot_bytes)
    fail(Errc::kInvalidArgument, "slot larger than slot size");
  std::size_t owner = slot_owner(round);
  std::vector<Bytes> out(params_.members, Bytes(params_.slot_bytes, 0));
  for (std::size_t a = 0; a < params_.members; ++a) {
    for (std::size_t b = a + 1; b < params_.members; ++b) {
      Bytes p = pad(a, b, round);
      for (std::size_t i = 0; i < p.size(); ++i) {
        out[a][i] ^= p[i];
        out[b][i] ^= p[i];
      }
    }
  }
  for (std::size_t i = 0; i < slot.size(); ++i) out[owner][i] ^= slot[i];
  return out;
}

Bytes DcnetGroup::combine(const std::vector<Bytes>& ciphertexts) {
  if (ciphertexts.empty()) return {};
  Bytes out(ciphertexts.front().size(), 0);
  for (const Bytes& c : ciphertexts)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] ^= c[i];
  return out;
}

DcnetGroup::Broadcast DcnetGroup::broadcast(std::size_t member,
                                            ByteView message) const {
  if (member >= params_.members) fail(Errc::kOutOfRange, "no such member");
  Broadcast result;
  std::size_t offset = 0;
  // the member's k-th owned round is member + k * members
  for (std::size_t k = 0; offset < message.size(); ++k) {
    std::size_t round = member + k * params_.members;
    std::size_t n = std::min(params_.slot_bytes, message.size() - offset);
    std::vector<Bytes> cts = round_ciphertexts(round, message.subspan(offset, n));
    Bytes plain = combine(cts);
    result.delivered.insert(result.delivered.end(), plain.begin(), plain.begin() + n);
    result.rounds += 1;
    result.frames += cts.size();
    for (const Bytes& c : cts) result.wire_bytes += c.size() + params_.frame_header;
    offset += n;
  }
  return result;
}

}  // namespace nymkit::transports
