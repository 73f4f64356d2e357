#pragma once

#include <cstddef>
#include <vector>

#include "nymkit/common/bytes.h"
#include "nymkit/common/digest.h"
#include "nymkit/transports/transport.h"

namespace nymkit::transports {

// Dining-cryptographers broadcast group with one slot per round, scheduled
// round-robin over the members. Each pair of members shares a key; a
// member's ciphertext is the XOR of its pads with every other member, plus
// the message if it owns the slot. XORing all ciphertexts cancels the pads.
class DcnetGroup {
 public:
  DcnetGroup(DcnetParams params, const Digest& group_secret);

  const DcnetParams& params() const { return params_; }

  // Member that owns `round`.
  std::size_t slot_owner(std::size_t round) const {
    return round % params_.members;
  }

  // Every member's ciphertext for one round. `slot` is zero-padded to the
  // slot size; only the round's owner contributes it.
  std::vector<Bytes> round_ciphertexts(std::size_t round, ByteView slot) const;

  static Bytes combine(const std::vector<Bytes>& ciphertexts);

  struct Broadcast {
    Bytes delivered;
    std::size_t rounds = 0;
    std::size_t frames = 0;
    std::size_t wire_bytes = 0;
  };

  // Sends `message` from `member`, using only the rounds that member owns.
  Broadcast broadcast(std::size_t member, ByteView message) const;

 private:
  Bytes pad(std::size_t a, std::size_t b, std::size_t round) const;

  DcnetParams params_;
  std::vector<std::vector<Digest>> pair_keys_;
};

}  // namespace nymkit::transports
