#pragma once

#include <cstddef>
#include <vector>

#include "nymkit/common/bytes.h"
#include "nymkit/common/digest.h"

namespace nymkit::overlay {

enum class ChunkStatus { kOk, kTamperDetected };

// Binary SHA-256 Merkle tree over fixed-size chunks of an image. Leaves are
// H(0x00 || chunk), interior nodes H(0x01 || left || right); an odd node at
// any level is paired with itself. The final chunk may be short.
class MerkleIndex {
 public:
  static constexpr std::size_t kDefaultChunkSize = 4096;

  static MerkleIndex build(ByteView image,
                           std::size_t chunk_size = kDefaultChunkSize);

  const Digest& root() const { return root_; }
  std::size_t chunk_size() const { return chunk_size_; }
  std::size_t chunk_count() const { return chunk_count_; }

  // Sibling digests from leaf to root for `chunk_no`.
  const std::vector<Digest>& proof(std::size_t chunk_no) const;

  // Authenticates `chunk_bytes` as chunk `chunk_no` against `root()`.
  // Throws Error(kOutOfRange) for a chunk number past the end.
  ChunkStatus verify_chunk(std::size_t chunk_no, ByteView chunk_bytes) const;

  // Same check against an externally pinned root.
  static ChunkStatus verify(const Digest& root, std::size_t chunk_no,
                            std::size_t chunk_count,
                            const std::vector<Digest>& proof,
                            ByteView chunk_bytes);

  static Digest leaf_hash(ByteView chunk);
  static Digest node_hash(const Digest& left, const Digest& right);

 private:
  Digest root_;
  std::size_t chunk_size_ = kDefaultChunkSize;
  std::size_t chunk_count_ = 0;
  std::vector<std::vector<Digest>> proofs_;
};

// Chunk `chunk_no` of `image` under the given chunk size.
ByteView image_chunk(ByteView image, std::size_t chunk_no,
                     std::size_t chunk_size);

}  // namespace nymkit::overlay
