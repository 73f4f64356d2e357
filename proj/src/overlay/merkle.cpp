#include "nymkit/overlay/merkle.h"

#include <algorithm>

#include "nymkit/common/error.h"

namespace nymkit::overlay {

ByteView image_chunk(ByteView image, std::size_t chunk_no,
                     std::size_t chunk_size) {
  std::size_t start = chunk_no * chunk_size;
  if (start >= image.size() && !(image.empty() && chunk_no == 0))
    fail(Errc::kOutOfRange, "chunk past end of image");
  return image.subspan(start, std::min(chunk_size, image.size() - start));
}

Digest MerkleIndex::leaf_hash(ByteView chunk) {
  static constexpr std::uint8_t kLeafTag = 0x00;
  return Sha256().update(ByteView(&kLeafTag, 1)).update(chunk).finish();
}

Digest MerkleIndex::node_hash(const Digest& left, const Digest& right) {
  static constexpr std::uint8_t kNodeTag = 0x01;
  return Sha256()
      .update(ByteView(&kNodeTag, 1))
      .update(left.bytes)
      .update(right.bytes)
      .finish();
}

MerkleIndex MerkleIndex::build(ByteView image, std::size_t chunk_size) {
  if (chunk_size == 0) fail(Errc::kInvalidArgument, "chunk size must be > 0");
  MerkleIndex index;
  index.chunk_size_ = chunk_size;
  index.chunk_count_ =
      std::max<std::size_t>(1, (image.size() + chunk_size - 1) / chunk_size);

  std::vector<Digest> level;
  level.reserve(index.chunk_count_);
  for (std::size_t i = 0; i < index.chunk_count_; ++i)
    level.push_back(leaf_hash(image_chunk(image, i, chunk_size)));

  index.proofs_.assign(index.chunk_count_, {});
  // position of each chunk's ancestor within the current level
  std::vector<std::size_t> pos(index.chunk_count_);
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = i;

  while (level.size() > 1) {
    for (std::size_t chunk = 0; chunk < index.chunk_count_; ++chunk) {
      std::size_t sibling = pos[chunk] ^ 1;
      if (sibling >= level.size()) sibling = pos[chunk];
      index.proofs_[chunk].push_back(level[sibling]);
      pos[chunk] /= 2;
    }
    std::vector<Digest> next;
    next.reserve((level.size() + 1) / 2);
    for (std::size_t i = 0; i < level.size(); i += 2) {
      const Digest& right = i + 1 < level.size() ? level[i + 1] : level[i];
      next.push_back(node_hash(level[i], right));
    }
    level = std::move(next);
  }
  index.root_ = level.front();
  return index;
}

const std::vector<Digest>& MerkleIndex::proof(std::size_t chunk_no) const {
  if (chunk_no >= chunk_count_) fail(Errc::kOutOfRange, "chunk out of range");
  return proofs_[chunk_no];
}

ChunkStatus MerkleIndex::verify_chunk(std::size_t chunk_no,
                                      ByteView chunk_bytes) const {
  return verify(root_, chunk_no, chunk_count_, proof(chunk_no), chunk_bytes);
}

ChunkStatus MerkleIndex::verify(const Digest& root, std::size_t chunk_no,
                                std::size_t chunk_count,
                                const std::vector<Digest>& proof,
                                ByteView chunk_bytes) {
  if (chunk_no >= chunk_count) fail(Errc::kOutOfRange, "chunk out of range");
  Digest current = leaf_hash(chunk_bytes);
  std::size_t index = chunk_no;
  for (const Digest& sibling : proof) {
    current = (index & 1) ? node_hash(sibling, current)
                          : node_hash(current, sibling);
    index /= 2;
  }
  return current == root ? ChunkStatus::kOk : ChunkStatus::kTamperDetected;
}

}  // namespace nymkit::overlay
