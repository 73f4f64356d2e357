#include "nymkit/overlay/merkle.h"

#include <gtest/gtest.h>

#include <random>

#include "nymkit/common/error.h"

namespace nymkit::overlay {
namespace {

Bytes random_image(std::size_t size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Bytes image(size);
  for (auto& b : image) b = static_cast<std::uint8_t>(rng());
  return image;
}

// Independent root computation: repeatedly hash pairs, duplicating the last
// node on odd levels.
Digest naive_root(ByteView image, std::size_t chunk) {
  std::vector<Digest> level;
  for (std::size_t off = 0; off < image.size() || level.empty(); off += chunk) {
    ByteView c = image.subspan(off, std::min(chunk, image.size() - off));
    Bytes tagged{0x00};
    tagged.insert(tagged.end(), c.begin(), c.end());
    level.push_back(sha256(tagged));
    if (image.empty()) break;
  }
  while (level.size() > 1) {
    if (level.size() % 2) level.push_back(level.back());
    std::vector<Digest> next;
    for (std::size_t i = 0; i < level.size(); i += 2) {
      Bytes tagged{0x01};
      tagged.insert(tagged.end(), level[i].bytes.begin(), level[i].bytes.end());
      tagged.insert(tagged.end(), level[i + 1].bytes.begin(),
                    level[i + 1].bytes.end());
      next.push_back(sha256(tagged));
    }
    level = next;
  }
  return level.front();
}

TEST(Merkle, RootMatchesNaiveConstruction) {
  for (std::size_t size : {0u, 1u, 4096u, 4097u, 3 * 4096u, 5 * 4096u + 17u,
                           64 * 4096u}) {
    Bytes image = random_image(size, size);
    EXPECT_EQ(MerkleIndex::build(image).root(), naive_root(image, 4096))
        << "size " << size;
  }
}

TEST(Merkle, UntamperedChunksVerify) {
  Bytes image = random_image(7 * 4096 + 100, 1);
  MerkleIndex index = MerkleIndex::build(image);
  ASSERT_EQ(index.chunk_count(), 8u);
  for (std::size_t i = 0; i < index.chunk_count(); ++i)
    EXPECT_EQ(index.verify_chunk(i, image_chunk(image, i, 4096)),
              ChunkStatus::kOk);
}

TEST(Merkle, SingleBitFlipDetected) {
  Bytes image = random_image(5 * 4096, 2);
  MerkleIndex index = MerkleIndex::build(image);
  Bytes chunk(image.begin() + 4096, image.begin() + 8192);
  chunk[100] ^= 0x10;
  EXPECT_EQ(index.verify_chunk(1, chunk), ChunkStatus::kTamperDetected);
}

TEST(Merkle, RandomizedBitFlipsAllDetected) {
  Bytes image = random_image(33 * 4096 + 5, 3);
  MerkleIndex index = MerkleIndex::build(image);
  std::mt19937_64 rng(99);
  int detected = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::size_t chunk_no = rng() % index.chunk_count();
    ByteView original = image_chunk(image, chunk_no, 4096);
    Bytes chunk(original.begin(), original.end());
    chunk[rng() % chunk.size()] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
    if (index.verify_chunk(chunk_no, chunk) == ChunkStatus::kTamperDetected)
      ++detected;
  }
  EXPECT_EQ(detected, 1000);
}

TEST(Merkle, ChunkSwapDetected) {
  Bytes image = random_image(4 * 4096, 4);
  MerkleIndex index = MerkleIndex::build(image);
  EXPECT_EQ(index.verify_chunk(0, image_chunk(image, 1, 4096)),
            ChunkStatus::kTamperDetected);
}

TEST(Merkle, OutOfRangeChunk) {
  Bytes image = random_image(2 * 4096, 5);
  MerkleIndex index = MerkleIndex::build(image);
  try {
    index.verify_chunk(2, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kOutOfRange);
  }
}

}  // namespace
}  // namespace nymkit::overlay
