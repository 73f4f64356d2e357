#include "nymkit/overlay/layer.h"

#include <gtest/gtest.h>

#include <random>

#include "nymkit/common/error.h"

namespace nymkit::overlay {
namespace {

TEST(Layer, SerializationStartsWithMagicAndSortsByPath) {
  Layer layer("w", LayerMode::kWritable);
  layer.put("/z", {to_bytes("last"), {}});
  layer.put("/a", {to_bytes("first"), {{"mtime", "0"}}});
  layer.put_whiteout("/m");
  Bytes out = layer.serialize();
  ASSERT_GE(out.size(), 16u);
  EXPECT_EQ(std::string(out.begin(), out.begin() + 16),
            std::string("NYMKIT-LAYER\0v1\0", 16));

  auto extents = layer.record_extents();
  ASSERT_EQ(extents.size(), 3u);
  EXPECT_LT(extents["/a"].offset, extents["/m"].offset);
  EXPECT_LT(extents["/m"].offset, extents["/z"].offset);
  EXPECT_EQ(extents["/a"].offset, 16u);

  auto [path, entry] = Layer::parse_record(
      ByteView(out).subspan(extents["/m"].offset, extents["/m"].length));
  EXPECT_EQ(path, "/m");
  EXPECT_FALSE(entry.has_value());
}

TEST(Layer, RoundTripPreservesDigest) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    Layer layer("w", LayerMode::kWritable);
    int n = static_cast<int>(rng() % 20);
    for (int i = 0; i < n; ++i) {
      std::string path = "/f" + std::to_string(rng() % 30);
      if (rng() % 4 == 0) {
        layer.put_whiteout(path);
      } else {
        Bytes content(rng() % 100);
        for (auto& b : content) b = static_cast<std::uint8_t>(rng());
        layer.put(path, {content, {{"mtime", std::to_string(rng() % 1000)}}});
      }
    }
    Bytes bytes = layer.serialize();
    Layer back = Layer::deserialize(bytes, "w2", LayerMode::kReadOnly);
    EXPECT_EQ(back.serialize(), bytes);
    EXPECT_EQ(back.digest(), layer.digest());
    EXPECT_EQ(back.entries(), layer.entries());
    EXPECT_EQ(back.whiteouts(), layer.whiteouts());
  }
}

TEST(Layer, PathIsNeverBothEntryAndWhiteout) {
  Layer layer("w", LayerMode::kWritable);
  layer.put("/x", {to_bytes("1"), {}});
  layer.put_whiteout("/x");
  EXPECT_EQ(layer.find("/x"), nullptr);
  EXPECT_TRUE(layer.has_whiteout("/x"));
  layer.put("/x", {to_bytes("2"), {}});
  EXPECT_NE(layer.find("/x"), nullptr);
  EXPECT_FALSE(layer.has_whiteout("/x"));
}

TEST(Layer, ReadOnlyLayerRejectsMutation) {
  Layer writable("w", LayerMode::kWritable);
  writable.put("/x", {to_bytes("1"), {}});
  Layer frozen = writable.frozen("ro");
  Digest before = frozen.digest();
  try {
    frozen.put("/y", {});
    FAIL() << "expected ReadOnly";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kReadOnly);
  }
  EXPECT_THROW(frozen.put_whiteout("/x"), Error);
  EXPECT_THROW(frozen.wipe(), Error);
  EXPECT_EQ(sha256(frozen.serialize()), before);
}

TEST(Layer, DeserializeRejectsMalformedInput) {
  Layer layer("w", LayerMode::kWritable);
  layer.put("/a", {to_bytes("abc"), {}});
  Bytes good = layer.serialize();

  Bytes bad_magic = good;
  bad_magic[0] ^= 1;
  EXPECT_THROW(Layer::deserialize(bad_magic, "x", LayerMode::kReadOnly), Error);

  Bytes truncated(good.begin(), good.end() - 1);
  EXPECT_THROW(Layer::deserialize(truncated, "x", LayerMode::kReadOnly), Error);
}

TEST(Layer, WipeClearsEverything) {
  Layer layer("w", LayerMode::kWritable);
  layer.put("/a", {to_bytes("secret"), {{"k", "v"}}});
  layer.put_whiteout("/b");
  layer.wipe();
  EXPECT_TRUE(layer.empty());
}

}  // namespace
}  // namespace nymkit::overlay
