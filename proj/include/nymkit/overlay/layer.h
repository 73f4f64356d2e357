#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "nymkit/common/bytes.h"
#include "nymkit/common/digest.h"

namespace nymkit::overlay {

enum class LayerMode { kReadOnly, kWritable };

struct FileEntry {
  Bytes content;
  // Abstract attributes such as "mtime" or "mode".
  std::map<std::string, std::string> metadata;

  bool operator==(const FileEntry&) const = default;
};

// Byte range of one serialized record, relative to the start of the
// serialized layer.
struct RecordExtent {
  std::size_t offset = 0;
  std::size_t length = 0;
};

// One filesystem in a union stack. Paths are opaque strings; there are no
// directory entries.
//
// Serialized form (all integers big-endian):
//   "NYMKIT-LAYER\0v1\0"                      16-byte magic
//   repeated, sorted by path:
//     u32 record_length
//     u32 path_length, path
//     u8  whiteout flag
//     u32 metadata_count, (u32 len, key, u32 len, value)*
//     u64 content_length, content
class Layer {
 public:
  static constexpr std::string_view kMagic{"NYMKIT-LAYER\0v1\0", 16};

  Layer() = default;
  Layer(std::string id, LayerMode mode);

  const std::string& id() const { return id_; }
  LayerMode mode() const { return mode_; }
  bool read_only() const { return mode_ == LayerMode::kReadOnly; }

  const std::map<std::string, FileEntry>& entries() const { return entries_; }
  const std::set<std::string>& whiteouts() const { return whiteouts_; }
  bool empty() const { return entries_.empty() && whiteouts_.empty(); }

  const FileEntry* find(const std::string& path) const;
  bool has_whiteout(const std::string& path) const {
    return whiteouts_.contains(path);
  }

  // Mutators throw Error(kReadOnly) on read-only layers. Placing an entry
  // clears any whiteout for the path and vice versa.
  void put(const std::string& path, FileEntry entry);
  void put_whiteout(const std::string& path);
  // Drops both the entry and any whiteout for `path`.
  void erase(const std::string& path);

  // Returns a read-only copy with the given id.
  Layer frozen(std::string id) const;

  // Total content bytes held by entries.
  std::size_t content_bytes() const;

  Bytes serialize() const;
  // Offsets of each path's record within serialize()'s output.
  std::map<std::string, RecordExtent> record_extents() const;
  static Layer deserialize(ByteView bytes, std::string id, LayerMode mode);
  // Parses a single record previously located with record_extents().
  static std::pair<std::string, std::optional<FileEntry>> parse_record(
      ByteView record);

  // Cached for read-only layers, which never change after creation.
  Digest digest() const;

  // Zeroes every path, content and metadata buffer, then clears the layer.
  // Applies to writable layers only.
  void wipe();

 private:
  void require_writable() const;

  std::string id_;
  LayerMode mode_ = LayerMode::kWritable;
  std::map<std::string, FileEntry> entries_;
  std::set<std::string> whiteouts_;
  // Set once when a layer becomes read-only.
  std::optional<Digest> digest_cache_;
};

}  // namespace nymkit::overlay
