#include "nymkit/overlay/layer.h"

#include "nymkit/common/error.h"

namespace nymkit::overlay {
namespace {

void write_record(Writer& out, const std::string& path, const FileEntry* entry) {
  Writer rec;
  rec.str(path);
  rec.u8(entry == nullptr ? 1 : 0);
  if (entry == nullptr) {
    rec.u32(0);
    rec.u64(0);
  } else {
    rec.u32(static_cast<std::uint32_t>(entry->metadata.size()));
    for (const auto& [key, value] : entry->metadata) {
      rec.str(key);
      rec.str(value);
    }
    rec.u64(entry->content.size());
    rec.raw(entry->content);
  }
  out.u32(static_cast<std::uint32_t>(rec.size()));
  out.raw(rec.buffer());
}

// Walks entries and whiteouts as one path-sorted sequence.
template <typename Fn>
void for_each_sorted(const std::map<std::string, FileEntry>& entries,
                     const std::set<std::string>& whiteouts, Fn&& fn) {
  auto e = entries.begin();
  auto w = whiteouts.begin();
  while (e != entries.end() || w != whiteouts.end()) {
    if (w == whiteouts.end() || (e != entries.end() && e->first < *w)) {
      fn(e->first, &e->second);
      ++e;
    } else {
      fn(*w, nullptr);
      ++w;
    }
  }
}

}  // namespace

const FileEntry* Layer::find(const std::string& path) const {
  auto it = entries_.find(path);
  return it == entries_.end() ? nullptr : &it->second;
}

void Layer::require_writable() const {
  if (read_only()) fail(Errc::kReadOnly, "layer " + id_ + " is read-only");
}

void Layer::put(const std::string& path, FileEntry entry) {
  require_writable();
  whiteouts_.erase(path);
  entries_[path] = std::move(entry);
}

void Layer::put_whiteout(const std::string& path) {
  require_writable();
  entries_.erase(path);
  whiteouts_.insert(path);
}

void Layer::erase(const std::string& path) {
  require_writable();
  entries_.erase(path);
  whiteouts_.erase(path);
}

Layer::Layer(std::string id, LayerMode mode) : id_(std::move(id)), mode_(mode) {
  if (read_only()) digest_cache_ = sha256(serialize());
}

Digest Layer::digest() const {
  if (digest_cache_) return *digest_cache_;
  return sha256(serialize());
}

Layer Layer::frozen(std::string id) const {
  Layer copy = *this;
  copy.digest_cache_.reset();
  copy.id_ = std::move(id);
  copy.mode_ = LayerMode::kReadOnly;
  copy.digest_cache_ = sha256(copy.serialize());
  return copy;
}

std::size_t Layer::content_bytes() const {
  std::size_t total = 0;
  for (const auto& [path, entry] : entries_) total += entry.content.size();
  return total;
}

Bytes Layer::serialize() const {
  Writer out;
  out.raw(kMagic);
  for_each_sorted(entries_, whiteouts_,
                  [&](const std::string& path, const FileEntry* entry) {
                    write_record(out, path, entry);
                  });
  return out.take();
}

std::map<std::string, RecordExtent> Layer::record_extents() const {
  std::map<std::string, RecordExtent> extents;
  Writer out;
  out.raw(kMagic);
  for_each_sorted(entries_, whiteouts_,
                  [&](const std::string& path, const FileEntry* entry) {
                    std::size_t start = out.size();
                    write_record(out, path, entry);
                    extents[path] = {start, out.size() - start};
                  });
  return extents;
}

std::pair<std::string, std::optional<FileEntry>> Layer::parse_record(
    ByteView record) {
  Reader in(record);
  std::uint32_t length = in.u32();
  if (length != in.remaining()) fail(Errc::kBadFormat, "record length mismatch");
  std::string path = in.str();
  std::uint8_t whiteout = in.u8();
  if (whiteout > 1) fail(Errc::kBadFormat, "bad whiteout flag");
  FileEntry entry;
  std::uint32_t meta_count = in.u32();
  for (std::uint32_t i = 0; i < meta_count; ++i) {
    std::string key = in.str();
    entry.metadata[key] = in.str();
  }
  std::uint64_t content_len = in.u64();
  if (content_len > in.remaining()) fail(Errc::kBadFormat, "truncated content");
  ByteView content = in.raw(static_cast<std::size_t>(content_len));
  entry.content.assign(content.begin(), content.end());
  if (!in.done()) fail(Errc::kBadFormat, "trailing record bytes");
  if (whiteout == 1) {
    if (meta_count != 0 || content_len != 0)
      fail(Errc::kBadFormat, "whiteout with payload");
    return {std::move(path), std::nullopt};
  }
  return {std::move(path), std::move(entry)};
}

Layer Layer::deserialize(ByteView bytes, std::string id, LayerMode mode) {
  Reader in(bytes);
  if (to_string(in.raw(kMagic.size())) != kMagic)
    fail(Errc::kBadFormat, "not a layer (bad magic)");
  Layer layer(std::move(id), LayerMode::kWritable);
  std::string previous;
  bool first = true;
  while (!in.done()) {
    std::size_t start = in.position();
    std::uint32_t length = in.u32();
    in.raw(length);
    auto [path, entry] =
        parse_record(bytes.subspan(start, in.position() - start));
    if (!first && path <= previous)
      fail(Errc::kBadFormat, "records not strictly sorted by path");
    first = false;
    previous = path;
    if (entry) {
      layer.entries_.emplace(path, std::move(*entry));
    } else {
      layer.whiteouts_.insert(path);
    }
  }
  layer.mode_ = mode;
  if (layer.read_only()) layer.digest_cache_ = sha256(bytes);
  return layer;
}

void Layer::wipe() {
  require_writable();
  while (!entries_.empty()) {
    auto node = entries_.extract(entries_.begin());
    secure_zero(node.key());
    secure_zero(node.mapped().content);
    while (!node.mapped().metadata.empty()) {
      auto meta = node.mapped().metadata.extract(node.mapped().metadata.begin());
      secure_zero(meta.key());
      secure_zero(meta.mapped());
    }
  }
  while (!whiteouts_.empty()) {
    auto node = whiteouts_.extract(whiteouts_.begin());
    secure_zero(node.value());
  }
}

}  // namespace nymkit::overlay
