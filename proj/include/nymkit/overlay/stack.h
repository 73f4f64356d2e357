#pragma once

#include <memory>
#include <optional>
#include <set>
#include <string>

#include "nymkit/overlay/layer.h"

namespace nymkit::overlay {

// Which layer of a stack a path currently resolves from.
enum class Source { kBase, kConfig, kWritable };

// Three-layer union view: shared read-only base, per-role read-only
// configuration layer, and a private writable layer on top. Reads resolve
// topmost-first; every write lands in the writable layer.
//
// Single writer; const members are safe to call concurrently.
class OverlayStack {
 public:
  // Throws kInvalidArgument unless base and config are distinct read-only
  // layers and `writable` is an empty writable layer.
  static OverlayStack stack_layers(std::shared_ptr<const Layer> base,
                                   std::shared_ptr<const Layer> config,
                                   Layer writable);

  // Rebuilds a stack around a previously extracted writable layer. The
  // restored layer is copied into a fresh writable layer.
  static OverlayStack restore(std::shared_ptr<const Layer> base,
                              std::shared_ptr<const Layer> config,
                              const Layer& saved_writable);

  std::optional<FileEntry> read(const std::string& path) const;
  // Layer the current read of `path` comes from, or nullopt if unreadable.
  std::optional<Source> resolve(const std::string& path) const;

  void write(const std::string& path, Bytes content,
             std::map<std::string, std::string> metadata = {});
  // Throws kNotFound if `path` is not currently readable.
  void remove(const std::string& path);

  // Read-only copy of the writable layer (entries and whiteouts).
  Layer extract_writable() const;

  // All currently readable paths.
  std::set<std::string> list() const;

  const Layer& base() const { return *base_; }
  const Layer& config() const { return *config_; }
  const Layer& writable() const { return writable_; }
  std::shared_ptr<const Layer> shared_base() const { return base_; }
  std::shared_ptr<const Layer> shared_config() const { return config_; }

  // Secure-erases the writable layer.
  void wipe_writable() { writable_.wipe(); }

 private:
  OverlayStack(std::shared_ptr<const Layer> base,
               std::shared_ptr<const Layer> config, Layer writable)
      : base_(std::move(base)),
        config_(std::move(config)),
        writable_(std::move(writable)) {}

  // True if a layer below the writable one exposes `path`.
  bool lower_readable(const std::string& path) const;

  std::shared_ptr<const Layer> base_;
  std::shared_ptr<const Layer> config_;
  Layer writable_;
};

}  // namespace nymkit::overlay
