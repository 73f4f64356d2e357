#include "nymkit/overlay/stack.h"

#include "nymkit/common/error.h"

namespace nymkit::overlay {

OverlayStack OverlayStack::stack_layers(std::shared_ptr<const Layer> base,
                                        std::shared_ptr<const Layer> config,
                                        Layer writable) {
  if (!base || !config) fail(Errc::kInvalidArgument, "missing layer");
  if (!base->read_only())
    fail(Errc::kInvalidArgument, "base layer must be read-only");
  if (!config->read_only())
    fail(Errc::kInvalidArgument, "config layer must be read-only");
  if (base == config || base->id() == config->id() ||
      base->digest() == config->digest()) {
    fail(Errc::kInvalidArgument,
         "config must be a distinct read-only layer");
  }
  if (writable.read_only())
    fail(Errc::kInvalidArgument, "top layer must be writable");
  if (!writable.empty())
    fail(Errc::kInvalidArgument, "writable layer must start empty");
  return OverlayStack(std::move(base), std::move(config), std::move(writable));
}

OverlayStack OverlayStack::restore(std::shared_ptr<const Layer> base,
                                   std::shared_ptr<const Layer> config,
                                   const Layer& saved_writable) {
  OverlayStack stack = stack_layers(
      std::move(base), std::move(config),
      Layer(saved_writable.id(), LayerMode::kWritable));
  for (const auto& [path, entry] : saved_writable.entries())
    stack.writable_.put(path, entry);
  for (const auto& path : saved_writable.whiteouts())
    stack.writable_.put_whiteout(path);
  return stack;
}

std::optional<Source> OverlayStack::resolve(const std::string& path) const {
  if (writable_.find(path)) return Source::kWritable;
  if (writable_.has_whiteout(path)) return std::nullopt;
  if (config_->find(path)) return Source::kConfig;
  if (config_->has_whiteout(path)) return std::nullopt;
  if (base_->find(path)) return Source::kBase;
  return std::nullopt;
}

std::optional<FileEntry> OverlayStack::read(const std::string& path) const {
  auto source = resolve(path);
  if (!source) return std::nullopt;
  switch (*source) {
    case Source::kWritable: return *writable_.find(path);
    case Source::kConfig: return *config_->find(path);
    case Source::kBase: return *base_->find(path);
  }
  return std::nullopt;
}

bool OverlayStack::lower_readable(const std::string& path) const {
  if (config_->find(path)) return true;
  if (config_->has_whiteout(path)) return false;
  return base_->find(path) != nullptr;
}

void OverlayStack::write(const std::string& path, Bytes content,
                         std::map<std::string, std::string> metadata) {
  writable_.put(path, FileEntry{std::move(content), std::move(metadata)});
}

void OverlayStack::remove(const std::string& path) {
  if (!resolve(path)) fail(Errc::kNotFound, "no such path: " + path);
  if (lower_readable(path)) {
    writable_.put_whiteout(path);
  } else {
    writable_.erase(path);
  }
}

Layer OverlayStack::extract_writable() const {
  return writable_.frozen(writable_.id());
}

std::set<std::string> OverlayStack::list() const {
  std::set<std::string> paths;
  auto consider = [&](const std::string& path) {
    if (resolve(path)) paths.insert(path);
  };
  for (const auto& [path, e] : base_->entries()) consider(path);
  for (const auto& [path, e] : config_->entries()) consider(path);
  for (const auto& [path, e] : writable_.entries()) consider(path);
  return paths;
}

}  // namespace nymkit::overlay
