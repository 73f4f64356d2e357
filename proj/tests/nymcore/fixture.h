#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>

#include "nymkit/nymcore/engine.h"

namespace nymkit::testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() /
           ("nymkit-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  return p;
}

// Cheap KDF, small base image, private store directory.
inline nymcore::EngineConfig test_config(const std::string& name) {
  nymcore::EngineConfig c;
  c.local_store_dir = scratch_dir(name);
  c.archive_kdf = snapstore::KdfParams::fast();
  c.base_image.files = 24;
  c.base_image.max_file_bytes = 8192;
  return c;
}

}  // namespace nymkit::testing
