#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "nymkit/nymcore/engine.h"
#include "nymkit/sanivm/sanivm.h"

namespace nymkit::ctl {

struct Settings {
  nymcore::EngineConfig engine;
  std::string default_backend = "local";
  // Host directory mounted read-only into the SaniVM. Unset: the built-in
  // fixture corpus.
  std::optional<std::filesystem::path> source_dir;
  sanivm::SaniConfig sanivm;
  std::chrono::milliseconds approval_timeout{30000};
  std::optional<std::filesystem::path> socket_path;
};

// INI-style file:
//
//   [engine]  host_ram_mb, rng_seed, store_dir, transport, seeded_loader,
//             relays (path to a relay directory), backend
//   [spec]    anon_ram_mb, anon_disk_mb, comm_ram_mb, comm_disk_mb
//   [latency] vm_boot_ms, stored_state_factor, link_bytes_per_ms, jitter
//   [archive] kdf_ops, kdf_mem_kib
//   [sanivm]  source_dir, audit_path, shared_folder_capacity
//   [ctl]     socket, approval_timeout_ms
//
// Unknown sections or keys are rejected with kBadFormat. Relative paths are
// resolved against `base_dir`.
Settings parse_settings(std::string_view text, Settings base = {},
                        const std::filesystem::path& base_dir = {});
Settings load_settings(const std::filesystem::path& path, Settings base = {});

}  // namespace nymkit::ctl
