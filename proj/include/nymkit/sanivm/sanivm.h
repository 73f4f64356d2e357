#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "nymkit/common/digest.h"
#include "nymkit/nymcore/engine.h"
#include "nymkit/sanivm/media.h"
#include "nymkit/sanivm/scrub.h"

namespace nymkit::sanivm {

// Host file systems mounted into the SaniVM. Read-only: every write is
// rejected with kReadOnly.
class SourceCatalog {
 public:
  // Mounts every regular file under `root`, keyed by relative path.
  static SourceCatalog mount(const std::filesystem::path& root);
  static SourceCatalog from_files(std::map<std::string, Bytes> files);

  std::vector<std::string> list() const;
  const Bytes& read(const std::string& name) const;
  Digest digest(const std::string& name) const;
  MediaFile open(const std::string& name) const;
  [[noreturn]] void write(const std::string& name, ByteView data) const;

 private:
  std::map<std::string, Bytes> files_;
};

struct TransferRequest {
  std::string nym;
  MediaFile file;
  ScrubPlan plan;
  // Fields whose High findings the user accepts without a covering transform.
  std::set<std::string> overrides;
};

struct TransferRecord {
  std::string file;
  std::string nym;
  std::vector<RiskFinding> findings;
  ScrubPlan plan;
  std::vector<std::string> overrides;
  std::string destination;  // path inside the AnonVM
  Digest delivered_digest;

  nlohmann::json to_json() const;
};

struct SaniConfig {
  // Capacity reported for the hypervisor shared folder. Fixed so it never
  // reveals the host's real free space.
  std::uint64_t shared_folder_capacity = 1ull << 30;
  // Appends one JSON line per transfer when set.
  std::optional<std::filesystem::path> audit_path;
};

// The non-networked sanitation VM: the only path by which host bytes reach a
// nym.
class SaniVm {
 public:
  explicit SaniVm(nymcore::Engine& engine, SaniConfig config = {});

  std::vector<RiskFinding> analyze(const MediaFile& file) const;

  // Scrubs a copy of the file and moves it through this VM's per-nym
  // directory and the hypervisor shared folder into the nym's inbound
  // directory. Throws kUnresolvedRisk if a High finding is neither covered by
  // the plan nor overridden, kKindMismatch, kUnknownNym.
  TransferRecord transfer(const TransferRequest& request);

  // Per-nym directories inside the SaniVM.
  std::vector<std::string> nym_directory(const std::string& nym) const;
  std::uint64_t shared_folder_capacity() const { return config_.shared_folder_capacity; }

  std::vector<TransferRecord> audit_log() const;
  std::string audit_jsonl() const;

  const RiskPolicy& policy() const { return policy_; }
  RiskPolicy& policy() { return policy_; }

 private:
  nymcore::Engine& engine_;
  SaniConfig config_;
  RiskPolicy policy_;
  mutable std::mutex mu_;
  std::map<std::string, std::vector<std::string>> directories_;
  std::vector<TransferRecord> audit_;
};

// Deterministic fixture corpus: images over every combination of GPS, serial,
// author, timestamp and face-region tags, documents over every combination of
// author, creator, device id and timestamp, and a few unrecognized files.
std::map<std::string, Bytes> fixture_corpus();

}  // namespace nymkit::sanivm
