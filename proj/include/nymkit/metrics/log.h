#pragma once

#include <cstdint>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace nymkit::metrics {

enum class PhaseKind { kEphemeralLoader, kVmBoot, kTransportStartup, kPageLoad };

std::string_view phase_name(PhaseKind kind);

struct Phase {
  PhaseKind kind = PhaseKind::kVmBoot;
  std::uint64_t start_ms = 0;
  std::uint64_t duration_ms = 0;
};

// Startup of one nym. `usage` is "ephemeral" for fresh nyms and the stored
// mode ("persistent", "preconfigured") for restored ones.
struct PhaseTrace {
  std::string nym;
  std::string usage;
  std::vector<Phase> phases;
};

struct StoreSample {
  std::string nym;
  std::string object;
  std::string mode;
  std::uint64_t version = 0;
  std::size_t archive_bytes = 0;
  std::size_t anon_layer_bytes = 0;
  std::size_t comm_layer_bytes = 0;
};

struct RepairSample {
  std::string os_label;
  std::size_t delta_bytes = 0;
};

// Append-only, thread-safe event log. Readers get copies.
class MetricsLog {
 public:
  void record_phases(PhaseTrace trace);
  void record_store(StoreSample sample);
  void record_repair(RepairSample sample);

  std::vector<PhaseTrace> phases() const;
  std::vector<StoreSample> stores() const;
  std::vector<RepairSample> repairs() const;

  // One JSON object per line, tagged with "kind".
  std::string to_jsonl() const;

 private:
  mutable std::mutex mu_;
  std::vector<PhaseTrace> phases_;
  std::vector<StoreSample> stores_;
  std::vector<RepairSample> repairs_;
};

}  // namespace nymkit::metrics
