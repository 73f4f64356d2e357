#include "nymkit/metrics/log.h"

#include <json.hpp>

namespace nymkit::metrics {

std::string_view phase_name(PhaseKind kind) {
  switch (kind) {
    case PhaseKind::kEphemeralLoader: return "EphemeralLoader";
    case PhaseKind::kVmBoot: return "VmBoot";
    case PhaseKind::kTransportStartup: return "TransportStartup";
    case PhaseKind::kPageLoad: return "PageLoad";
  }
  return "?";
}

void MetricsLog::record_phases(PhaseTrace trace) {
  std::lock_guard lock(mu_);
  phases_.push_back(std::move(trace));
}

void MetricsLog::record_store(StoreSample sample) {
  std::lock_guard lock(mu_);
  stores_.push_back(std::move(sample));
}

void MetricsLog::record_repair(RepairSample sample) {
  std::lock_guard lock(mu_);
  repairs_.push_back(std::move(sample));
}

std::vector<PhaseTrace> MetricsLog::phases() const {
  std::lock_guard lock(mu_);
  return phases_;
}

std::vector<StoreSample> MetricsLog::stores() const {
  std::lock_guard lock(mu_);
  return stores_;
}

std::vector<RepairSample> MetricsLog::repairs() const {
  std::lock_guard lock(mu_);
  return repairs_;
}

std::string MetricsLog::to_jsonl() const {
  std::lock_guard lock(mu_);
  std::string out;
  for (const auto& t : phases_) {
    nlohmann::json phases = nlohmann::json::array();
    for (const auto& p : t.phases) {
      phases.push_back({{"phase", phase_name(p.kind)},
                        {"start_ms", p.start_ms},
                        {"duration_ms", p.duration_ms}});
    }
    out += nlohmann::json{{"kind", "phases"}, {"nym", t.nym}, {"usage", t.usage},
                          {"phases", phases}}.dump() + "\n";
  }
  for (const auto& s : stores_) {
    out += nlohmann::json{{"kind", "store"}, {"nym", s.nym}, {"object", s.object},
                          {"mode", s.mode}, {"version", s.version},
                          {"archive_bytes", s.archive_bytes},
                          {"anon_layer_bytes", s.anon_layer_bytes},
                          {"comm_layer_bytes", s.comm_layer_bytes}}.dump() + "\n";
  }
  for (const auto& r : repairs_) {
    out += nlohmann::json{{"kind", "repair"}, {"os", r.os_label},
                          {"delta_bytes", r.delta_bytes}}.dump() + "\n";
  }
  return out;
}

}  // namespace nymkit::metrics
