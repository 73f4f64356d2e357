#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nymkit/common/digest.h"
#include "nymkit/metrics/log.h"
#include "nymkit/transports/transport.h"

namespace nymkit::metrics {

inline constexpr std::size_t kPageBytes = 4096;

struct PagePool {
  std::string owner;
  std::vector<Digest> pages;

  std::uint64_t byte_size() const { return pages.size() * kPageBytes; }
};

struct KsmReport {
  std::uint64_t used_bytes_no_merge = 0;
  std::uint64_t used_bytes_merged = 0;
  std::uint64_t shared_page_count = 0;

  double saving() const {
    return used_bytes_no_merge
               ? 1.0 - static_cast<double>(used_bytes_merged) / used_bytes_no_merge
               : 0.0;
  }
  nlohmann::json to_json() const;
};

// Pages with equal digests merge into one; shared_page_count is the number of
// pages freed by merging.
KsmReport ksm_account(const std::vector<PagePool>& pools);

// How a VM's pool is populated for the memory evaluation. Every pool draws
// its first `fraction * pool pages` pages from one common base page set
// (the shared read-only image both roles boot from); the rest are unique to
// the VM. Resident guest pages replace unique slots at their page number.
struct DuplicationModel {
  double anon_shared_fraction = 0.06;
  double comm_shared_fraction = 0.10;
};

struct VmPoolSpec {
  std::string owner;
  bool comm = false;
  std::uint32_t ram_mb = 0;
  std::uint32_t writable_disk_mb = 0;
  std::map<std::size_t, Digest> resident;
};

// Pool size is RAM plus the RAM-backed writable disk.
PagePool build_page_pool(const VmPoolSpec& vm, const DuplicationModel& model = {});

// Least-squares slope of (nym count, used bytes). Throws kInsufficientData
// for fewer than two distinct x values.
double per_nym_ram(const std::vector<std::pair<double, double>>& points);

struct BandwidthRow {
  std::size_t nym = 0;
  std::uint64_t payload_bytes = 0;
  std::uint64_t wire_bytes = 0;
  double overhead = 0.0;
  double completion_ms = 0.0;
};

struct BandwidthReport {
  transports::TransportKind kind = transports::TransportKind::kIncognito;
  std::size_t nyms = 0;
  double link_bytes_per_ms = 0.0;
  std::vector<BandwidthRow> rows;
  // Largest number of bytes delivered in any one tick, across all nyms.
  double max_tick_bytes = 0.0;

  double mean_completion_ms() const;
  std::string to_csv() const;
};

struct BandwidthOptions {
  double link_bytes_per_ms = 1250.0;  // 10 Mbit/s
  double tick_ms = 1.0;
  std::vector<transports::Relay> relays;  // empty: ten generated relays
};

// `nyms` parallel downloads of `payload_bytes` each over one shared link.
// Each tick the link's capacity is split evenly among unfinished downloads,
// with any share a download cannot use handed to the others.
BandwidthReport bandwidth_trial(transports::TransportKind kind, std::uint64_t payload_bytes,
                                std::size_t nyms, const BandwidthOptions& options = {});

// Mean duration per phase, by usage model.
struct PhaseReport {
  struct Row {
    std::string usage;
    PhaseKind phase = PhaseKind::kVmBoot;
    std::size_t runs = 0;
    double mean_ms = 0.0;
  };
  std::vector<Row> rows;

  double mean(const std::string& usage, PhaseKind phase) const;
  std::size_t runs(const std::string& usage) const;
  std::string to_csv() const;
};

PhaseReport phase_report(const std::vector<PhaseTrace>& traces);

struct SizePoint {
  std::size_t cycle = 0;
  std::uint64_t archive_bytes = 0;
  std::uint64_t anon_layer_bytes = 0;
  std::uint64_t comm_layer_bytes = 0;

  double anon_fraction() const {
    auto total = anon_layer_bytes + comm_layer_bytes;
    return total ? static_cast<double>(anon_layer_bytes) / total : 0.0;
  }
};

struct SizeSeries {
  std::string mode;
  std::vector<SizePoint> points;

  std::string to_csv() const;
  std::string to_jsonl() const;
};

struct RamPoint {
  std::size_t nyms = 0;
  KsmReport ksm;
};

std::string ram_series_csv(const std::vector<RamPoint>& series);

}  // namespace nymkit::metrics
