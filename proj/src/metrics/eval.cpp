#include "nymkit/metrics/eval.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_map>

#include "nymkit/common/error.h"

namespace nymkit::metrics {
namespace {

struct DigestHash {
  std::size_t operator()(const Digest& d) const {
    std::size_t h;
    std::memcpy(&h, d.bytes.data(), sizeof h);
    return h;
  }
};

Digest base_page(std::size_t i) { return sha256("nymkit base page " + std::to_string(i)); }

Digest unique_page(const std::string& owner, bool comm, std::size_t i) {
  return sha256(owner + (comm ? "/comm/" : "/anon/") + std::to_string(i));
}

}  // namespace

nlohmann::json KsmReport::to_json() const {
  return {{"used_bytes_no_merge", used_bytes_no_merge},
          {"used_bytes_merged", used_bytes_merged},
          {"shared_page_count", shared_page_count},
          {"saving", saving()}};
}

KsmReport ksm_account(const std::vector<PagePool>& pools) {
  KsmReport r;
  std::unordered_map<Digest, std::uint64_t, DigestHash> groups;
  std::uint64_t pages = 0;
  for (const auto& p : pools) {
    r.used_bytes_no_merge += p.byte_size();
    pages += p.pages.size();
    for (const auto& d : p.pages) ++groups[d];
  }
  r.shared_page_count = pages - groups.size();
  r.used_bytes_merged = r.used_bytes_no_merge - r.shared_page_count * kPageBytes;
  return r;
}

PagePool build_page_pool(const VmPoolSpec& vm, const DuplicationModel& model) {
  std::size_t total = (std::size_t{vm.ram_mb} + vm.writable_disk_mb) * (1024 * 1024 / kPageBytes);
  double fraction = vm.comm ? model.comm_shared_fraction : model.anon_shared_fraction;
  auto shared = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(total)));
  PagePool pool;
  pool.owner = vm.owner;
  pool.pages.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    pool.pages.push_back(i < shared ? base_page(i) : unique_page(vm.owner, vm.comm, i));
  }
  for (const auto& [page, digest] : vm.resident) {
    std::size_t slot = shared + page;
    if (slot < total) pool.pages[slot] = digest;
  }
  return pool;
}

double per_nym_ram(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 2) fail(Errc::kInsufficientData, "need at least two points");
  double n = static_cast<double>(points.size());
  double mx = 0, my = 0;
  for (const auto& [x, y] : points) {
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (const auto& [x, y] : points) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  if (sxx == 0) fail(Errc::kInsufficientData, "need at least two distinct nym counts");
  return sxy / sxx;
}

double BandwidthReport::mean_completion_ms() const {
  if (rows.empty()) return 0;
  double s = 0;
  for (const auto& r : rows) s += r.completion_ms;
  return s / static_cast<double>(rows.size());
}

std::string BandwidthReport::to_csv() const {
  std::ostringstream out;
  out << "kind,nyms,nym,payload_bytes,wire_bytes,overhead,completion_ms\n";
  for (const auto& r : rows) {
    out << transports::kind_name(kind) << "," << nyms << "," << r.nym << "," << r.payload_bytes
        << "," << r.wire_bytes << "," << r.overhead << "," << r.completion_ms << "\n";
  }
  return out.str();
}

BandwidthReport bandwidth_trial(transports::TransportKind kind, std::uint64_t payload_bytes,
                                std::size_t nyms, const BandwidthOptions& options) {
  if (nyms == 0 || payload_bytes == 0) fail(Errc::kInvalidArgument, "empty bandwidth trial");
  auto relays = options.relays;
  if (relays.empty()) {
    for (int i = 0; i < 10; ++i) relays.push_back({"bw-relay" + std::to_string(i)});
  }
  BandwidthReport report;
  report.kind = kind;
  report.nyms = nyms;
  report.link_bytes_per_ms = options.link_bytes_per_ms;

  std::vector<double> remaining;
  for (std::size_t i = 0; i < nyms; ++i) {
    auto t = transports::start_transport(kind, "bw-" + std::to_string(i), relays, std::nullopt);
    BandwidthRow row;
    row.nym = i;
    row.payload_bytes = payload_bytes;
    row.wire_bytes = t->wire_bytes(payload_bytes);
    row.overhead = transports::measure_overhead(*t, payload_bytes);
    report.rows.push_back(row);
    remaining.push_back(static_cast<double>(row.wire_bytes));
  }

  const double capacity = options.link_bytes_per_ms * options.tick_ms;
  double now = 0;
  std::size_t active = nyms;
  while (active > 0) {
    // Water-filling: equal shares, unused share goes back to the pool.
    double budget = capacity;
    std::vector<std::size_t> open;
    for (std::size_t i = 0; i < nyms; ++i) {
      if (remaining[i] > 0) open.push_back(i);
    }
    std::sort(open.begin(), open.end(), [&](auto a, auto b) { return remaining[a] < remaining[b]; });
    double delivered = 0;
    for (std::size_t k = 0; k < open.size(); ++k) {
      std::size_t i = open[k];
      double share = budget / static_cast<double>(open.size() - k);
      double take = std::min(share, remaining[i]);
      remaining[i] -= take;
      budget -= take;
      delivered += take;
      if (remaining[i] <= 0) {
        // Finishes part-way through the tick at the share's rate.
        report.rows[i].completion_ms = now + options.tick_ms * (take / share);
        --active;
      }
    }
    report.max_tick_bytes = std::max(report.max_tick_bytes, delivered);
    now += options.tick_ms;
  }
  return report;
}

double PhaseReport::mean(const std::string& usage, PhaseKind phase) const {
  for (const auto& r : rows) {
    if (r.usage == usage && r.phase == phase) return r.mean_ms;
  }
  return 0;
}

std::size_t PhaseReport::runs(const std::string& usage) const {
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.usage == usage) n = std::max(n, r.runs);
  }
  return n;
}

std::string PhaseReport::to_csv() const {
  std::ostringstream out;
  out << "usage,phase,runs,mean_ms\n";
  for (const auto& r : rows) {
    out << r.usage << "," << phase_name(r.phase) << "," << r.runs << "," << r.mean_ms << "\n";
  }
  return out.str();
}

PhaseReport phase_report(const std::vector<PhaseTrace>& traces) {
  std::map<std::pair<std::string, PhaseKind>, std::pair<std::size_t, double>> acc;
  for (const auto& t : traces) {
    for (const auto& p : t.phases) {
      auto& [n, sum] = acc[{t.usage, p.kind}];
      ++n;
      sum += static_cast<double>(p.duration_ms);
    }
  }
  PhaseReport r;
  for (const auto& [key, v] : acc) {
    r.rows.push_back({key.first, key.second, v.first, v.second / static_cast<double>(v.first)});
  }
  return r;
}

std::string SizeSeries::to_csv() const {
  std::ostringstream out;
  out << "mode,cycle,archive_bytes,anon_layer_bytes,comm_layer_bytes,anon_fraction\n";
  for (const auto& p : points) {
    out << mode << "," << p.cycle << "," << p.archive_bytes << "," << p.anon_layer_bytes << ","
        << p.comm_layer_bytes << "," << p.anon_fraction() << "\n";
  }
  return out.str();
}

std::string SizeSeries::to_jsonl() const {
  std::string out;
  for (const auto& p : points) {
    out += nlohmann::json{{"mode", mode},
                          {"cycle", p.cycle},
                          {"archive_bytes", p.archive_bytes},
                          {"anon_layer_bytes", p.anon_layer_bytes},
                          {"comm_layer_bytes", p.comm_layer_bytes},
                          {"anon_fraction", p.anon_fraction()}}
               .dump() +
           "\n";
  }
  return out;
}

std::string ram_series_csv(const std::vector<RamPoint>& series) {
  std::ostringstream out;
  out << "nyms,used_bytes_no_merge,used_bytes_merged,shared_page_count,saving\n";
  for (const auto& p : series) {
    out << p.nyms << "," << p.ksm.used_bytes_no_merge << "," << p.ksm.used_bytes_merged << ","
        << p.ksm.shared_page_count << "," << p.ksm.saving() << "\n";
  }
  return out.str();
}

}  // namespace nymkit::metrics
