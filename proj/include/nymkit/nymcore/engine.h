#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "nymkit/common/bytes.h"
#include "nymkit/common/digest.h"
#include "nymkit/hostnym/disk.h"
#include "nymkit/metrics/log.h"
#include "nymkit/netfabric/topology.h"
#include "nymkit/nymcore/memory.h"
#include "nymkit/overlay/merkle.h"
#include "nymkit/overlay/stack.h"
#include "nymkit/snapstore/archive.h"
#include "nymkit/snapstore/backend.h"
#include "nymkit/transports/internet.h"
#include "nymkit/transports/transport.h"

namespace nymkit::sanivm {
class SaniVm;
}

namespace nymkit::nymcore {

enum class NymMode { kEphemeral, kPersistent, kPreconfigured };
enum class NymState { kCreated, kRunning, kPaused, kStoring, kTerminated };
enum class VmRole { kAnon, kComm };
enum class StoreAction { kStoreThenTerminate, kDiscard };

std::string_view mode_name(NymMode m);
NymMode parse_mode(std::string_view s);  // case-insensitive
std::string_view state_name(NymState s);
std::string_view store_action_name(StoreAction a);

// The transition relation. Terminated is absorbing.
bool is_legal_transition(NymState from, NymState to);

struct VmSpec {
  std::uint32_t ram_mb = 0;
  std::uint32_t writable_disk_mb = 0;

  bool operator==(const VmSpec&) const = default;
};

struct NymBoxSpec {
  VmSpec anonvm{256, 256};
  VmSpec commvm{128, 16};

  bool operator==(const NymBoxSpec&) const = default;
  // Host RAM drawn by both VMs: memory plus RAM-backed writable disks.
  std::uint64_t host_ram_mb() const {
    return std::uint64_t{anonvm.ram_mb} + anonvm.writable_disk_mb + commvm.ram_mb +
           commvm.writable_disk_mb;
  }
  // Allocation used by the memory evaluation (128 MB AnonVM disk).
  static NymBoxSpec evaluation() { return {{256, 128}, {128, 16}}; }
};

// Simulated durations in milliseconds. Each sample is scaled by a uniform
// factor in [1 - jitter, 1 + jitter].
struct LatencyModel {
  std::uint64_t vm_boot_ms = 18000;
  std::map<transports::TransportKind, std::uint64_t> transport_startup_ms{
      {transports::TransportKind::kIncognito, 400},
      {transports::TransportKind::kOnionSim, 9000},
      {transports::TransportKind::kDcnetSim, 6000}};
  // Startup when the CommVM layer carries saved transport state.
  double stored_state_factor = 0.35;
  std::map<transports::TransportKind, std::uint64_t> page_load_ms{
      {transports::TransportKind::kIncognito, 1500},
      {transports::TransportKind::kOnionSim, 4200},
      {transports::TransportKind::kDcnetSim, 6500}};
  // Uplink used for downloads during loads, in bytes per ms (10 Mbit/s).
  double link_bytes_per_ms = 1250.0;
  double jitter = 0.05;
};

struct BaseImageSpec {
  std::string seed = "nymix-distribution";
  std::size_t files = 96;
  std::size_t min_file_bytes = 512;
  std::size_t max_file_bytes = 24 * 1024;
};

struct EngineConfig {
  std::uint64_t host_ram_mb = 16384;
  NymBoxSpec default_spec;
  transports::TransportKind default_transport = transports::TransportKind::kOnionSim;
  std::vector<transports::Relay> relays;  // empty: ten generated relays
  std::vector<std::string> web_hosts = {"start.page", "news.example", "mail.example",
                                        "video.example"};
  std::string cloud_host = "cloud.example";
  std::filesystem::path local_store_dir = "nymkit-store";
  BaseImageSpec base_image;
  // Root the base partition must authenticate against. When unset, the root
  // of the pristine image is pinned at engine construction.
  std::optional<Digest> pinned_merkle_root;
  snapstore::KdfParams archive_kdf;
  // Seed the loader nym's guard from (location, password).
  bool seeded_loader = true;
  LatencyModel latency;
  std::uint64_t rng_seed = 1;
  netfabric::HostAddresses addresses;
};

// Where a nym's quasi-persistent state lives.
struct StorageTarget {
  std::string backend = "local";  // "local" or "cloud"
  std::string object;
};

struct StoredReceipt {
  std::string backend;
  std::string object;
  std::uint64_t version = 0;
  Digest archive_digest;
  std::size_t archive_bytes = 0;
  std::size_t anon_layer_bytes = 0;
  std::size_t comm_layer_bytes = 0;
  bool boot_image = false;
};

struct LoadOptions {
  std::optional<std::uint64_t> version;
  // Overrides EngineConfig::seeded_loader.
  std::optional<bool> seeded_loader;
};

struct WorkloadSpec {
  std::size_t pages = 4;
  std::size_t page_bytes = 16 * 1024;
  // Bytes of transport state churn written to the CommVM per page.
  std::size_t comm_state_bytes = 512;
};

struct WorkloadResult {
  std::size_t pages = 0;
  std::size_t payload_bytes = 0;
  std::size_t wire_bytes = 0;
  std::vector<std::string> cached_paths;
};

enum class PersistencePolicy { kDiscard, kWriteBack, kStoreCow };
std::string_view policy_name(PersistencePolicy p);

struct HostBootOptions {
  // Anonymizing transports are off by default for host nyms.
  std::optional<transports::TransportKind> transport_override;
};

// Summary view of one nym, safe to hand to clients.
struct NymInfo {
  std::string id;
  NymMode mode = NymMode::kEphemeral;
  NymState state = NymState::kCreated;
  transports::TransportKind transport = transports::TransportKind::kIncognito;
  bool guard_seeded = false;
  std::optional<std::string> entry_guard;
  std::string exit_identity;
  NymBoxSpec spec;
  std::size_t anon_writable_bytes = 0;
  std::size_t comm_writable_bytes = 0;
  bool host_nym = false;
  bool loader = false;
  std::optional<StorageTarget> storage;

  nlohmann::json to_json() const;
};

// Capability held only by the SaniVM: the sole way to place bytes in a nym's
// inbound directory.
class InboundKey {
 private:
  InboundKey() = default;
  friend class sanivm::SaniVm;
};

inline constexpr std::string_view kInboundDir = "/home/user/inbound/";

using EventSink = std::function<void(const nlohmann::json&)>;

// The Nym Manager. All public members are thread-safe; operations are
// serialized engine-wide and complete in simulated time.
class Engine {
 public:
  explicit Engine(EngineConfig config = {});
  ~Engine();
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  const EngineConfig& config() const { return config_; }

  // Lifecycle ----------------------------------------------------------------

  // Throws kBudgetExceeded; transport start errors propagate and leave no nym.
  std::string create_nym(NymMode mode,
                         std::optional<transports::TransportKind> transport = std::nullopt,
                         std::optional<NymBoxSpec> spec = std::nullopt);
  void pause_nym(const std::string& nym);
  void resume_nym(const std::string& nym);
  // Throws kModeForbidsStore for Ephemeral nyms. On a Preconfigured nym this
  // is an explicit snapshot. Failures leave the nym Running and the stored
  // versions untouched.
  StoredReceipt store_nym(const std::string& nym, const StorageTarget& target,
                          std::string_view password);
  // Throws kModeMismatch unless Preconfigured.
  StoredReceipt snapshot_nym(const std::string& nym, const StorageTarget& target,
                             std::string_view password);
  // Throws kAuthFailure, kBadFormat, kNotFound. No nym survives a failure.
  std::string load_nym(const StorageTarget& target, std::string_view password,
                       const LoadOptions& options = {});
  // Idempotent on Terminated nyms.
  void terminate_nym(const std::string& nym);

  StoreAction session_end_policy(const std::string& nym) const;
  // Ends a session per session_end_policy. Persistent nyms need either a
  // password (store, then terminate) or discard = true; otherwise
  // kStoreRequired is thrown and the nym keeps running.
  std::optional<StoredReceipt> close_session(const std::string& nym,
                                             std::optional<std::string> password,
                                             bool discard = false,
                                             std::optional<StorageTarget> target = std::nullopt);

  // Files and workload -------------------------------------------------------

  // Reads through the VM's overlay. Base-image reads are authenticated
  // against the pinned Merkle root; a mismatch shuts the nym down and throws
  // kTamperDetected.
  std::optional<overlay::FileEntry> read_file(const std::string& nym, VmRole vm,
                                              const std::string& path);
  // Guest writes. The inbound directory is not writable this way.
  void write_file(const std::string& nym, VmRole vm, const std::string& path, Bytes content);
  void remove_file(const std::string& nym, VmRole vm, const std::string& path);
  std::set<std::string> list_files(const std::string& nym, VmRole vm) const;

  // Scripted browsing: fetch pages through the nym's transport and cache
  // them in the AnonVM's writable layer.
  WorkloadResult run_workload(const std::string& nym, const WorkloadSpec& spec = {});

  // Host writes into a nym's inbound directory. Throws kUnknownNym for
  // missing or terminated nyms.
  std::string deliver_inbound(const InboundKey& key, const std::string& nym,
                              const std::string& name, Bytes content);

  // Host nyms ----------------------------------------------------------------

  // Runs the repair step on a bare-metal Windows image and records the delta
  // size. Throws kNotApplicable.
  hostnym::CowDisk repair_host_disk(std::shared_ptr<hostnym::HostDiskImage> disk);
  // Throws kDriverMismatch for bare-metal Windows without a repair delta, and
  // kInvalidArgument if another live host nym is using the same disk.
  std::string boot_host_nym(hostnym::CowDisk disk, const HostBootOptions& options = {});
  void set_persistence_policy(const std::string& nym, PersistencePolicy policy,
                              bool confirmed = false);
  PersistencePolicy persistence_policy(const std::string& nym) const;
  // Packs the COW upper layer; the manifest records the lower digest.
  StoredReceipt store_host_cow(const std::string& nym, const StorageTarget& target,
                               std::string_view password);
  // Throws kStaleBase if `lower` differs from the image the COW was taken on.
  hostnym::CowDisk restore_host_cow(std::shared_ptr<hostnym::HostDiskImage> lower,
                                    const StorageTarget& target, std::string_view password);
  void write_host_block(const std::string& nym, std::size_t block, ByteView data);
  Bytes read_host_block(const std::string& nym, std::size_t block) const;

  // Inspection ---------------------------------------------------------------

  std::vector<NymInfo> list_nyms(bool include_terminated = false) const;
  NymInfo info(const std::string& nym) const;
  NymState state(const std::string& nym) const;
  // Rebuilt from the current topology.
  netfabric::LeakReport probe() const;
  netfabric::Topology topology() const;
  netfabric::VmIdentity vm_identity(const std::string& nym) const;
  const transports::Transport& transport(const std::string& nym) const;
  // Copy of a VM's writable layer.
  overlay::Layer writable_layer(const std::string& nym, VmRole vm) const;

  const overlay::Layer& base_image() const { return *base_; }
  Digest base_digest() const { return base_->digest(); }
  const Digest& pinned_merkle_root() const { return pinned_root_; }
  const overlay::MerkleIndex& merkle_index() const { return merkle_; }
  // Serialized base image the VMs read from (the host OS partition).
  ByteView base_partition() const { return partition_; }
  // Verifies every chunk of the partition; returns the failing chunk numbers.
  std::vector<std::size_t> verify_base_partition() const;
  // Fault injection: flips bits in the partition.
  void tamper_base_partition(std::size_t offset, std::uint8_t xor_mask);

  transports::Internet& internet() { return internet_; }
  snapstore::StorageBackend& backend(const std::string& name);
  snapstore::MockCloudBackend& cloud() { return *cloud_; }
  // Signs up on first use, then logs in.
  void cloud_login(const std::string& account, std::string_view password);

  metrics::MetricsLog& metrics() { return metrics_; }
  std::uint64_t now_ms() const;
  std::uint64_t used_host_ram_mb() const;

  // Per-VM page digests under the duplication model used by the memory
  // evaluation; see metrics::build_page_pools.
  struct VmPages {
    std::string owner;
    VmRole role = VmRole::kAnon;
    VmSpec spec;
    std::map<std::size_t, Digest> resident;
  };
  std::vector<VmPages> vm_pages() const;

  // Everything the engine holds: records, layers, VM memory, host frames
  // (free ones included), fabric queues, logs. Used for residue scans.
  Bytes serialize_state() const;

  // Events -------------------------------------------------------------------

  int subscribe(EventSink sink);
  void unsubscribe(int id);

 private:
  struct NymRecord;

  NymRecord& record(const std::string& nym);
  const NymRecord& record(const std::string& nym) const;
  NymRecord& live_record(const std::string& nym);
  void transition(NymRecord& r, NymState to);
  std::string next_id();
  std::uint64_t sample(std::uint64_t base_ms);
  void emit(nlohmann::json event);

  std::string spawn(NymMode mode, transports::TransportKind kind, const NymBoxSpec& spec,
                    std::optional<transports::GuardSeed> seed,
                    std::optional<snapstore::Unpacked> restored,
                    std::optional<hostnym::CowDisk> host_disk, bool loader,
                    std::string usage, std::vector<metrics::Phase> prefix_phases);
  void erase_record(NymRecord& r);
  StoredReceipt store_locked(NymRecord& r, const StorageTarget& target,
                             std::string_view password, bool boot_image);
  std::optional<transports::StreamHandle> open_stream(NymRecord& r,
                                                      snapstore::StorageBackend& be);
  overlay::OverlayStack& stack(NymRecord& r, VmRole vm);
  const overlay::OverlayStack& stack(const NymRecord& r, VmRole vm) const;
  overlay::FileEntry verified_base_read(NymRecord& r, const std::string& path);
  void write_guest(NymRecord& r, VmRole vm, const std::string& path, Bytes content,
                   std::map<std::string, std::string> metadata = {});
  NymInfo info_locked(const NymRecord& r) const;

  EngineConfig config_;
  mutable std::recursive_mutex mu_;

  std::shared_ptr<const overlay::Layer> base_;
  std::shared_ptr<const overlay::Layer> anon_config_;
  std::map<transports::TransportKind, std::shared_ptr<const overlay::Layer>> comm_configs_;
  Bytes partition_;
  std::map<std::string, overlay::RecordExtent> extents_;
  overlay::MerkleIndex merkle_;
  Digest pinned_root_;

  netfabric::Fabric fabric_;
  transports::Internet internet_;
  HostArena arena_;
  std::map<std::string, std::unique_ptr<NymRecord>> records_;
  std::uint64_t next_nym_ = 1;
  std::uint64_t clock_ms_ = 0;
  std::mt19937_64 rng_;

  std::unique_ptr<snapstore::LocalDirBackend> local_;
  std::unique_ptr<snapstore::MockCloudBackend> cloud_;
  std::set<std::string> cloud_accounts_;

  metrics::MetricsLog metrics_;
  std::vector<nlohmann::json> event_log_;
  std::map<int, EventSink> sinks_;
  int next_sink_ = 1;
};

}  // namespace nymkit::nymcore
