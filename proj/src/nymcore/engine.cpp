#include "nymkit/nymcore/engine.h"

#include <sodium.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "nymkit/common/error.h"
#include "nymkit/common/log.h"
#include "nymkit/transports/dns.h"

namespace nymkit::nymcore {

using transports::TransportKind;

// Names ----------------------------------------------------------------------

std::string_view mode_name(NymMode m) {
  switch (m) {
    case NymMode::kEphemeral: return "Ephemeral";
    case NymMode::kPersistent: return "Persistent";
    case NymMode::kPreconfigured: return "Preconfigured";
  }
  return "?";
}

NymMode parse_mode(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (lower == "ephemeral") return NymMode::kEphemeral;
  if (lower == "persistent") return NymMode::kPersistent;
  if (lower == "preconfigured" || lower == "pre-configured") return NymMode::kPreconfigured;
  fail(Errc::kInvalidArgument, "unknown nym mode: " + std::string(s));
}

std::string_view state_name(NymState s) {
  switch (s) {
    case NymState::kCreated: return "Created";
    case NymState::kRunning: return "Running";
    case NymState::kPaused: return "Paused";
    case NymState::kStoring: return "Storing";
    case NymState::kTerminated: return "Terminated";
  }
  return "?";
}

std::string_view store_action_name(StoreAction a) {
  return a == StoreAction::kStoreThenTerminate ? "StoreThenTerminate" : "Discard";
}

std::string_view policy_name(PersistencePolicy p) {
  switch (p) {
    case PersistencePolicy::kDiscard: return "Discard";
    case PersistencePolicy::kWriteBack: return "WriteBack";
    case PersistencePolicy::kStoreCow: return "StoreCow";
  }
  return "?";
}

bool is_legal_transition(NymState from, NymState to) {
  using S = NymState;
  switch (from) {
    case S::kCreated: return to == S::kRunning || to == S::kTerminated;
    case S::kRunning: return to == S::kPaused || to == S::kTerminated;
    case S::kPaused: return to == S::kRunning || to == S::kStoring || to == S::kTerminated;
    case S::kStoring: return to == S::kRunning;
    case S::kTerminated: return false;
  }
  return false;
}

nlohmann::json NymInfo::to_json() const {
  nlohmann::json j = {
      {"id", id},
      {"mode", mode_name(mode)},
      {"state", state_name(state)},
      {"transport", transports::kind_name(transport)},
      {"guard_seeded", guard_seeded},
      {"exit_identity", exit_identity},
      {"spec", {{"anonvm", {{"ram_mb", spec.anonvm.ram_mb},
                            {"writable_disk_mb", spec.anonvm.writable_disk_mb}}},
                {"commvm", {{"ram_mb", spec.commvm.ram_mb},
                            {"writable_disk_mb", spec.commvm.writable_disk_mb}}}}},
      {"anon_writable_bytes", anon_writable_bytes},
      {"comm_writable_bytes", comm_writable_bytes},
      {"host_nym", host_nym},
      {"loader", loader},
  };
  j["entry_guard"] = entry_guard ? nlohmann::json(*entry_guard) : nlohmann::json(nullptr);
  if (storage) j["storage"] = {{"backend", storage->backend}, {"object", storage->object}};
  return j;
}

// Record ---------------------------------------------------------------------

struct Engine::NymRecord {
  std::string id;
  NymMode mode = NymMode::kEphemeral;
  NymState state = NymState::kCreated;
  NymBoxSpec spec;
  TransportKind kind = TransportKind::kIncognito;
  std::optional<overlay::OverlayStack> anon;
  std::optional<overlay::OverlayStack> comm;
  std::unique_ptr<transports::Transport> transport;
  bool guard_seeded = false;
  std::unique_ptr<VmMemory> anon_mem;
  std::unique_ptr<VmMemory> comm_mem;
  std::optional<hostnym::CowDisk> host_disk;
  PersistencePolicy policy = PersistencePolicy::kDiscard;
  bool loader = false;
  std::optional<StorageTarget> storage;
};

namespace {

std::string hex8(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(8) << std::setfill('0') << v;
  return s.str();
}

Bytes keystream(std::string_view material, std::size_t n) {
  crypto_init();
  Digest key = blake2b(as_bytes(material));
  std::array<std::uint8_t, crypto_stream_chacha20_NONCEBYTES> nonce{};
  Bytes out(n);
  crypto_stream_chacha20(out.data(), out.size(), nonce.data(), key.bytes.data());
  return out;
}

std::vector<transports::Relay> default_relays() {
  std::vector<transports::Relay> out;
  for (int i = 0; i < 10; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "relay%02d", i);
    out.push_back({id, true, true, true});
  }
  return out;
}

std::string state_path(TransportKind kind) {
  switch (kind) {
    case TransportKind::kOnionSim: return "/var/lib/tor/state";
    case TransportKind::kDcnetSim: return "/var/lib/dcnet/state";
    case TransportKind::kIncognito: return {};
  }
  return {};
}

std::string spec_string(const NymBoxSpec& s) {
  return std::to_string(s.anonvm.ram_mb) + "/" + std::to_string(s.anonvm.writable_disk_mb) +
         "/" + std::to_string(s.commvm.ram_mb) + "/" + std::to_string(s.commvm.writable_disk_mb);
}

NymBoxSpec parse_spec(const std::string& s) {
  NymBoxSpec spec;
  char sep;
  std::istringstream in(s);
  if (!(in >> spec.anonvm.ram_mb >> sep >> spec.anonvm.writable_disk_mb >> sep >>
        spec.commvm.ram_mb >> sep >> spec.commvm.writable_disk_mb)) {
    fail(Errc::kBadFormat, "malformed spec attribute");
  }
  return spec;
}

overlay::Layer build_base_image(const BaseImageSpec& spec) {
  overlay::Layer l("base", overlay::LayerMode::kWritable);
  std::map<std::string, std::string> meta{{"mtime", "1380585600"}, {"mode", "0644"}};
  l.put("/etc/rc.local", {to_bytes("#!/bin/sh\n# distribution default\nexit 0\n"), meta});
  l.put("/etc/hostname", {to_bytes("nymix\n"), meta});
  l.put("/etc/resolv.conf", {to_bytes("nameserver 10.0.0.1\n"), meta});
  Bytes sizes = keystream(spec.seed + "/sizes", spec.files * 4);
  for (std::size_t i = 0; i < spec.files; ++i) {
    std::uint32_t r = (std::uint32_t{sizes[4 * i]} << 24) | (std::uint32_t{sizes[4 * i + 1]} << 16) |
                      (std::uint32_t{sizes[4 * i + 2]} << 8) | sizes[4 * i + 3];
    std::size_t span = spec.max_file_bytes - spec.min_file_bytes + 1;
    std::size_t n = spec.min_file_bytes + r % span;
    std::string path = i % 3 == 0   ? "/usr/bin/tool" + std::to_string(i)
                       : i % 3 == 1 ? "/usr/lib/lib" + std::to_string(i) + ".so"
                                    : "/usr/share/doc/pkg" + std::to_string(i);
    auto m = meta;
    if (i % 3 == 0) m["mode"] = "0755";
    l.put(path, {keystream(spec.seed + path, n), m});
  }
  return l.frozen("base");
}

std::shared_ptr<const overlay::Layer> anon_config_layer() {
  overlay::Layer l("config/anon", overlay::LayerMode::kWritable);
  std::map<std::string, std::string> meta{{"mtime", "1380585600"}, {"mode", "0755"}};
  l.put("/etc/rc.local",
        {to_bytes("#!/bin/sh\n# AnonVM: all traffic leaves over the wire to the CommVM\n"
                  "exec chromium --proxy-server=socks5://10.0.0.1:9050\n"),
         meta});
  l.put("/etc/nymix/role", {to_bytes("anon\n"), {}});
  return std::make_shared<const overlay::Layer>(l.frozen("config/anon"));
}

std::shared_ptr<const overlay::Layer> comm_config_layer(TransportKind kind) {
  std::string id = "config/comm/" + std::string(transports::kind_name(kind));
  overlay::Layer l(id, overlay::LayerMode::kWritable);
  std::map<std::string, std::string> meta{{"mtime", "1380585600"}, {"mode", "0755"}};
  std::string daemon = kind == TransportKind::kOnionSim   ? "tor -f /etc/tor/torrc"
                       : kind == TransportKind::kDcnetSim ? "dcnet-client --group /etc/dcnet"
                                                          : "nat-forward --masquerade";
  l.put("/etc/rc.local",
        {to_bytes("#!/bin/sh\n# CommVM: anonymizer on the wire side, NAT uplink\nexec " +
                  daemon + "\n"),
         meta});
  l.put("/etc/nymix/role", {to_bytes("comm\n"), {}});
  l.put("/etc/nymix/transport", {to_bytes(std::string(transports::kind_name(kind)) + "\n"), {}});
  return std::make_shared<const overlay::Layer>(l.frozen(id));
}

}  // namespace

// Construction ---------------------------------------------------------------

Engine::Engine(EngineConfig config)
    : config_(std::move(config)),
      fabric_(netfabric::Topology()),
      rng_(config_.rng_seed) {
  crypto_init();
  if (config_.relays.empty()) config_.relays = default_relays();

  base_ = std::make_shared<const overlay::Layer>(build_base_image(config_.base_image));
  anon_config_ = anon_config_layer();
  for (auto k : {TransportKind::kIncognito, TransportKind::kOnionSim, TransportKind::kDcnetSim}) {
    comm_configs_[k] = comm_config_layer(k);
  }
  partition_ = base_->serialize();
  extents_ = base_->record_extents();
  merkle_ = overlay::MerkleIndex::build(partition_);
  pinned_root_ = config_.pinned_merkle_root.value_or(merkle_.root());

  std::vector<std::string> inet = config_.web_hosts;
  inet.push_back(config_.cloud_host);
  inet.push_back(std::string(transports::kResolverHost));
  fabric_.topology() = netfabric::Topology::host(inet, {"lan"}, config_.addresses);
  int octet = 10;
  for (const auto& h : inet) internet_.add_host(h, "203.0.113." + std::to_string(octet++));

  local_ = std::make_unique<snapstore::LocalDirBackend>(config_.local_store_dir);
  cloud_ = std::make_unique<snapstore::MockCloudBackend>(config_.cloud_host);
}

Engine::~Engine() {
  std::lock_guard lock(mu_);
  for (auto& [id, r] : records_) {
    if (r->state != NymState::kTerminated) erase_record(*r);
  }
}

// Helpers --------------------------------------------------------------------

Engine::NymRecord& Engine::record(const std::string& nym) {
  auto it = records_.find(nym);
  if (it == records_.end()) fail(Errc::kUnknownNym, "no such nym: " + nym);
  return *it->second;
}

const Engine::NymRecord& Engine::record(const std::string& nym) const {
  auto it = records_.find(nym);
  if (it == records_.end()) fail(Errc::kUnknownNym, "no such nym: " + nym);
  return *it->second;
}

Engine::NymRecord& Engine::live_record(const std::string& nym) {
  NymRecord& r = record(nym);
  if (r.state == NymState::kTerminated) fail(Errc::kUnknownNym, "nym is terminated: " + nym);
  return r;
}

void Engine::transition(NymRecord& r, NymState to) {
  if (!is_legal_transition(r.state, to)) {
    fail(Errc::kIllegalTransition, r.id + ": " + std::string(state_name(r.state)) + " -> " +
                                       std::string(state_name(to)));
  }
  NymState from = r.state;
  r.state = to;
  emit({{"event", "state"}, {"nym", r.id}, {"from", state_name(from)}, {"to", state_name(to)}});
}

std::string Engine::next_id() { return "nym-" + std::to_string(next_nym_++); }

std::uint64_t Engine::sample(std::uint64_t base_ms) {
  double j = config_.latency.jitter;
  std::uniform_real_distribution<double> d(1.0 - j, 1.0 + j);
  return static_cast<std::uint64_t>(std::llround(static_cast<double>(base_ms) * d(rng_)));
}

void Engine::emit(nlohmann::json event) {
  event["seq"] = event_log_.size() + 1;
  event["t_ms"] = clock_ms_;
  event_log_.push_back(event);
  for (auto& [id, sink] : sinks_) sink(event);
}

int Engine::subscribe(EventSink sink) {
  std::lock_guard lock(mu_);
  sinks_[next_sink_] = std::move(sink);
  return next_sink_++;
}

void Engine::unsubscribe(int id) {
  std::lock_guard lock(mu_);
  sinks_.erase(id);
}

std::uint64_t Engine::now_ms() const {
  std::lock_guard lock(mu_);
  return clock_ms_;
}

std::uint64_t Engine::used_host_ram_mb() const {
  std::lock_guard lock(mu_);
  std::uint64_t used = 0;
  for (const auto& [id, r] : records_) {
    if (r->state != NymState::kTerminated) used += r->spec.host_ram_mb();
  }
  return used;
}

overlay::OverlayStack& Engine::stack(NymRecord& r, VmRole vm) {
  auto& s = vm == VmRole::kAnon ? r.anon : r.comm;
  if (!s) fail(Errc::kNotApplicable, r.id + " has no overlay for that VM");
  return *s;
}

const overlay::OverlayStack& Engine::stack(const NymRecord& r, VmRole vm) const {
  const auto& s = vm == VmRole::kAnon ? r.anon : r.comm;
  if (!s) fail(Errc::kNotApplicable, r.id + " has no overlay for that VM");
  return *s;
}

snapstore::StorageBackend& Engine::backend(const std::string& name) {
  if (name == "local") return *local_;
  if (name == "cloud") return *cloud_;
  fail(Errc::kInvalidArgument, "unknown backend: " + name);
}

void Engine::cloud_login(const std::string& account, std::string_view password) {
  std::lock_guard lock(mu_);
  if (!cloud_accounts_.contains(account)) {
    cloud_->create_account(account, password);
    cloud_accounts_.insert(account);
  }
  cloud_->login(account, password);
}

std::optional<transports::StreamHandle> Engine::open_stream(NymRecord& r,
                                                            snapstore::StorageBackend& be) {
  auto host = be.host();
  if (!host) return std::nullopt;
  return r.transport->proxy_connect({*host, 443, {}}, internet_);
}

// Spawning -------------------------------------------------------------------

std::string Engine::spawn(NymMode mode, TransportKind kind, const NymBoxSpec& spec,
                          std::optional<transports::GuardSeed> seed,
                          std::optional<snapstore::Unpacked> restored,
                          std::optional<hostnym::CowDisk> host_disk, bool loader,
                          std::string usage, std::vector<metrics::Phase> prefix_phases) {
  std::uint64_t used = 0;
  for (const auto& [id, r] : records_) {
    if (r->state != NymState::kTerminated) used += r->spec.host_ram_mb();
  }
  if (used + spec.host_ram_mb() > config_.host_ram_mb) {
    fail(Errc::kBudgetExceeded, "host RAM budget of " + std::to_string(config_.host_ram_mb) +
                                    " MB exceeded");
  }

  auto rec = std::make_unique<NymRecord>();
  NymRecord& r = *rec;
  r.id = next_id();
  r.mode = mode;
  r.spec = spec;
  r.kind = kind;
  r.loader = loader;
  r.guard_seeded = seed.has_value();

  // Transport first: if it cannot start, nothing else has been touched.
  r.transport = transports::start_transport(kind, r.id, config_.relays, seed, clock_ms_,
                                            {.gateway_address = config_.addresses.gateway});

  auto comm_cfg = comm_configs_.at(kind);
  if (host_disk) {
    r.host_disk = std::move(host_disk);
  } else if (restored) {
    r.anon = overlay::OverlayStack::restore(base_, anon_config_, restored->anon);
  } else {
    r.anon = overlay::OverlayStack::stack_layers(
        base_, anon_config_, overlay::Layer(r.id + "/anon", overlay::LayerMode::kWritable));
  }
  if (restored) {
    r.comm = overlay::OverlayStack::restore(base_, comm_cfg, restored->comm);
  } else {
    r.comm = overlay::OverlayStack::stack_layers(
        base_, comm_cfg, overlay::Layer(r.id + "/comm", overlay::LayerMode::kWritable));
  }
  r.anon_mem = std::make_unique<VmMemory>(&arena_, std::size_t{spec.anonvm.ram_mb} * 256);
  r.comm_mem = std::make_unique<VmMemory>(&arena_, std::size_t{spec.commvm.ram_mb} * 256);

  fabric_.topology() = netfabric::build_nymbox_topology(r.id, fabric_.topology());
  records_.emplace(r.id, std::move(rec));
  emit({{"event", "created"}, {"nym", r.id}, {"mode", mode_name(mode)},
        {"transport", transports::kind_name(kind)}, {"loader", loader}});

  std::vector<metrics::Phase> phases = std::move(prefix_phases);
  auto phase = [&](metrics::PhaseKind k, std::uint64_t d) {
    phases.push_back({k, clock_ms_, d});
    clock_ms_ += d;
  };
  phase(metrics::PhaseKind::kVmBoot, sample(config_.latency.vm_boot_ms));

  std::string sp = state_path(kind);
  bool stored_state = !sp.empty() && r.comm->read(sp).has_value();
  double startup = static_cast<double>(config_.latency.transport_startup_ms.at(kind));
  if (stored_state) startup *= config_.latency.stored_state_factor;
  phase(metrics::PhaseKind::kTransportStartup, sample(static_cast<std::uint64_t>(startup)));
  if (!sp.empty() && !stored_state) {
    std::string state = "guard " + r.transport->circuit().value_or(transports::CircuitState{}).entry_guard +
                        "\nestablished " + std::to_string(clock_ms_) + "\n";
    r.comm->write(sp, to_bytes(state));
  }
  transition(r, NymState::kRunning);

  if (!loader) {
    auto stream = r.transport->proxy_connect({config_.web_hosts.front(), 443, {}}, internet_);
    stream.write(as_bytes("GET / HTTP/1.1\r\n\r\n"));
    phase(metrics::PhaseKind::kPageLoad, sample(config_.latency.page_load_ms.at(kind)));
    metrics_.record_phases({r.id, std::move(usage), std::move(phases)});
  }
  logger()->info("started {} mode={} transport={}", r.id, mode_name(mode),
                 transports::kind_name(kind));
  return r.id;
}

std::string Engine::create_nym(NymMode mode, std::optional<TransportKind> transport,
                               std::optional<NymBoxSpec> spec) {
  std::lock_guard lock(mu_);
  return spawn(mode, transport.value_or(config_.default_transport),
               spec.value_or(config_.default_spec), std::nullopt, std::nullopt, std::nullopt,
               false, "ephemeral", {});
}

void Engine::pause_nym(const std::string& nym) {
  std::lock_guard lock(mu_);
  transition(record(nym), NymState::kPaused);
}

void Engine::resume_nym(const std::string& nym) {
  std::lock_guard lock(mu_);
  NymRecord& r = record(nym);
  if (r.state != NymState::kPaused) {
    fail(Errc::kIllegalTransition, nym + ": resume requires Paused");
  }
  transition(r, NymState::kRunning);
}

// Store ----------------------------------------------------------------------

StoredReceipt Engine::store_locked(NymRecord& r, const StorageTarget& target,
                                   std::string_view password, bool boot_image) {
  if (r.state != NymState::kRunning && r.state != NymState::kPaused) {
    fail(Errc::kIllegalTransition, r.id + ": store requires Running or Paused");
  }
  if (r.host_disk) fail(Errc::kNotApplicable, "host nyms persist through their policy");
  snapstore::StorageBackend& be = backend(target.backend);
  snapstore::validate_object_name(target.object);

  if (r.state == NymState::kRunning) transition(r, NymState::kPaused);
  transition(r, NymState::kStoring);
  try {
    overlay::Layer anon = r.anon->extract_writable();
    overlay::Layer comm = r.comm->extract_writable();
    snapstore::Manifest m;
    m.nym_name = target.object;
    m.mode = std::string(mode_name(r.mode));
    m.created_at = clock_ms_;
    m.boot_image = boot_image;
    m.attributes["transport"] = std::string(transports::kind_name(r.kind));
    m.attributes["spec"] = spec_string(r.spec);
    Bytes archive = snapstore::pack(anon, comm, m, password, {config_.archive_kdf, {}, {}});

    auto stream = open_stream(r, be);
    std::uint64_t version = be.put(stream ? &*stream : nullptr, target.object, archive);

    StoredReceipt receipt{target.backend, target.object, version, sha256(archive),
                          archive.size(), anon.serialize().size(), comm.serialize().size(),
                          boot_image};
    metrics_.record_store({r.id, target.object, std::string(mode_name(r.mode)), version,
                           receipt.archive_bytes, receipt.anon_layer_bytes,
                           receipt.comm_layer_bytes});
    r.storage = target;
    transition(r, NymState::kRunning);
    emit({{"event", "stored"}, {"nym", r.id}, {"backend", target.backend},
          {"object", target.object}, {"version", version},
          {"archive_bytes", receipt.archive_bytes}, {"boot_image", boot_image}});
    logger()->info("stored {} as {}:{} v{}", r.id, target.backend, target.object, version);
    return receipt;
  } catch (...) {
    transition(r, NymState::kRunning);
    throw;
  }
}

StoredReceipt Engine::store_nym(const std::string& nym, const StorageTarget& target,
                                std::string_view password) {
  std::lock_guard lock(mu_);
  NymRecord& r = live_record(nym);
  if (r.mode == NymMode::kEphemeral) {
    fail(Errc::kModeForbidsStore, nym + " is ephemeral and cannot be stored");
  }
  return store_locked(r, target, password, r.mode == NymMode::kPreconfigured);
}

StoredReceipt Engine::snapshot_nym(const std::string& nym, const StorageTarget& target,
                                   std::string_view password) {
  std::lock_guard lock(mu_);
  NymRecord& r = live_record(nym);
  if (r.mode != NymMode::kPreconfigured) {
    fail(Errc::kModeMismatch, nym + " is not a pre-configured nym");
  }
  return store_locked(r, target, password, true);
}

// Load -----------------------------------------------------------------------

std::string Engine::load_nym(const StorageTarget& target, std::string_view password,
                             const LoadOptions& options) {
  std::lock_guard lock(mu_);
  snapstore::StorageBackend& be = backend(target.backend);
  snapstore::validate_object_name(target.object);
  std::string location = be.location(target.object);
  transports::GuardSeed seed = snapstore::derive_guard_seed(location, password);
  bool seeded_loader = options.seeded_loader.value_or(config_.seeded_loader);

  std::uint64_t t0 = clock_ms_;
  std::string loader_id =
      spawn(NymMode::kEphemeral, config_.default_transport, config_.default_spec,
            seeded_loader ? std::optional(seed) : std::nullopt, std::nullopt, std::nullopt,
            true, {}, {});
  Bytes archive;
  try {
    NymRecord& loader = record(loader_id);
    auto stream = open_stream(loader, be);
    archive = be.get(stream ? &*stream : nullptr, target.object, options.version);
    if (stream) {
      clock_ms_ += static_cast<std::uint64_t>(
          std::ceil(static_cast<double>(loader.transport->wire_bytes(archive.size())) /
                    config_.latency.link_bytes_per_ms));
    }
  } catch (...) {
    terminate_nym(loader_id);
    throw;
  }
  terminate_nym(loader_id);
  std::vector<metrics::Phase> prefix{{metrics::PhaseKind::kEphemeralLoader, t0, clock_ms_ - t0}};

  snapstore::Unpacked unpacked = snapstore::unpack(archive, password);
  if (unpacked.manifest.attributes.contains("host_lower_digest")) {
    fail(Errc::kKindMismatch, "archive holds a host-nym COW disk");
  }
  NymMode mode = parse_mode(unpacked.manifest.mode);
  TransportKind kind = config_.default_transport;
  if (auto it = unpacked.manifest.attributes.find("transport");
      it != unpacked.manifest.attributes.end()) {
    kind = transports::parse_kind(it->second);
  }
  NymBoxSpec spec = config_.default_spec;
  if (auto it = unpacked.manifest.attributes.find("spec");
      it != unpacked.manifest.attributes.end()) {
    spec = parse_spec(it->second);
  }
  std::string usage(mode_name(mode));
  std::transform(usage.begin(), usage.end(), usage.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  std::string id = spawn(mode, kind, spec, seed, std::move(unpacked), std::nullopt, false,
                         usage, std::move(prefix));
  record(id).storage = target;
  emit({{"event", "loaded"}, {"nym", id}, {"backend", target.backend}, {"object", target.object}});
  return id;
}

// Terminate ------------------------------------------------------------------

void Engine::erase_record(NymRecord& r) {
  if (r.host_disk) {
    if (r.policy == PersistencePolicy::kWriteBack) r.host_disk->merge_into_lower();
    r.host_disk->wipe_upper();
    r.host_disk.reset();
  }
  if (r.anon) r.anon->wipe_writable();
  if (r.comm) r.comm->wipe_writable();
  r.anon.reset();
  r.comm.reset();
  if (r.anon_mem) r.anon_mem->secure_erase();
  if (r.comm_mem) r.comm_mem->secure_erase();
  r.anon_mem.reset();
  r.comm_mem.reset();
  if (r.transport) r.transport->stop();
  r.transport.reset();
  for (const auto& node : {netfabric::NodeId::anon_vm(r.id), netfabric::NodeId::comm_vm(r.id)}) {
    for (auto& f : fabric_.drain(node)) secure_zero(f.payload);
  }
  fabric_.topology().remove_nym(r.id);
}

void Engine::terminate_nym(const std::string& nym) {
  std::lock_guard lock(mu_);
  NymRecord& r = record(nym);
  if (r.state == NymState::kTerminated) return;
  erase_record(r);
  transition(r, NymState::kTerminated);
  logger()->info("terminated {}", nym);
}

StoreAction Engine::session_end_policy(const std::string& nym) const {
  std::lock_guard lock(mu_);
  const NymRecord& r = record(nym);
  return r.mode == NymMode::kPersistent && !r.host_disk ? StoreAction::kStoreThenTerminate
                                                        : StoreAction::kDiscard;
}

std::optional<StoredReceipt> Engine::close_session(const std::string& nym,
                                                   std::optional<std::string> password,
                                                   bool discard,
                                                   std::optional<StorageTarget> target) {
  std::lock_guard lock(mu_);
  NymRecord& r = live_record(nym);
  std::optional<StoredReceipt> receipt;
  if (session_end_policy(nym) == StoreAction::kStoreThenTerminate && !discard) {
    if (!target) target = r.storage;
    if (!password || !target) {
      fail(Errc::kStoreRequired,
           nym + " is persistent: confirm a store (name and password) or discard");
    }
    receipt = store_locked(r, *target, *password, false);
    secure_zero(*password);
  }
  terminate_nym(nym);
  return receipt;
}

// Files ----------------------------------------------------------------------

overlay::FileEntry Engine::verified_base_read(NymRecord& r, const std::string& path) {
  const overlay::RecordExtent& ext = extents_.at(path);
  std::size_t cs = merkle_.chunk_size();
  std::size_t first = ext.offset / cs;
  std::size_t last = (ext.offset + ext.length - 1) / cs;
  for (std::size_t c = first; c <= last; ++c) {
    auto status = overlay::MerkleIndex::verify(pinned_root_, c, merkle_.chunk_count(),
                                               merkle_.proof(c),
                                               overlay::image_chunk(partition_, c, cs));
    if (status == overlay::ChunkStatus::kTamperDetected) {
      std::string id = r.id;
      emit({{"event", "tamper"}, {"nym", id}, {"chunk", c}});
      logger()->error("base image chunk {} failed verification; shutting down {}", c, id);
      terminate_nym(id);
      fail(Errc::kTamperDetected, "base image chunk " + std::to_string(c) +
                                      " failed verification; " + id + " shut down");
    }
  }
  auto [p, entry] = overlay::Layer::parse_record(ByteView(partition_).subspan(ext.offset, ext.length));
  if (p != path || !entry) fail(Errc::kTamperDetected, "base record mismatch for " + path);
  return std::move(*entry);
}

std::optional<overlay::FileEntry> Engine::read_file(const std::string& nym, VmRole vm,
                                                    const std::string& path) {
  std::lock_guard lock(mu_);
  NymRecord& r = live_record(nym);
  if (r.state != NymState::kRunning) fail(Errc::kIllegalTransition, nym + " is not running");
  auto& s = stack(r, vm);
  auto src = s.resolve(path);
  if (!src) return std::nullopt;
  overlay::FileEntry e = *src == overlay::Source::kBase ? verified_base_read(r, path) : *s.read(path);
  (vm == VmRole::kAnon ? r.anon_mem : r.comm_mem)->cache(e.content);
  return e;
}

void Engine::write_guest(NymRecord& r, VmRole vm, const std::string& path, Bytes content,
                         std::map<std::string, std::string> metadata) {
  (vm == VmRole::kAnon ? r.anon_mem : r.comm_mem)->cache(content);
  stack(r, vm).write(path, std::move(content), std::move(metadata));
}

void Engine::write_file(const std::string& nym, VmRole vm, const std::string& path,
                        Bytes content) {
  std::lock_guard lock(mu_);
  NymRecord& r = live_record(nym);
  if (r.state != NymState::kRunning) fail(Errc::kIllegalTransition, nym + " is not running");
  if (path.rfind(kInboundDir, 0) == 0) {
    fail(Errc::kReadOnly, "the inbound directory only accepts files from the SaniVM");
  }
  write_guest(r, vm, path, std::move(content), {{"mtime", std::to_string(clock_ms_)}});
}

void Engine::remove_file(const std::string& nym, VmRole vm, const std::string& path) {
  std::lock_guard lock(mu_);
  NymRecord& r = live_record(nym);
  if (r.state != NymState::kRunning) fail(Errc::kIllegalTransition, nym + " is not running");
  stack(r, vm).remove(path);
}

std::set<std::string> Engine::list_files(const std::string& nym, VmRole vm) const {
  std::lock_guard lock(mu_);
  const NymRecord& r = record(nym);
  if (r.state == NymState::kTerminated) fail(Errc::kUnknownNym, "nym is terminated: " + nym);
  return stack(r, vm).list();
}

WorkloadResult Engine::run_workload(const std::string& nym, const WorkloadSpec& spec) {
  std::lock_guard lock(mu_);
  NymRecord& r = live_record(nym);
  if (r.state != NymState::kRunning) fail(Errc::kIllegalTransition, nym + " is not running");
  if (!r.anon) fail(Errc::kNotApplicable, "host nyms run their own software");

  const std::string counter_path = "/home/user/.config/nymkit/visits";
  std::uint64_t visits = 0;
  if (auto e = r.anon->read(counter_path)) visits = std::stoull(to_string(e->content));

  WorkloadResult out;
  auto before = r.transport->stats();
  for (std::size_t i = 0; i < spec.pages; ++i) {
    const std::string& host = config_.web_hosts[(visits + i) % config_.web_hosts.size()];
    std::string url = "/page/" + std::to_string(visits + i);

    // The browser's request crosses the virtual wire to the CommVM.
    netfabric::Frame req{netfabric::NodeId::anon_vm(r.id), netfabric::NodeId::comm_vm(r.id),
                         netfabric::Proto::kTcp};
    auto id = netfabric::uniform_vm_identity(r.id);
    req.src_addr = id.anon_ip;
    req.dst_addr = id.comm_wire_ip;
    req.src_mac = id.anon_mac;
    req.dst_port = 9050;
    req.payload = to_bytes("GET " + url + " HTTP/1.1\r\nHost: " + host + "\r\n\r\n");
    fabric_.transmit(req);
    for (auto& f : fabric_.drain(netfabric::NodeId::comm_vm(r.id))) secure_zero(f.payload);

    transports::resolve_dns(*r.transport, host, internet_);
    auto stream = r.transport->proxy_connect({host, 443, {}}, internet_);
    stream.write(req.payload);
    secure_zero(req.payload);
    std::uint64_t salt = rng_();
    Bytes body = keystream(r.id + host + url + std::to_string(salt), spec.page_bytes);
    stream.receive(body);

    std::string path = "/home/user/.cache/chromium/" + hex8(visits + i) + "-" + host;
    write_guest(r, VmRole::kAnon, path, std::move(body));
    out.cached_paths.push_back(path);
    out.pages++;
    out.payload_bytes += spec.page_bytes;

    std::string sp = state_path(r.kind);
    if (!sp.empty() && spec.comm_state_bytes) {
      Bytes churn = keystream(r.id + "state" + std::to_string(salt), spec.comm_state_bytes);
      write_guest(r, VmRole::kComm, "/var/cache/transport/" + hex8(visits + i), std::move(churn));
    }
    clock_ms_ += sample(config_.latency.page_load_ms.at(r.kind));
  }
  write_guest(r, VmRole::kAnon, counter_path, to_bytes(std::to_string(visits + spec.pages)));
  out.wire_bytes = r.transport->stats().wire_bytes - before.wire_bytes;
  return out;
}

std::string Engine::deliver_inbound(const InboundKey&, const std::string& nym,
                                    const std::string& name, Bytes content) {
  std::lock_guard lock(mu_);
  auto it = records_.find(nym);
  if (it == records_.end() || it->second->state == NymState::kTerminated) {
    fail(Errc::kUnknownNym, "no running nym " + nym);
  }
  NymRecord& r = *it->second;
  if (!r.anon) fail(Errc::kUnknownNym, nym + " has no AnonVM overlay");
  if (name.empty() || name.find('/') != std::string::npos || name == "." || name == "..") {
    fail(Errc::kInvalidArgument, "invalid inbound file name");
  }
  std::string path = std::string(kInboundDir) + name;
  write_guest(r, VmRole::kAnon, path, std::move(content),
              {{"mtime", std::to_string(clock_ms_)}, {"origin", "sanivm"}});
  emit({{"event", "inbound"}, {"nym", nym}, {"path", path}});
  return path;
}

// Host nyms ------------------------------------------------------------------

hostnym::CowDisk Engine::repair_host_disk(std::shared_ptr<hostnym::HostDiskImage> disk) {
  std::lock_guard lock(mu_);
  hostnym::CowDisk cow = hostnym::repair_os(std::move(disk));
  metrics_.record_repair({std::string(hostnym::os_name(cow.lower().os())), cow.upper_bytes()});
  return cow;
}

std::string Engine::boot_host_nym(hostnym::CowDisk disk, const HostBootOptions& options) {
  std::lock_guard lock(mu_);
  for (const auto& [id, r] : records_) {
    if (r->state != NymState::kTerminated && r->host_disk &&
        r->host_disk->shared_lower() == disk.shared_lower()) {
      fail(Errc::kInvalidArgument, "host disk is already booted in " + id);
    }
  }
  if (hostnym::is_windows(disk.lower().os()) &&
      disk.effective_profile() == hostnym::DriverProfile::kBareMetal) {
    fail(Errc::kDriverMismatch, std::string(hostnym::os_name(disk.lower().os())) +
                                    " was installed on bare metal; repair it before booting");
  }
  TransportKind kind = options.transport_override.value_or(TransportKind::kIncognito);
  if (kind != TransportKind::kIncognito) {
    logger()->warn("host nym booted over an anonymizer: the installed OS carries "
                   "identifying state and the nym is not anonymous");
  }
  std::string id = spawn(NymMode::kEphemeral, kind, config_.default_spec, std::nullopt,
                         std::nullopt, std::move(disk), false, "host", {});
  emit({{"event", "host-boot"}, {"nym", id}, {"anonymizer", kind != TransportKind::kIncognito}});
  return id;
}

void Engine::set_persistence_policy(const std::string& nym, PersistencePolicy policy,
                                    bool confirmed) {
  std::lock_guard lock(mu_);
  NymRecord& r = live_record(nym);
  if (!r.host_disk) fail(Errc::kNotApplicable, nym + " is not a host nym");
  if (policy == PersistencePolicy::kWriteBack && !confirmed) {
    fail(Errc::kInvalidArgument, "writing back to the physical disk needs explicit confirmation");
  }
  r.policy = policy;
  emit({{"event", "policy"}, {"nym", nym}, {"policy", policy_name(policy)}});
}

PersistencePolicy Engine::persistence_policy(const std::string& nym) const {
  std::lock_guard lock(mu_);
  return record(nym).policy;
}

void Engine::write_host_block(const std::string& nym, std::size_t block, ByteView data) {
  std::lock_guard lock(mu_);
  NymRecord& r = live_record(nym);
  if (!r.host_disk) fail(Errc::kNotApplicable, nym + " is not a host nym");
  if (r.state != NymState::kRunning) fail(Errc::kIllegalTransition, nym + " is not running");
  r.anon_mem->cache(data);
  r.host_disk->write(block, data);
}

Bytes Engine::read_host_block(const std::string& nym, std::size_t block) const {
  std::lock_guard lock(mu_);
  const NymRecord& r = record(nym);
  if (!r.host_disk) fail(Errc::kNotApplicable, nym + " is not a host nym");
  return r.host_disk->read(block);
}

StoredReceipt Engine::store_host_cow(const std::string& nym, const StorageTarget& target,
                                     std::string_view password) {
  std::lock_guard lock(mu_);
  NymRecord& r = live_record(nym);
  if (!r.host_disk) fail(Errc::kNotApplicable, nym + " is not a host nym");
  if (r.state != NymState::kRunning && r.state != NymState::kPaused) {
    fail(Errc::kIllegalTransition, nym + ": store requires Running or Paused");
  }
  snapstore::StorageBackend& be = backend(target.backend);
  snapstore::validate_object_name(target.object);
  overlay::Layer upper = r.host_disk->to_layer(target.object + "/cow");
  overlay::Layer comm = r.comm->extract_writable();
  snapstore::Manifest m;
  m.nym_name = target.object;
  m.mode = "HostCow";
  m.created_at = clock_ms_;
  m.attributes["host_lower_digest"] = r.host_disk->lower().digest().hex();
  m.attributes["os"] = std::string(hostnym::os_name(r.host_disk->lower().os()));
  Bytes archive = snapstore::pack(upper, comm, m, password, {config_.archive_kdf, {}, {}});
  auto stream = open_stream(r, be);
  std::uint64_t version = be.put(stream ? &*stream : nullptr, target.object, archive);
  r.policy = PersistencePolicy::kStoreCow;
  StoredReceipt receipt{target.backend, target.object, version, sha256(archive),
                        archive.size(), upper.serialize().size(), comm.serialize().size(),
                        false};
  metrics_.record_store({r.id, target.object, "HostCow", version, receipt.archive_bytes,
                         receipt.anon_layer_bytes, receipt.comm_layer_bytes});
  emit({{"event", "stored"}, {"nym", nym}, {"backend", target.backend},
        {"object", target.object}, {"version", version}, {"host_cow", true}});
  return receipt;
}

hostnym::CowDisk Engine::restore_host_cow(std::shared_ptr<hostnym::HostDiskImage> lower,
                                          const StorageTarget& target,
                                          std::string_view password) {
  std::lock_guard lock(mu_);
  snapstore::StorageBackend& be = backend(target.backend);
  Bytes archive;
  if (be.host()) {
    std::string loader = spawn(NymMode::kEphemeral, TransportKind::kIncognito,
                               config_.default_spec, std::nullopt, std::nullopt, std::nullopt,
                               true, {}, {});
    try {
      auto stream = open_stream(record(loader), be);
      archive = be.get(&*stream, target.object);
    } catch (...) {
      terminate_nym(loader);
      throw;
    }
    terminate_nym(loader);
  } else {
    archive = be.get(nullptr, target.object);
  }
  snapstore::Unpacked u = snapstore::unpack(archive, password);
  auto it = u.manifest.attributes.find("host_lower_digest");
  if (it == u.manifest.attributes.end()) fail(Errc::kKindMismatch, "archive is not a host COW disk");
  if (Digest::from_hex(it->second) != lower->digest()) {
    fail(Errc::kStaleBase, "the host disk changed since this COW disk was stored");
  }
  return hostnym::CowDisk::from_layer(std::move(lower), u.anon);
}

// Inspection -----------------------------------------------------------------

NymInfo Engine::info_locked(const NymRecord& r) const {
  NymInfo i;
  i.id = r.id;
  i.mode = r.mode;
  i.state = r.state;
  i.transport = r.kind;
  i.guard_seeded = r.guard_seeded;
  i.spec = r.spec;
  i.host_nym = r.host_disk.has_value();
  i.loader = r.loader;
  i.storage = r.storage;
  if (r.transport) {
    if (r.transport->circuit()) i.entry_guard = r.transport->circuit()->entry_guard;
    i.exit_identity = r.transport->exit_identity();
  }
  if (r.anon) i.anon_writable_bytes = r.anon->writable().content_bytes();
  if (r.host_disk) i.anon_writable_bytes = r.host_disk->upper_bytes();
  if (r.comm) i.comm_writable_bytes = r.comm->writable().content_bytes();
  return i;
}

std::vector<NymInfo> Engine::list_nyms(bool include_terminated) const {
  std::lock_guard lock(mu_);
  std::vector<NymInfo> out;
  for (const auto& [id, r] : records_) {
    if (include_terminated || r->state != NymState::kTerminated) out.push_back(info_locked(*r));
  }
  return out;
}

NymInfo Engine::info(const std::string& nym) const {
  std::lock_guard lock(mu_);
  return info_locked(record(nym));
}

NymState Engine::state(const std::string& nym) const {
  std::lock_guard lock(mu_);
  return record(nym).state;
}

netfabric::LeakReport Engine::probe() const {
  std::lock_guard lock(mu_);
  return netfabric::probe_isolation(fabric_.topology());
}

netfabric::Topology Engine::topology() const {
  std::lock_guard lock(mu_);
  return fabric_.topology();
}

netfabric::VmIdentity Engine::vm_identity(const std::string& nym) const {
  std::lock_guard lock(mu_);
  record(nym);
  return netfabric::uniform_vm_identity(nym);
}

const transports::Transport& Engine::transport(const std::string& nym) const {
  std::lock_guard lock(mu_);
  const NymRecord& r = record(nym);
  if (!r.transport) fail(Errc::kUnknownNym, "nym is terminated: " + nym);
  return *r.transport;
}

overlay::Layer Engine::writable_layer(const std::string& nym, VmRole vm) const {
  std::lock_guard lock(mu_);
  const NymRecord& r = record(nym);
  if (r.state == NymState::kTerminated) fail(Errc::kUnknownNym, "nym is terminated: " + nym);
  return stack(r, vm).extract_writable();
}

std::vector<std::size_t> Engine::verify_base_partition() const {
  std::lock_guard lock(mu_);
  std::vector<std::size_t> bad;
  for (std::size_t c = 0; c < merkle_.chunk_count(); ++c) {
    if (overlay::MerkleIndex::verify(pinned_root_, c, merkle_.chunk_count(), merkle_.proof(c),
                                     overlay::image_chunk(partition_, c, merkle_.chunk_size())) !=
        overlay::ChunkStatus::kOk) {
      bad.push_back(c);
    }
  }
  return bad;
}

void Engine::tamper_base_partition(std::size_t offset, std::uint8_t xor_mask) {
  std::lock_guard lock(mu_);
  if (offset >= partition_.size()) fail(Errc::kOutOfRange, "offset past end of partition");
  partition_[offset] ^= xor_mask;
}

std::vector<Engine::VmPages> Engine::vm_pages() const {
  std::lock_guard lock(mu_);
  std::vector<VmPages> out;
  for (const auto& [id, r] : records_) {
    if (r->state == NymState::kTerminated) continue;
    out.push_back({id, VmRole::kAnon, r->spec.anonvm, r->anon_mem->resident_digests()});
    out.push_back({id, VmRole::kComm, r->spec.commvm, r->comm_mem->resident_digests()});
  }
  return out;
}

Bytes Engine::serialize_state() const {
  std::lock_guard lock(mu_);
  Writer w;
  w.raw(partition_);
  for (const auto& [id, r] : records_) {
    w.str(id);
    w.str(mode_name(r->mode));
    w.str(state_name(r->state));
    if (r->anon) w.blob(r->anon->writable().serialize());
    if (r->comm) w.blob(r->comm->writable().serialize());
    if (r->anon_mem) r->anon_mem->dump(w);
    if (r->comm_mem) r->comm_mem->dump(w);
    if (r->host_disk) {
      for (const auto& [i, b] : r->host_disk->upper()) {
        w.u64(i);
        w.raw(b);
      }
    }
    if (r->transport && r->transport->circuit()) {
      for (const auto& hop : r->transport->circuit()->path) w.str(hop);
    }
  }
  arena_.dump(w);
  for (const auto& node : fabric_.topology().nodes()) {
    for (const auto& f : fabric_.inbox(node)) w.blob(f.payload);
  }
  for (const auto& host : internet_.host_names()) {
    for (const auto& rec : internet_.access_log(host)) {
      w.str(rec.observed_source);
      w.u64(rec.bytes);
    }
  }
  for (const auto& e : event_log_) w.str(e.dump());
  w.str(metrics_.to_jsonl());
  return w.take();
}

}  // namespace nymkit::nymcore
