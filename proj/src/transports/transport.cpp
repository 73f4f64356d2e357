#include "nymkit/transports/transport.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nymkit/common/digest.h"
#include "nymkit/common/error.h"

namespace nymkit::transports {

std::string_view kind_name(TransportKind kind) {
  switch (kind) {
    case TransportKind::kIncognito: return "incognito";
    case TransportKind::kOnionSim: return "onion";
    case TransportKind::kDcnetSim: return "dcnet";
  }
  return "?";
}

TransportKind parse_kind(std::string_view name) {
  if (name == "incognito" || name == "Incognito") return TransportKind::kIncognito;
  if (name == "onion" || name == "OnionSim") return TransportKind::kOnionSim;
  if (name == "dcnet" || name == "DcnetSim") return TransportKind::kDcnetSim;
  fail(Errc::kInvalidArgument, "unknown transport kind: " + std::string(name));
}

std::vector<Relay> parse_relay_directory(std::string_view text) {
  std::vector<Relay> relays;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    Relay relay;
    if (!(fields >> relay.id)) continue;
    std::string flags;
    if (fields >> flags) {
      relay.guard = relay.middle = relay.exit = false;
      std::istringstream fl(flags);
      std::string flag;
      while (std::getline(fl, flag, ',')) {
        if (flag == "guard") relay.guard = true;
        else if (flag == "middle") relay.middle = true;
        else if (flag == "exit") relay.exit = true;
        else fail(Errc::kBadFormat, "unknown relay flag: " + flag);
      }
    }
    relays.push_back(std::move(relay));
  }
  return relays;
}

GuardSeed GuardSeed::random() {
  GuardSeed s;
  random_bytes(s.bytes);
  return s;
}

std::string select_entry_guard(const GuardSeed& seed,
                               std::span<const std::string> relay_ids) {
  if (relay_ids.empty()) fail(Errc::kNoRelays, "no relays to choose a guard from");
  std::vector<std::string> sorted(relay_ids.begin(), relay_ids.end());
  std::sort(sorted.begin(), sorted.end());
  Sha256 list_hash;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i) list_hash.update("\n");
    list_hash.update(sorted[i]);
  }
  Digest list_digest = list_hash.finish();
  Bytes input(seed.bytes.begin(), seed.bytes.end());
  input.insert(input.end(), list_digest.bytes.begin(), list_digest.bytes.end());
  Digest d = blake2b(input);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | d.bytes[i];
  return sorted[v % sorted.size()];
}

StreamHandle::StreamHandle(Transport* owner, Internet* internet,
                           std::string dest_host, std::uint16_t dest_port,
                           std::string observed_source)
    : owner_(owner),
      internet_(internet),
      dest_host_(std::move(dest_host)),
      dest_port_(dest_port),
      observed_source_(std::move(observed_source)) {}

const std::string& StreamHandle::nym_id() const { return owner_->nym_id(); }

std::size_t StreamHandle::write(ByteView payload) {
  if (!owner_->running()) fail(Errc::kUnreachable, "transport stopped");
  std::size_t wire = owner_->wire_bytes(payload.size());
  owner_->charge(payload.size(), wire);
  internet_->record_access(dest_host_, {observed_source_, payload.size()});
  return wire;
}

std::size_t StreamHandle::receive(ByteView payload) {
  if (!owner_->running()) fail(Errc::kUnreachable, "transport stopped");
  std::size_t wire = owner_->wire_bytes(payload.size());
  owner_->charge(payload.size(), wire);
  return wire;
}

const std::optional<CircuitState>& Transport::circuit() const {
  static const std::optional<CircuitState> kNone;
  return kNone;
}

StreamHandle Transport::proxy_connect(const ProxyRequest& request,
                                      Internet& internet) {
  if (!running_) fail(Errc::kUnreachable, "transport stopped");
  if (!internet.has_host(request.dest_host))
    fail(Errc::kUnreachable, "unknown destination: " + request.dest_host);
  ++stats_.streams;
  StreamHandle stream(this, &internet, request.dest_host, request.dest_port,
                      exit_identity());
  if (!request.payload.empty()) stream.write(request.payload);
  return stream;
}

namespace {

class IncognitoTransport : public Transport {
 public:
  IncognitoTransport(std::string nym_id, TransportConfig config)
      : Transport(TransportKind::kIncognito, std::move(nym_id), std::move(config)) {}

  Capabilities capabilities() const override { return {false, true}; }
  std::string exit_identity() const override { return config().gateway_address; }
  std::size_t wire_bytes(std::size_t payload) const override { return payload; }
};

class DcnetSimTransport : public Transport {
 public:
  DcnetSimTransport(std::string nym_id, std::vector<Relay> relays,
                    TransportConfig config)
      : Transport(TransportKind::kDcnetSim, std::move(nym_id), std::move(config)),
        relays_(std::move(relays)) {}

  Capabilities capabilities() const override { return {false, true}; }

  // The group's servers deliver the broadcast output; the first relay in
  // sorted order stands in for the group's egress.
  std::string exit_identity() const override {
    std::vector<std::string> ids;
    for (const auto& r : relays_) ids.push_back(r.id);
    return "dcnet:" + *std::min_element(ids.begin(), ids.end());
  }

  std::size_t wire_bytes(std::size_t payload) const override {
    const DcnetParams& p = config().dcnet;
    std::size_t rounds = (payload + p.slot_bytes - 1) / p.slot_bytes;
    return rounds * p.members * (p.slot_bytes + p.frame_header);
  }

 private:
  std::vector<Relay> relays_;
};

std::uint64_t seeded_draw(const GuardSeed& seed, std::string_view label,
                          std::uint64_t counter) {
  Writer w;
  w.raw(seed.bytes);
  w.raw(label);
  w.u64(counter);
  Digest d = blake2b(w.buffer());
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | d.bytes[i];
  return v;
}

}  // namespace

OnionSimTransport::OnionSimTransport(std::string nym_id, std::vector<Relay> relays,
                                     GuardSeed seed, std::uint64_t now,
                                     TransportConfig config)
    : Transport(TransportKind::kOnionSim, std::move(nym_id), std::move(config)),
      relays_(std::move(relays)),
      seed_(seed) {
  if (relays_.empty()) fail(Errc::kNoRelays, "onion transport needs relays");
  if (this->config().onion.path_length < 1)
    fail(Errc::kInvalidArgument, "path length must be >= 1");
  rebuild_circuit(now);
}

void OnionSimTransport::rebuild_circuit(std::uint64_t now) {
  std::vector<std::string> guards;
  for (const auto& r : relays_)
    if (r.guard) guards.push_back(r.id);
  if (guards.empty()) fail(Errc::kNoRelays, "no guard-flagged relays");

  CircuitState c;
  c.entry_guard = circuit_ ? circuit_->entry_guard : select_entry_guard(seed_, guards);
  c.path.push_back(c.entry_guard);
  c.established_at = now;

  std::size_t hops = config().onion.path_length;
  for (std::size_t hop = 1; hop < hops; ++hop) {
    bool is_exit = hop + 1 == hops;
    std::vector<std::string> candidates;
    for (const auto& r : relays_) {
      if (is_exit ? !r.exit : !r.middle) continue;
      if (std::find(c.path.begin(), c.path.end(), r.id) != c.path.end()) continue;
      candidates.push_back(r.id);
    }
    if (candidates.empty())
      fail(Errc::kNoRelays, "not enough distinct relays for a " +
                                std::to_string(hops) + "-hop circuit");
    std::sort(candidates.begin(), candidates.end());
    std::uint64_t draw = seeded_draw(seed_, is_exit ? "exit" : "middle",
                                     circuit_counter_ * 16 + hop);
    c.path.push_back(candidates[draw % candidates.size()]);
  }
  ++circuit_counter_;
  circuit_ = std::move(c);
}

std::string OnionSimTransport::exit_identity() const { return circuit_->path.back(); }

std::size_t OnionSimTransport::wire_bytes(std::size_t payload) const {
  const OnionFraming& f = config().onion;
  std::size_t cells = (payload + f.cell_payload() - 1) / f.cell_payload();
  return cells * f.cell_size;
}

std::unique_ptr<Transport> start_transport(TransportKind kind,
                                           const std::string& nym_id,
                                           const std::vector<Relay>& relays,
                                           const std::optional<GuardSeed>& guard_seed,
                                           std::uint64_t now,
                                           TransportConfig config) {
  switch (kind) {
    case TransportKind::kIncognito:
      return std::make_unique<IncognitoTransport>(nym_id, std::move(config));
    case TransportKind::kOnionSim:
      if (relays.empty()) fail(Errc::kNoRelays, "onion transport needs relays");
      return std::make_unique<OnionSimTransport>(
          nym_id, relays, guard_seed.value_or(GuardSeed::random()), now,
          std::move(config));
    case TransportKind::kDcnetSim:
      if (relays.empty()) fail(Errc::kNoRelays, "dcnet transport needs relays");
      return std::make_unique<DcnetSimTransport>(nym_id, relays, std::move(config));
  }
  fail(Errc::kInvalidArgument, "bad transport kind");
}

double measure_overhead(const Transport& transport, std::size_t payload_bytes) {
  if (payload_bytes == 0) fail(Errc::kInvalidArgument, "payload must be > 0");
  return static_cast<double>(transport.wire_bytes(payload_bytes)) /
         static_cast<double>(payload_bytes);
}

double onion_overhead_analytic(const OnionFraming& f, std::size_t payload) {
  double cells = std::ceil(static_cast<double>(payload) /
                           static_cast<double>(f.cell_payload()));
  return cells * static_cast<double>(f.cell_size) / static_cast<double>(payload);
}

double dcnet_overhead_analytic(const DcnetParams& p, std::size_t payload) {
  double rounds = std::ceil(static_cast<double>(payload) /
                            static_cast<double>(p.slot_bytes));
  return rounds * static_cast<double>(p.members) *
         static_cast<double>(p.slot_bytes + p.frame_header) /
         static_cast<double>(payload);
}

}  // namespace nymkit::transports
