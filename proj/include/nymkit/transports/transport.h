#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nymkit/common/bytes.h"
#include "nymkit/transports/internet.h"

namespace nymkit::transports {

enum class TransportKind { kIncognito, kOnionSim, kDcnetSim };

std::string_view kind_name(TransportKind kind);
// Accepts "incognito", "onion", "dcnet" (and the enum spellings).
TransportKind parse_kind(std::string_view name);

struct Relay {
  std::string id;
  bool guard = true;
  bool middle = true;
  bool exit = true;
};

// Relay directory: one relay per line, "<id> <flag>[,<flag>...]", flags from
// {guard, middle, exit}. Blank lines and '#' comments are ignored; a relay
// with no flags column gets all three.
std::vector<Relay> parse_relay_directory(std::string_view text);

struct GuardSeed {
  std::array<std::uint8_t, 32> bytes{};

  bool operator==(const GuardSeed&) const = default;
  static GuardSeed random();
};

// index = first 8 bytes (big-endian) of BLAKE2b-256(seed || D) mod |relays|,
// where D is the SHA-256 of the sorted relay ids joined with '\n'. The
// index selects from the sorted ids. Throws kNoRelays on an empty list.
std::string select_entry_guard(const GuardSeed& seed,
                               std::span<const std::string> relay_ids);

struct CircuitState {
  std::string entry_guard;
  std::vector<std::string> path;  // guard first, exit last
  std::uint64_t established_at = 0;

  bool operator==(const CircuitState&) const = default;
};

struct OnionFraming {
  std::size_t cell_size = 512;
  std::size_t cell_header = 14;
  std::size_t path_length = 3;

  std::size_t cell_payload() const { return cell_size - cell_header; }
};

struct DcnetParams {
  std::size_t members = 8;
  std::size_t slot_bytes = 1024;
  std::size_t frame_header = 16;
};

struct TransportConfig {
  OnionFraming onion;
  DcnetParams dcnet;
  // The host's public address as seen past the NAT.
  std::string gateway_address = "198.51.100.23";
};

struct Capabilities {
  bool builtin_dns = false;
  bool udp = false;
};

struct ProxyRequest {
  std::string dest_host;
  std::uint16_t dest_port = 0;
  Bytes payload;
};

struct TransportStats {
  std::size_t payload_bytes = 0;
  std::size_t wire_bytes = 0;
  std::size_t streams = 0;
};

class Transport;

// One proxied connection. Bytes written are charged to the owning transport
// and recorded at the destination under the transport's exit identity.
class StreamHandle {
 public:
  StreamHandle(Transport* owner, Internet* internet, std::string dest_host,
               std::uint16_t dest_port, std::string observed_source);

  const std::string& dest_host() const { return dest_host_; }
  std::uint16_t dest_port() const { return dest_port_; }
  // The source address the destination observes.
  const std::string& observed_source() const { return observed_source_; }
  const std::string& nym_id() const;

  // Returns the number of bytes that crossed the wire for this payload.
  std::size_t write(ByteView payload);
  // Accounts bytes flowing back from the destination.
  std::size_t receive(ByteView payload);

 private:
  Transport* owner_;
  Internet* internet_;
  std::string dest_host_;
  std::uint16_t dest_port_;
  std::string observed_source_;
};

// A CommVM-hosted anonymizer instance. One per nym; never shared.
class Transport {
 public:
  virtual ~Transport() = default;
  Transport(const Transport&) = delete;
  Transport& operator=(const Transport&) = delete;

  TransportKind kind() const { return kind_; }
  const std::string& nym_id() const { return nym_id_; }
  const TransportConfig& config() const { return config_; }
  bool running() const { return running_; }
  const TransportStats& stats() const { return stats_; }

  virtual Capabilities capabilities() const = 0;
  // Source address a destination observes for this transport's streams.
  virtual std::string exit_identity() const = 0;
  // Bytes emitted on the wire for `payload` bytes of application data.
  virtual std::size_t wire_bytes(std::size_t payload) const = 0;

  virtual const std::optional<CircuitState>& circuit() const;
  virtual std::optional<GuardSeed> guard_seed() const { return std::nullopt; }

  // Throws kUnreachable if the destination is unknown.
  StreamHandle proxy_connect(const ProxyRequest& request, Internet& internet);

  // Models a compromised CommVM: the instance learns the host's public
  // address. Nothing is exposed to the AnonVM.
  void inject_compromise() { learned_public_address_ = config_.gateway_address; }
  const std::optional<std::string>& learned_public_address() const {
    return learned_public_address_;
  }

  void stop() { running_ = false; }

 protected:
  Transport(TransportKind kind, std::string nym_id, TransportConfig config)
      : kind_(kind), nym_id_(std::move(nym_id)), config_(std::move(config)) {}

 private:
  friend class StreamHandle;
  void charge(std::size_t payload, std::size_t wire) {
    stats_.payload_bytes += payload;
    stats_.wire_bytes += wire;
  }

  TransportKind kind_;
  std::string nym_id_;
  TransportConfig config_;
  bool running_ = true;
  TransportStats stats_;
  std::optional<std::string> learned_public_address_;
};

// Starts an instance of `kind` for the nym. Circuit kinds need a non-empty
// relay list (kNoRelays); Incognito ignores relays. Without a seed, OnionSim
// draws a random one.
std::unique_ptr<Transport> start_transport(
    TransportKind kind, const std::string& nym_id,
    const std::vector<Relay>& relays,
    const std::optional<GuardSeed>& guard_seed, std::uint64_t now = 0,
    TransportConfig config = {});

// wire_bytes / payload_bytes. Throws kInvalidArgument for a zero payload.
double measure_overhead(const Transport& transport, std::size_t payload_bytes);

// Closed-form framing predictions the simulators must agree with.
double onion_overhead_analytic(const OnionFraming& framing, std::size_t payload);
double dcnet_overhead_analytic(const DcnetParams& params, std::size_t payload);

// OnionSim specifics, exposed for circuit rotation.
class OnionSimTransport : public Transport {
 public:
  OnionSimTransport(std::string nym_id, std::vector<Relay> relays,
                    GuardSeed seed, std::uint64_t now, TransportConfig config);

  Capabilities capabilities() const override { return {true, false}; }
  std::string exit_identity() const override;
  std::size_t wire_bytes(std::size_t payload) const override;
  const std::optional<CircuitState>& circuit() const override { return circuit_; }
  std::optional<GuardSeed> guard_seed() const override { return seed_; }

  // Builds a fresh circuit; the entry guard never changes.
  void rebuild_circuit(std::uint64_t now);

 private:
  std::vector<Relay> relays_;
  GuardSeed seed_;
  std::uint64_t circuit_counter_ = 0;
  std::optional<CircuitState> circuit_;
};

}  // namespace nymkit::transports
