#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "nymkit/common/bytes.h"

namespace nymkit::netfabric {

enum class NodeKind {
  kAnonVm,
  kCommVm,
  kSaniVm,
  kHypervisor,
  kNatGateway,
  kInternetHost,
  kLanHost,
};

// A node in the simulated network. AnonVM/CommVM nodes carry the owning nym;
// Internet and LAN hosts carry a host name; the remaining kinds carry neither.
struct NodeId {
  NodeKind kind = NodeKind::kHypervisor;
  std::string nym;
  std::string host;

  auto operator<=>(const NodeId&) const = default;

  static NodeId anon_vm(std::string nym) { return {NodeKind::kAnonVm, std::move(nym), {}}; }
  static NodeId comm_vm(std::string nym) { return {NodeKind::kCommVm, std::move(nym), {}}; }
  static NodeId sani_vm() { return {NodeKind::kSaniVm, {}, {}}; }
  static NodeId hypervisor() { return {NodeKind::kHypervisor, {}, {}}; }
  static NodeId nat_gateway() { return {NodeKind::kNatGateway, {}, {}}; }
  static NodeId internet(std::string host) { return {NodeKind::kInternetHost, {}, std::move(host)}; }
  static NodeId lan(std::string host) { return {NodeKind::kLanHost, {}, std::move(host)}; }

  // "anon:<nym>", "comm:<nym>", "sanivm", "hypervisor", "nat",
  // "inet:<host>", "lan:<host>".
  std::string label() const;
  static NodeId parse(const std::string& label);
};

std::ostream& operator<<(std::ostream& os, const NodeId& node);

enum class Proto { kTcp, kUdp };
std::string_view proto_name(Proto p);

inline constexpr std::uint16_t kDhcpServerPort = 67;

struct Frame {
  NodeId src;
  NodeId dst;
  Proto proto = Proto::kTcp;
  std::string src_addr;
  std::string dst_addr;
  std::string src_mac;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  Bytes payload;
};

// Fingerprint-relevant identity shared by every AnonVM/CommVM pair.
struct VmIdentity {
  std::string anon_mac;
  std::string comm_mac;
  std::string anon_ip;        // AnonVM side of the virtual wire
  std::string comm_wire_ip;   // CommVM side of the virtual wire
  std::string comm_uplink_ip; // CommVM address behind the user-mode NAT
  int screen_width = 0;
  int screen_height = 0;
  std::string cpu_label;
  int cpu_count = 0;

  bool operator==(const VmIdentity&) const = default;
};

// Identical for every nym; never contains a host or gateway address.
VmIdentity uniform_vm_identity(const std::string& nym_id);

struct NatBinding {
  NodeId comm;
  Proto proto = Proto::kTcp;
  std::uint16_t internal_port = 0;
  std::string remote_addr;
  std::uint16_t remote_port = 0;
  std::uint16_t external_port = 0;
};

struct HostAddresses {
  std::string gateway = "198.51.100.23";    // the host's public address
  std::string hypervisor = "192.168.1.20";  // the host's LAN address
};

// Network graph: nodes, undirected point-to-point edges, NAT bindings.
class Topology {
 public:
  using Edge = std::pair<NodeId, NodeId>;

  // Hypervisor, NAT gateway, SaniVM (no edges), the given Internet hosts
  // behind the gateway and LAN hosts attached to the hypervisor.
  static Topology host(const std::vector<std::string>& internet_hosts = {"internet"},
                       const std::vector<std::string>& lan_hosts = {"lan"},
                       HostAddresses addresses = {});

  const std::set<NodeId>& nodes() const { return nodes_; }
  const std::set<Edge>& edges() const { return edges_; }
  const HostAddresses& addresses() const { return addresses_; }
  bool has_node(const NodeId& n) const { return nodes_.contains(n); }
  bool has_edge(const NodeId& a, const NodeId& b) const;
  bool has_nym(const std::string& nym) const;
  std::vector<std::string> nyms() const;

  // Low-level mutation, used by the builders and by fault-injection tests.
  void add_node(const NodeId& n) { nodes_.insert(n); }
  void add_edge(const NodeId& a, const NodeId& b);
  void remove_nym(const std::string& nym);

  const std::vector<NatBinding>& nat_bindings() const { return bindings_; }

 private:
  friend Frame nat_translate(Topology& topology, const Frame& frame);
  static Edge normalize(const NodeId& a, const NodeId& b);

  std::set<NodeId> nodes_;
  std::set<Edge> edges_;
  std::vector<NatBinding> bindings_;
  std::uint16_t next_external_port_ = 20000;
  HostAddresses addresses_;
};

// Adds the nym's AnonVM and CommVM, the wire between them and the CommVM's
// uplink to the NAT gateway. Throws kDuplicateNym.
Topology build_nymbox_topology(const std::string& nym_id, const Topology& existing);

enum class Outcome { kDelivered, kDropped };

struct SendResult {
  Outcome outcome = Outcome::kDropped;
  // Final endpoint for delivered frames (the CommVM for NAT replies).
  std::optional<NodeId> delivered_to;
};

// Routing decision for one frame. Pure; drops are silent. Throws kUnknownNode
// if the source is not in the topology.
SendResult send(const Topology& topology, const Frame& frame);

// Rewrites an outbound CommVM frame to the gateway's external address and
// records the binding used to route replies. Throws kNoUplink.
Frame nat_translate(Topology& topology, const Frame& frame);

struct ProbeRecord {
  NodeId src;
  NodeId dst;
  Proto proto = Proto::kTcp;
  Outcome outcome = Outcome::kDropped;
};

struct LeakReport {
  std::vector<ProbeRecord> attempted;
  std::vector<ProbeRecord> delivered;
  // Deliveries the isolation model does not permit.
  std::vector<ProbeRecord> violations;
  // Permitted paths that failed to deliver (connectivity faults, not leaks).
  std::vector<ProbeRecord> blocked_expected;

  // One JSON object per line: {"src","dst","proto","outcome"}.
  std::string to_jsonl() const;
};

// The isolation model: which unsolicited (src, dst, proto) deliveries are
// allowed at all.
bool expected_reachable(const NodeId& src, const NodeId& dst, Proto proto);

// Attempts every ordered pair of distinct nodes over TCP and UDP.
LeakReport probe_isolation(const Topology& topology);

// Simulated wire with per-node receive queues. Only delivered frames ever
// reach a queue, so a dropped frame produces nothing observable anywhere.
class Fabric {
 public:
  explicit Fabric(Topology topology) : topology_(std::move(topology)) {}

  Topology& topology() { return topology_; }
  const Topology& topology() const { return topology_; }

  // Routes the frame, applying NAT on CommVM egress and on replies.
  Outcome transmit(const Frame& frame);

  const std::vector<Frame>& inbox(const NodeId& node) const;
  std::vector<Frame> drain(const NodeId& node);

 private:
  Topology topology_;
  std::map<NodeId, std::vector<Frame>> inboxes_;
};

}  // namespace nymkit::netfabric
