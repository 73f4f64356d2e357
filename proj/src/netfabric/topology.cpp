#include "nymkit/netfabric/topology.h"

#include <json.hpp>

#include <algorithm>

#include "nymkit/common/error.h"

namespace nymkit::netfabric {

std::string NodeId::label() const {
  switch (kind) {
    case NodeKind::kAnonVm: return "anon:" + nym;
    case NodeKind::kCommVm: return "comm:" + nym;
    case NodeKind::kSaniVm: return "sanivm";
    case NodeKind::kHypervisor: return "hypervisor";
    case NodeKind::kNatGateway: return "nat";
    case NodeKind::kInternetHost: return "inet:" + host;
    case NodeKind::kLanHost: return "lan:" + host;
  }
  return "?";
}

NodeId NodeId::parse(const std::string& label) {
  auto colon = label.find(':');
  std::string prefix = label.substr(0, colon);
  std::string rest = colon == std::string::npos ? "" : label.substr(colon + 1);
  if (prefix == "anon" && !rest.empty()) return anon_vm(rest);
  if (prefix == "comm" && !rest.empty()) return comm_vm(rest);
  if (prefix == "inet" && !rest.empty()) return internet(rest);
  if (prefix == "lan" && !rest.empty()) return lan(rest);
  if (label == "sanivm") return sani_vm();
  if (label == "hypervisor") return hypervisor();
  if (label == "nat") return nat_gateway();
  fail(Errc::kInvalidArgument, "bad node label: " + label);
}

std::ostream& operator<<(std::ostream& os, const NodeId& node) {
  return os << node.label();
}

std::string_view proto_name(Proto p) { return p == Proto::kTcp ? "tcp" : "udp"; }

VmIdentity uniform_vm_identity(const std::string& /*nym_id*/) {
  // QEMU-style defaults; deliberately independent of the nym and the host.
  return VmIdentity{
      .anon_mac = "52:54:00:12:34:56",
      .comm_mac = "52:54:00:12:34:57",
      .anon_ip = "10.0.0.2",
      .comm_wire_ip = "10.0.0.1",
      .comm_uplink_ip = "10.0.2.15",
      .screen_width = 1024,
      .screen_height = 768,
      .cpu_label = "QEMU Virtual CPU",
      .cpu_count = 1,
  };
}

Topology Topology::host(const std::vector<std::string>& internet_hosts,
                        const std::vector<std::string>& lan_hosts,
                        HostAddresses addresses) {
  Topology t;
  t.addresses_ = std::move(addresses);
  t.add_node(NodeId::hypervisor());
  t.add_node(NodeId::nat_gateway());
  t.add_node(NodeId::sani_vm());
  for (const auto& h : internet_hosts) {
    t.add_node(NodeId::internet(h));
    t.add_edge(NodeId::nat_gateway(), NodeId::internet(h));
  }
  for (const auto& h : lan_hosts) {
    t.add_node(NodeId::lan(h));
    t.add_edge(NodeId::hypervisor(), NodeId::lan(h));
  }
  return t;
}

Topology::Edge Topology::normalize(const NodeId& a, const NodeId& b) {
  return a < b ? Edge{a, b} : Edge{b, a};
}

bool Topology::has_edge(const NodeId& a, const NodeId& b) const {
  return edges_.contains(normalize(a, b));
}

void Topology::add_edge(const NodeId& a, const NodeId& b) {
  if (!has_node(a) || !has_node(b))
    fail(Errc::kUnknownNode, "edge endpoint not in topology");
  if (a == b) fail(Errc::kInvalidArgument, "self edge");
  edges_.insert(normalize(a, b));
}

bool Topology::has_nym(const std::string& nym) const {
  return has_node(NodeId::anon_vm(nym)) || has_node(NodeId::comm_vm(nym));
}

std::vector<std::string> Topology::nyms() const {
  std::vector<std::string> out;
  for (const auto& n : nodes_)
    if (n.kind == NodeKind::kAnonVm) out.push_back(n.nym);
  return out;
}

void Topology::remove_nym(const std::string& nym) {
  auto owned = [&](const NodeId& n) {
    return (n.kind == NodeKind::kAnonVm || n.kind == NodeKind::kCommVm) &&
           n.nym == nym;
  };
  std::erase_if(nodes_, owned);
  std::erase_if(edges_, [&](const Edge& e) {
    return owned(e.first) || owned(e.second);
  });
  std::erase_if(bindings_, [&](const NatBinding& b) { return owned(b.comm); });
}

Topology build_nymbox_topology(const std::string& nym_id,
                               const Topology& existing) {
  if (nym_id.empty()) fail(Errc::kInvalidArgument, "empty nym id");
  if (existing.has_nym(nym_id))
    fail(Errc::kDuplicateNym, "nym already present: " + nym_id);
  if (!existing.has_node(NodeId::nat_gateway()))
    fail(Errc::kUnknownNode, "topology has no NAT gateway");
  Topology t = existing;
  NodeId anon = NodeId::anon_vm(nym_id);
  NodeId comm = NodeId::comm_vm(nym_id);
  t.add_node(anon);
  t.add_node(comm);
  t.add_edge(anon, comm);
  t.add_edge(comm, NodeId::nat_gateway());
  return t;
}

namespace {

// Per-edge policy for frames crossing a direct edge.
bool edge_permits(const Frame& f) {
  if (f.src.kind == NodeKind::kHypervisor && f.dst.kind == NodeKind::kLanHost)
    return f.proto == Proto::kUdp && f.dst_port == kDhcpServerPort;
  if (f.src.kind == NodeKind::kLanHost) return false;
  if (f.src.kind == NodeKind::kNatGateway || f.dst.kind == NodeKind::kNatGateway)
    return false;  // the gateway is transit only
  return true;
}

const NatBinding* find_reply_binding(const Topology& t, const Frame& f) {
  for (const auto& b : t.nat_bindings()) {
    if (b.proto == f.proto && b.external_port == f.dst_port &&
        b.remote_addr == f.src_addr && b.remote_port == f.src_port &&
        t.has_edge(b.comm, NodeId::nat_gateway()))
      return &b;
  }
  return nullptr;
}

}  // namespace

SendResult send(const Topology& topology, const Frame& f) {
  if (!topology.has_node(f.src))
    fail(Errc::kUnknownNode, "unknown source " + f.src.label());
  const SendResult dropped{};
  if (!topology.has_node(f.dst)) return dropped;
  if (f.src == f.dst) return dropped;
  if (f.dst.kind == NodeKind::kHypervisor) return dropped;

  if (f.src.kind == NodeKind::kAnonVm) {
    VmIdentity id = uniform_vm_identity(f.src.nym);
    if (f.src_mac != id.anon_mac || f.src_addr != id.anon_ip) return dropped;
  }

  // NAT reply path: Internet host -> gateway external port -> CommVM.
  if (f.dst.kind == NodeKind::kNatGateway) {
    if (f.src.kind != NodeKind::kInternetHost ||
        !topology.has_edge(f.src, f.dst))
      return dropped;
    const NatBinding* b = find_reply_binding(topology, f);
    if (!b) return dropped;
    return {Outcome::kDelivered, b->comm};
  }

  if (topology.has_edge(f.src, f.dst)) {
    if (!edge_permits(f)) return dropped;
    return {Outcome::kDelivered, f.dst};
  }

  // Masqueraded egress: whatever is wired to the gateway reaches the Internet
  // hosts behind it. Only CommVMs are wired there by the builders.
  if (f.src.kind != NodeKind::kInternetHost &&
      f.dst.kind == NodeKind::kInternetHost &&
      topology.has_edge(f.src, NodeId::nat_gateway()) &&
      topology.has_edge(NodeId::nat_gateway(), f.dst)) {
    return {Outcome::kDelivered, f.dst};
  }
  return dropped;
}

Frame nat_translate(Topology& topology, const Frame& frame) {
  if (frame.src.kind != NodeKind::kCommVm ||
      !topology.has_edge(frame.src, NodeId::nat_gateway()))
    fail(Errc::kNoUplink, frame.src.label() + " has no NAT uplink");

  NatBinding* binding = nullptr;
  for (auto& b : topology.bindings_) {
    if (b.comm == frame.src && b.proto == frame.proto &&
        b.internal_port == frame.src_port && b.remote_addr == frame.dst_addr &&
        b.remote_port == frame.dst_port) {
      binding = &b;
      break;
    }
  }
  if (!binding) {
    topology.bindings_.push_back(NatBinding{
        .comm = frame.src,
        .proto = frame.proto,
        .internal_port = frame.src_port,
        .remote_addr = frame.dst_addr,
        .remote_port = frame.dst_port,
        .external_port = topology.next_external_port_++,
    });
    binding = &topology.bindings_.back();
  }
  Frame out = frame;
  out.src = NodeId::nat_gateway();
  out.src_addr = topology.addresses().gateway;
  out.src_mac.clear();
  out.src_port = binding->external_port;
  return out;
}

bool expected_reachable(const NodeId& src, const NodeId& dst, Proto) {
  if (src.kind == NodeKind::kAnonVm && dst.kind == NodeKind::kCommVm)
    return src.nym == dst.nym;
  if (src.kind == NodeKind::kCommVm && dst.kind == NodeKind::kAnonVm)
    return src.nym == dst.nym;
  if (src.kind == NodeKind::kCommVm && dst.kind == NodeKind::kInternetHost)
    return true;
  return false;
}

LeakReport probe_isolation(const Topology& topology) {
  LeakReport report;
  for (const auto& src : topology.nodes()) {
    for (const auto& dst : topology.nodes()) {
      if (src == dst) continue;
      for (Proto proto : {Proto::kTcp, Proto::kUdp}) {
        Frame f{.src = src, .dst = dst, .proto = proto};
        if (src.kind == NodeKind::kAnonVm) {
          VmIdentity id = uniform_vm_identity(src.nym);
          f.src_addr = id.anon_ip;
          f.src_mac = id.anon_mac;
        } else if (src.kind == NodeKind::kCommVm) {
          f.src_addr = uniform_vm_identity(src.nym).comm_wire_ip;
        }
        f.src_port = 40000;
        f.dst_port = 9;  // discard service; never whitelisted
        ProbeRecord rec{src, dst, proto, send(topology, f).outcome};
        report.attempted.push_back(rec);
        bool delivered = rec.outcome == Outcome::kDelivered;
        bool expected = expected_reachable(src, dst, proto);
        if (delivered) report.delivered.push_back(rec);
        if (delivered && !expected) report.violations.push_back(rec);
        if (!delivered && expected) report.blocked_expected.push_back(rec);
      }
    }
  }
  return report;
}

std::string LeakReport::to_jsonl() const {
  std::string out;
  for (const auto& r : attempted) {
    nlohmann::json j = {
        {"src", r.src.label()},
        {"dst", r.dst.label()},
        {"proto", proto_name(r.proto)},
        {"outcome", r.outcome == Outcome::kDelivered ? "Delivered" : "Dropped"},
    };
    out += j.dump();
    out += '\n';
  }
  return out;
}

Outcome Fabric::transmit(const Frame& frame) {
  SendResult r = send(topology_, frame);
  if (r.outcome == Outcome::kDropped) return Outcome::kDropped;
  Frame delivered = frame;
  if (frame.src.kind == NodeKind::kCommVm &&
      frame.dst.kind == NodeKind::kInternetHost &&
      !topology_.has_edge(frame.src, frame.dst)) {
    delivered = nat_translate(topology_, frame);
    delivered.dst = frame.dst;
  } else if (frame.dst.kind == NodeKind::kNatGateway) {
    const NatBinding* b = find_reply_binding(topology_, frame);
    delivered.dst = b->comm;
    delivered.dst_addr = uniform_vm_identity(b->comm.nym).comm_uplink_ip;
    delivered.dst_port = b->internal_port;
  }
  inboxes_[*r.delivered_to].push_back(std::move(delivered));
  return Outcome::kDelivered;
}

const std::vector<Frame>& Fabric::inbox(const NodeId& node) const {
  static const std::vector<Frame> kEmpty;
  auto it = inboxes_.find(node);
  return it == inboxes_.end() ? kEmpty : it->second;
}

std::vector<Frame> Fabric::drain(const NodeId& node) {
  auto it = inboxes_.find(node);
  if (it == inboxes_.end()) return {};
  std::vector<Frame> out = std::move(it->second);
  inboxes_.erase(it);
  return out;
}

}  // namespace nymkit::netfabric
