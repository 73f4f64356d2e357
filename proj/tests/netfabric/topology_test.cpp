#include "nymkit/netfabric/topology.h"

#include <gtest/gtest.h>

#include <json.hpp>
#include <random>
#include <sstream>

#include "nymkit/common/error.h"

namespace nymkit::netfabric {
namespace {

Topology with_nyms(int n) {
  Topology t = Topology::host();
  for (int i = 1; i <= n; ++i) t = build_nymbox_topology("nym" + std::to_string(i), t);
  return t;
}

Frame anon_frame(const std::string& nym, NodeId dst, Proto proto = Proto::kTcp) {
  VmIdentity id = uniform_vm_identity(nym);
  return Frame{.src = NodeId::anon_vm(nym), .dst = std::move(dst), .proto = proto,
               .src_addr = id.anon_ip, .src_mac = id.anon_mac};
}

Frame comm_frame(const std::string& nym, NodeId dst, std::uint16_t sport = 5000,
                 std::uint16_t dport = 443) {
  Frame f{.src = NodeId::comm_vm(nym), .dst = dst, .proto = Proto::kTcp,
          .src_addr = uniform_vm_identity(nym).comm_uplink_ip,
          .src_port = sport, .dst_port = dport};
  f.dst_addr = dst.host;
  return f;
}

TEST(Topology, FirstNymAddsTwoNodesAndTwoEdges) {
  Topology base = Topology::host();
  Topology t = build_nymbox_topology("nym1", base);
  EXPECT_EQ(t.nodes().size(), base.nodes().size() + 2);
  EXPECT_EQ(t.edges().size(), base.edges().size() + 2);
  EXPECT_TRUE(t.has_edge(NodeId::anon_vm("nym1"), NodeId::comm_vm("nym1")));
  EXPECT_TRUE(t.has_edge(NodeId::comm_vm("nym1"), NodeId::nat_gateway()));
}

TEST(Topology, NoEdgesBetweenNyms) {
  Topology t = with_nyms(2);
  for (const auto& [a, b] : t.edges()) {
    if (!a.nym.empty() && !b.nym.empty()) EXPECT_EQ(a.nym, b.nym);
    EXPECT_FALSE(a.kind == NodeKind::kSaniVm || b.kind == NodeKind::kSaniVm);
  }
}

TEST(Topology, DuplicateNymRejected) {
  Topology t = with_nyms(1);
  try {
    build_nymbox_topology("nym1", t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kDuplicateNym);
  }
}

TEST(Send, ReachabilityMatrixExamples) {
  Topology t = with_nyms(2);
  EXPECT_EQ(send(t, anon_frame("nym1", NodeId::comm_vm("nym1"))).outcome,
            Outcome::kDelivered);
  EXPECT_EQ(send(t, anon_frame("nym1", NodeId::anon_vm("nym2"))).outcome,
            Outcome::kDropped);
  EXPECT_EQ(send(t, anon_frame("nym1", NodeId::comm_vm("nym2"))).outcome,
            Outcome::kDropped);
  EXPECT_EQ(send(t, anon_frame("nym1", NodeId::internet("internet"))).outcome,
            Outcome::kDropped);
  EXPECT_EQ(send(t, comm_frame("nym1", NodeId::lan("lan"))).outcome,
            Outcome::kDropped);
  EXPECT_EQ(send(t, comm_frame("nym1", NodeId::internet("internet"))).outcome,
            Outcome::kDelivered);
  EXPECT_EQ(send(t, comm_frame("nym1", NodeId::hypervisor())).outcome,
            Outcome::kDropped);
}

TEST(Send, UnknownSourceThrows) {
  Topology t = with_nyms(1);
  try {
    send(t, anon_frame("ghost", NodeId::comm_vm("nym1")));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kUnknownNode);
  }
}

TEST(Send, SpoofedAnonVmAddressDropped) {
  Topology t = with_nyms(1);
  Frame f = anon_frame("nym1", NodeId::comm_vm("nym1"));
  f.src_addr = t.addresses().gateway;
  EXPECT_EQ(send(t, f).outcome, Outcome::kDropped);
}

TEST(Send, HypervisorEgressIsDhcpOnly) {
  Topology t = with_nyms(1);
  Frame dhcp{.src = NodeId::hypervisor(), .dst = NodeId::lan("lan"),
             .proto = Proto::kUdp, .src_port = 68, .dst_port = kDhcpServerPort};
  EXPECT_EQ(send(t, dhcp).outcome, Outcome::kDelivered);
  Frame tcp = dhcp;
  tcp.proto = Proto::kTcp;
  EXPECT_EQ(send(t, tcp).outcome, Outcome::kDropped);
  Frame other = dhcp;
  other.dst_port = 53;
  EXPECT_EQ(send(t, other).outcome, Outcome::kDropped);
  Frame inet = dhcp;
  inet.dst = NodeId::internet("internet");
  EXPECT_EQ(send(t, inet).outcome, Outcome::kDropped);
}

TEST(Nat, OutboundRewritesSourceToGateway) {
  Topology t = with_nyms(1);
  Frame out = nat_translate(t, comm_frame("nym1", NodeId::internet("internet")));
  EXPECT_EQ(out.src_addr, t.addresses().gateway);
  EXPECT_EQ(out.src, NodeId::nat_gateway());
  ASSERT_EQ(t.nat_bindings().size(), 1u);
}

TEST(Nat, NoUplinkRejected) {
  Topology t = with_nyms(1);
  try {
    nat_translate(t, anon_frame("nym1", NodeId::internet("internet")));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kNoUplink);
  }
}

TEST(Nat, ReplyFollowsBinding) {
  Fabric fabric(with_nyms(2));
  ASSERT_EQ(fabric.transmit(comm_frame("nym2", NodeId::internet("internet"), 5555, 80)),
            Outcome::kDelivered);
  const Frame& seen = fabric.inbox(NodeId::internet("internet")).back();
  Frame reply{.src = NodeId::internet("internet"), .dst = NodeId::nat_gateway(),
              .proto = Proto::kTcp, .src_addr = "internet",
              .dst_addr = seen.src_addr, .src_port = 80, .dst_port = seen.src_port};
  EXPECT_EQ(fabric.transmit(reply), Outcome::kDelivered);
  ASSERT_EQ(fabric.inbox(NodeId::comm_vm("nym2")).size(), 1u);
  EXPECT_EQ(fabric.inbox(NodeId::comm_vm("nym2")).front().dst_port, 5555);
  EXPECT_TRUE(fabric.inbox(NodeId::comm_vm("nym1")).empty());
}

// Enumerates every subset of a small flow universe, establishes exactly
// those bindings, then tries every possible reply. A reply is delivered iff
// the oracle's own record of issued external ports says it should be.
TEST(Nat, ReplyWithoutBindingDroppedExhaustive) {
  struct Flow { std::string nym; std::uint16_t sport; std::uint16_t dport; };
  std::vector<Flow> universe = {{"nym1", 1000, 80}, {"nym1", 1001, 80},
                                {"nym2", 1000, 80}, {"nym2", 1000, 443},
                                {"nym3", 2000, 443}};
  for (unsigned mask = 0; mask < (1u << universe.size()); ++mask) {
    Topology t = with_nyms(3);
    std::map<std::pair<std::uint16_t, std::uint16_t>, std::string> oracle;
    for (std::size_t i = 0; i < universe.size(); ++i) {
      if (!(mask & (1u << i))) continue;
      const Flow& f = universe[i];
      Frame out = nat_translate(
          t, comm_frame(f.nym, NodeId::internet("internet"), f.sport, f.dport));
      oracle[{out.src_port, f.dport}] = f.nym;
    }
    for (std::uint16_t ext = 19998; ext < 20008; ++ext) {
      for (std::uint16_t rport : {80, 443, 8080}) {
        Frame reply{.src = NodeId::internet("internet"),
                    .dst = NodeId::nat_gateway(), .proto = Proto::kTcp,
                    .src_addr = "internet", .src_port = rport, .dst_port = ext};
        SendResult r = send(t, reply);
        auto it = oracle.find({ext, rport});
        if (it == oracle.end()) {
          EXPECT_EQ(r.outcome, Outcome::kDropped) << mask << " " << ext;
        } else {
          ASSERT_EQ(r.outcome, Outcome::kDelivered);
          EXPECT_EQ(*r.delivered_to, NodeId::comm_vm(it->second));
        }
      }
    }
  }
}

TEST(Nat, DistinctCommVmsNeverShareBinding) {
  Topology t = with_nyms(8);
  std::set<std::uint16_t> ports;
  for (int i = 1; i <= 8; ++i) {
    // Same internal port and remote for every nym: addresses are uniform.
    Frame out = nat_translate(
        t, comm_frame("nym" + std::to_string(i), NodeId::internet("internet"), 4000, 443));
    EXPECT_TRUE(ports.insert(out.src_port).second);
  }
}

TEST(Fabric, DropsAreSilent) {
  Fabric fabric(with_nyms(2));
  Frame f = anon_frame("nym1", NodeId::anon_vm("nym2"));
  EXPECT_EQ(fabric.transmit(f), Outcome::kDropped);
  for (const auto& node : fabric.topology().nodes())
    EXPECT_TRUE(fabric.inbox(node).empty()) << node;
}

TEST(Fabric, AnonVmFramesCarryOnlyUniformIdentity) {
  Fabric fabric(with_nyms(3));
  std::mt19937 rng(3);
  VmIdentity id = uniform_vm_identity("any");
  for (int i = 0; i < 200; ++i) {
    std::string nym = "nym" + std::to_string(1 + rng() % 3);
    std::vector<NodeId> nodes(fabric.topology().nodes().begin(),
                              fabric.topology().nodes().end());
    Frame f = anon_frame(nym, nodes[rng() % nodes.size()],
                         rng() % 2 ? Proto::kTcp : Proto::kUdp);
    fabric.transmit(f);
  }
  for (const auto& node : fabric.topology().nodes()) {
    for (const Frame& f : fabric.inbox(node)) {
      if (f.src.kind != NodeKind::kAnonVm) continue;
      EXPECT_EQ(f.src_mac, id.anon_mac);
      EXPECT_EQ(f.src_addr, id.anon_ip);
      EXPECT_NE(f.src_addr, fabric.topology().addresses().gateway);
      EXPECT_NE(f.src_addr, fabric.topology().addresses().hypervisor);
    }
  }
}

TEST(Probe, CleanSingleNymTopology) {
  LeakReport r = probe_isolation(with_nyms(1));
  EXPECT_TRUE(r.violations.empty());
  EXPECT_TRUE(r.blocked_expected.empty());
  for (const auto& rec : r.delivered) EXPECT_NE(rec.src.kind, NodeKind::kSaniVm);
}

TEST(Probe, EightNymsSweepsAllOrderedPairs) {
  Topology t = with_nyms(8);
  std::size_t n = t.nodes().size();
  LeakReport r = probe_isolation(t);
  EXPECT_EQ(r.attempted.size(), n * (n - 1) * 2);
  EXPECT_TRUE(r.violations.empty());
  // per nym: anon<->comm both directions, comm->internet; two protocols
  EXPECT_EQ(r.delivered.size(), 8u * 3u * 2u);
}

TEST(Probe, InjectedEdgeReported) {
  Topology t = with_nyms(2);
  t.add_edge(NodeId::anon_vm("nym1"), NodeId::anon_vm("nym2"));
  LeakReport r = probe_isolation(t);
  ASSERT_EQ(r.violations.size(), 4u);
  for (const auto& v : r.violations) {
    EXPECT_EQ(v.src.kind, NodeKind::kAnonVm);
    EXPECT_EQ(v.dst.kind, NodeKind::kAnonVm);
  }
}

TEST(Probe, InjectedSaniVmEdgeReported) {
  Topology t = with_nyms(2);
  t.add_edge(NodeId::sani_vm(), NodeId::anon_vm("nym2"));
  LeakReport r = probe_isolation(t);
  ASSERT_EQ(r.violations.size(), 4u);
  for (const auto& v : r.violations) {
    EXPECT_TRUE(v.src.kind == NodeKind::kSaniVm || v.dst.kind == NodeKind::kSaniVm);
  }
}

TEST(Probe, AnonVmWiredToGatewayLeaksToInternet) {
  Topology t = with_nyms(1);
  t.add_edge(NodeId::anon_vm("nym1"), NodeId::nat_gateway());
  LeakReport r = probe_isolation(t);
  ASSERT_EQ(r.violations.size(), 2u);
  for (const auto& v : r.violations) {
    EXPECT_EQ(v.src, NodeId::anon_vm("nym1"));
    EXPECT_EQ(v.dst.kind, NodeKind::kInternetHost);
  }
}

TEST(Probe, JsonlExport) {
  LeakReport r = probe_isolation(with_nyms(1));
  std::istringstream in(r.to_jsonl());
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("src") && j.contains("dst") && j.contains("proto") &&
                j.contains("outcome"));
    ++lines;
  }
  EXPECT_EQ(lines, r.attempted.size());
}

TEST(Identity, UniformAcrossNyms) {
  VmIdentity a = uniform_vm_identity("nym1");
  VmIdentity b = uniform_vm_identity("nym2");
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.screen_width, 1024);
  EXPECT_EQ(a.screen_height, 768);
  EXPECT_EQ(a.cpu_label, "QEMU Virtual CPU");
  EXPECT_EQ(a.cpu_count, 1);
  HostAddresses host;
  for (const auto& field : {a.anon_ip, a.comm_wire_ip, a.comm_uplink_ip}) {
    EXPECT_NE(field, host.gateway);
    EXPECT_NE(field, host.hypervisor);
  }
}

TEST(NodeId, LabelRoundTrip) {
  for (const NodeId& n : {NodeId::anon_vm("a"), NodeId::comm_vm("b"), NodeId::sani_vm(),
                          NodeId::hypervisor(), NodeId::nat_gateway(),
                          NodeId::internet("x.org"), NodeId::lan("printer")})
    EXPECT_EQ(NodeId::parse(n.label()), n);
}

TEST(Topology, RemoveNymDropsNodesEdgesBindings) {
  Topology t = with_nyms(2);
  nat_translate(t, comm_frame("nym1", NodeId::internet("internet")));
  t.remove_nym("nym1");
  EXPECT_FALSE(t.has_nym("nym1"));
  EXPECT_TRUE(t.has_nym("nym2"));
  EXPECT_TRUE(t.nat_bindings().empty());
  EXPECT_TRUE(probe_isolation(t).violations.empty());
}

}  // namespace
}  // namespace nymkit::netfabric
