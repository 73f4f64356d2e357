#include "nymkit/transports/dns.h"

#include <gtest/gtest.h>

#include "nymkit/common/error.h"

namespace nymkit::transports {
namespace {

// Neither a built-in resolver nor UDP support: forces the TCP conversion.
class TcpOnlyTransport : public Transport {
 public:
  TcpOnlyTransport() : Transport(TransportKind::kIncognito, "stub", {}) {}
  Capabilities capabilities() const override { return {false, false}; }
  std::string exit_identity() const override { return "stub-exit"; }
  std::size_t wire_bytes(std::size_t payload) const override { return payload; }
};

Internet internet() {
  Internet net;
  net.add_host("example.org", "203.0.113.10");
  net.add_host(std::string(kResolverHost), "203.0.113.53");
  return net;
}

TEST(Dns, OnionResolvesInTransport) {
  Internet net = internet();
  auto t = start_transport(TransportKind::kOnionSim, "n", {{"a"}, {"b"}, {"c"}}, std::nullopt);
  DnsResolution r = resolve_dns(*t, "example.org", net);
  EXPECT_EQ(r.route, DnsRoute::kInTransport);
  EXPECT_EQ(r.udp_frames_via_nat, 0u);
  EXPECT_EQ(r.address, "203.0.113.10");
}

TEST(Dns, DcnetUsesUdpRedirection) {
  Internet net = internet();
  auto t = start_transport(TransportKind::kDcnetSim, "n", {{"a"}}, std::nullopt);
  DnsResolution r = resolve_dns(*t, "example.org", net);
  EXPECT_EQ(r.route, DnsRoute::kUdpRedirect);
  EXPECT_EQ(r.udp_frames_via_nat, 0u);
}

TEST(Dns, IncognitoForwardsPlainly) {
  Internet net = internet();
  auto t = start_transport(TransportKind::kIncognito, "n", {}, std::nullopt);
  DnsResolution r = resolve_dns(*t, "example.org", net);
  EXPECT_EQ(r.route, DnsRoute::kUdpPlain);
  EXPECT_EQ(r.udp_frames_via_nat, 1u);
}

TEST(Dns, UnknownName) {
  Internet net = internet();
  auto t = start_transport(TransportKind::kIncognito, "n", {}, std::nullopt);
  try {
    resolve_dns(*t, "missing.invalid", net);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kNameNotFound);
  }
}

TEST(Dns, TcpConversionPathForTransportWithoutUdp) {
  Internet net = internet();
  TcpOnlyTransport t;
  DnsResolution r = resolve_dns(t, "example.org", net);
  EXPECT_EQ(r.route, DnsRoute::kTcpConverted);
  EXPECT_EQ(r.address, "203.0.113.10");
  Bytes query = encode_dns_query("example.org", 0x4e59);
  ASSERT_EQ(r.tcp_query.size(), query.size() + 2);
  EXPECT_EQ((r.tcp_query[0] << 8) | r.tcp_query[1], static_cast<int>(query.size()));
  EXPECT_EQ(Bytes(r.tcp_query.begin() + 2, r.tcp_query.end()), query);
  ASSERT_EQ(net.access_log("resolver").size(), 1u);
  EXPECT_EQ(net.access_log("resolver")[0].observed_source, "stub-exit");
}

TEST(Dns, QueryEncoding) {
  Bytes q = encode_dns_query("a.bc", 7);
  Bytes expected = {0, 7, 1, 0, 0, 1, 0, 0, 0, 0, 0, 0,
                    1, 'a', 2, 'b', 'c', 0, 0, 1, 0, 1};
  EXPECT_EQ(q, expected);
  EXPECT_THROW(encode_dns_query("a..b", 1), Error);
}

}  // namespace
}  // namespace nymkit::transports
