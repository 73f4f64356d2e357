#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "nymkit/common/bytes.h"
#include "nymkit/transports/transport.h"

namespace nymkit::transports {

enum class DnsRoute {
  kInTransport,   // resolved by the anonymizer's own resolver
  kUdpRedirect,   // UDP query carried inside the anonymizer
  kUdpPlain,      // UDP query sent through the NAT as-is
  kTcpConverted,  // UDP query re-framed as DNS-over-TCP and proxied
};

std::string_view route_name(DnsRoute route);

struct DnsResolution {
  std::string address;
  DnsRoute route = DnsRoute::kInTransport;
  // Plain UDP datagrams that crossed the NAT gateway for this lookup.
  std::size_t udp_frames_via_nat = 0;
  // The length-prefixed query sent when the TCP conversion path was used.
  Bytes tcp_query;
};

inline constexpr std::string_view kResolverHost = "resolver";

// Standard DNS query message: header with RD set, one question, QTYPE A,
// QCLASS IN.
Bytes encode_dns_query(std::string_view name, std::uint16_t id);

// DNS-over-TCP framing: 2-byte big-endian length prefix.
Bytes tcp_frame(ByteView message);

// Picks the route from the transport's capabilities. Throws kNameNotFound.
DnsResolution resolve_dns(Transport& transport, const std::string& name,
                          Internet& internet);

}  // namespace nymkit::transports
