#include "nymkit/transports/dns.h"

#include "nymkit/common/error.h"

namespace nymkit::transports {

std::string_view route_name(DnsRoute route) {
  switch (route) {
    case DnsRoute::kInTransport: return "in-transport";
    case DnsRoute::kUdpRedirect: return "udp-redirect";
    case DnsRoute::kUdpPlain: return "udp-plain";
    case DnsRoute::kTcpConverted: return "tcp-converted";
  }
  return "?";
}

Bytes encode_dns_query(std::string_view name, std::uint16_t id) {
  Writer w;
  w.u16(id);
  w.u16(0x0100);  // standard query, recursion desired
  w.u16(1);       // QDCOUNT
  w.u16(0);
  w.u16(0);
  w.u16(0);
  std::size_t start = 0;
  while (start <= name.size()) {
    std::size_t dot = name.find('.', start);
    if (dot == std::string_view::npos) dot = name.size();
    std::string_view label = name.substr(start, dot - start);
    if (label.empty() && dot != name.size())
      fail(Errc::kInvalidArgument, "empty DNS label");
    if (label.size() > 63) fail(Errc::kInvalidArgument, "DNS label too long");
    if (!label.empty()) {
      w.u8(static_cast<std::uint8_t>(label.size()));
      w.raw(label);
    }
    start = dot + 1;
  }
  w.u8(0);
  w.u16(1);  // A
  w.u16(1);  // IN
  return w.take();
}

Bytes tcp_frame(ByteView message) {
  if (message.size() > 0xffff) fail(Errc::kInvalidArgument, "DNS message too large");
  Writer w;
  w.u16(static_cast<std::uint16_t>(message.size()));
  w.raw(message);
  return w.take();
}

DnsResolution resolve_dns(Transport& transport, const std::string& name,
                          Internet& internet) {
  if (!transport.running()) fail(Errc::kUnreachable, "transport stopped");
  DnsResolution result;
  Capabilities caps = transport.capabilities();
  if (caps.builtin_dns) {
    result.route = DnsRoute::kInTransport;
  } else if (caps.udp) {
    result.route = transport.kind() == TransportKind::kIncognito
                       ? DnsRoute::kUdpPlain
                       : DnsRoute::kUdpRedirect;
    if (result.route == DnsRoute::kUdpPlain) result.udp_frames_via_nat = 1;
  } else {
    result.route = DnsRoute::kTcpConverted;
    result.tcp_query = tcp_frame(encode_dns_query(name, 0x4e59));
    StreamHandle stream = transport.proxy_connect(
        {std::string(kResolverHost), 53, {}}, internet);
    stream.write(result.tcp_query);
  }
  auto address = internet.lookup(name);
  if (!address) fail(Errc::kNameNotFound, "cannot resolve " + name);
  result.address = *address;
  return result;
}

}  // namespace nymkit::transports
