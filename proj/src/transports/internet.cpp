#include "nymkit/transports/internet.h"

#include "nymkit/common/error.h"

namespace nymkit::transports {

void Internet::add_host(const std::string& name, const std::string& address) {
  hosts_[name].address = address;
}

std::optional<std::string> Internet::lookup(const std::string& name) const {
  auto it = hosts_.find(name);
  if (it == hosts_.end()) return std::nullopt;
  return it->second.address;
}

std::vector<std::string> Internet::host_names() const {
  std::vector<std::string> out;
  for (const auto& [name, host] : hosts_) out.push_back(name);
  return out;
}

void Internet::record_access(const std::string& host, AccessRecord record) {
  auto it = hosts_.find(host);
  if (it == hosts_.end()) fail(Errc::kUnreachable, "no such host: " + host);
  it->second.log.push_back(std::move(record));
}

const std::vector<AccessRecord>& Internet::access_log(
    const std::string& host) const {
  auto it = hosts_.find(host);
  if (it == hosts_.end()) fail(Errc::kUnreachable, "no such host: " + host);
  return it->second.log;
}

}  // namespace nymkit::transports
