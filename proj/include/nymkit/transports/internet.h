#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace nymkit::transports {

// What a destination sees of one connection.
struct AccessRecord {
  std::string observed_source;
  std::size_t bytes = 0;
};

// The outside world as seen past the NAT gateway: named hosts with
// addresses, a DNS zone, and a per-host access log.
class Internet {
 public:
  void add_host(const std::string& name, const std::string& address);
  bool has_host(const std::string& name) const { return hosts_.contains(name); }
  std::optional<std::string> lookup(const std::string& name) const;
  std::vector<std::string> host_names() const;

  void record_access(const std::string& host, AccessRecord record);
  const std::vector<AccessRecord>& access_log(const std::string& host) const;

 private:
  struct Host {
    std::string address;
    std::vector<AccessRecord> log;
  };
  std::map<std::string, Host> hosts_;
};

}  // namespace nymkit::transports
