#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "nymkit/ctl/approval.h"
#include "nymkit/ctl/protocol.h"
#include "nymkit/ctl/settings.h"
#include "nymkit/hostnym/disk.h"
#include "nymkit/nymcore/engine.h"
#include "nymkit/sanivm/sanivm.h"

namespace nymkit::ctl {

// Ordered fan-out of control events. Every event gets a sequence number;
// subscribers see events in publication order.
class EventHub {
 public:
  using Sink = std::function<void(const nlohmann::json&)>;

  int subscribe(Sink sink);
  void unsubscribe(int id);
  void publish(nlohmann::json event);

 private:
  std::mutex mu_;
  std::map<int, Sink> sinks_;
  int next_id_ = 1;
  std::uint64_t seq_ = 0;
};

// The one dispatch table behind the CLI, the socket service and the HTTP
// bridge. Arguments and bodies are JSON; errors are nymkit::Error.
class Controller : public CommandTarget {
 public:
  explicit Controller(Settings settings = {});
  ~Controller() override;

  nlohmann::json call(const std::string& verb, const nlohmann::json& args) override;

  static std::vector<std::string> verbs();
  // Calls that reached the verb's handler, for parity checks.
  std::uint64_t dispatch_count(const std::string& verb) const;

  EventHub& events() { return events_; }
  ApprovalBroker& approvals() { return approvals_; }
  nymcore::Engine& engine() { return *engine_; }
  sanivm::SaniVm& sanivm() { return *sanivm_; }
  const sanivm::SourceCatalog& catalog() const { return catalog_; }
  const Settings& settings() const { return settings_; }

 private:
  using Handler = nlohmann::json (Controller::*)(const nlohmann::json&);
  static const std::map<std::string, Handler>& table();

  nlohmann::json create(const nlohmann::json& a);
  nlohmann::json load(const nlohmann::json& a);
  nlohmann::json store(const nlohmann::json& a);
  nlohmann::json snapshot(const nlohmann::json& a);
  nlohmann::json terminate(const nlohmann::json& a);
  nlohmann::json pause(const nlohmann::json& a);
  nlohmann::json resume(const nlohmann::json& a);
  nlohmann::json list(const nlohmann::json& a);
  nlohmann::json scrub(const nlohmann::json& a);
  nlohmann::json transfer(const nlohmann::json& a);
  nlohmann::json approve(const nlohmann::json& a);
  nlohmann::json probe(const nlohmann::json& a);
  nlohmann::json report(const nlohmann::json& a);
  nlohmann::json host_boot(const nlohmann::json& a);

  nymcore::StorageTarget target(const nlohmann::json& a, const std::string& default_object);
  std::shared_ptr<hostnym::HostDiskImage> disk(const nlohmann::json& a);

  Settings settings_;
  EventHub events_;
  ApprovalBroker approvals_;
  std::unique_ptr<nymcore::Engine> engine_;
  std::unique_ptr<sanivm::SaniVm> sanivm_;
  sanivm::SourceCatalog catalog_;
  int engine_sub_ = 0;

  mutable std::mutex mu_;
  std::map<std::string, std::uint64_t> counts_;
  std::map<std::string, std::shared_ptr<hostnym::HostDiskImage>> disks_;
};

}  // namespace nymkit::ctl
