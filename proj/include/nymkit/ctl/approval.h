#pragma once

#include <chrono>
#include <condition_variable>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace nymkit::ctl {

struct ApprovalReply {
  bool approve = false;
  // Replacement paranoia level for the plan.
  std::optional<int> paranoia;
  std::set<std::string> overrides;

  static ApprovalReply from_json(const nlohmann::json& j);
};

// Blocking approvals: the operation waits until a client answers or the
// timeout passes, in which case it is abandoned with kTimeout.
class ApprovalBroker {
 public:
  using Notify = std::function<void(const nlohmann::json&)>;

  explicit ApprovalBroker(Notify notify) : notify_(std::move(notify)) {}

  // Publishes {"event":"approval-request","request":id,...details} and blocks.
  ApprovalReply request(nlohmann::json details, std::chrono::milliseconds timeout);
  // Throws kNotFound for unknown or expired requests.
  void answer(const std::string& request, ApprovalReply reply);
  std::vector<std::string> pending() const;

 private:
  struct Slot {
    std::optional<ApprovalReply> reply;
  };

  Notify notify_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::string, Slot> slots_;
  std::uint64_t next_ = 1;
};

}  // namespace nymkit::ctl
