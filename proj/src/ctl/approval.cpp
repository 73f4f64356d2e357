#include "nymkit/ctl/approval.h"

#include "nymkit/common/error.h"

namespace nymkit::ctl {

ApprovalReply ApprovalReply::from_json(const nlohmann::json& j) {
  ApprovalReply r;
  r.approve = j.value("approve", false);
  if (j.contains("paranoia")) r.paranoia = j.at("paranoia").get<int>();
  if (j.contains("overrides")) {
    for (const auto& o : j.at("overrides")) r.overrides.insert(o.get<std::string>());
  }
  return r;
}

ApprovalReply ApprovalBroker::request(nlohmann::json details, std::chrono::milliseconds timeout) {
  std::string id;
  {
    std::lock_guard lock(mu_);
    id = "approval-" + std::to_string(next_++);
    slots_[id];
  }
  details["event"] = "approval-request";
  details["request"] = id;
  details["timeout_ms"] = timeout.count();
  notify_(details);

  std::unique_lock lock(mu_);
  bool answered = cv_.wait_for(lock, timeout, [&] { return slots_.at(id).reply.has_value(); });
  auto reply = slots_.at(id).reply;
  slots_.erase(id);
  lock.unlock();
  if (!answered) {
    notify_({{"event", "approval-timeout"}, {"request", id}});
    fail(Errc::kTimeout, "approval " + id + " timed out");
  }
  return *reply;
}

void ApprovalBroker::answer(const std::string& request, ApprovalReply reply) {
  {
    std::lock_guard lock(mu_);
    auto it = slots_.find(request);
    if (it == slots_.end() || it->second.reply) {
      fail(Errc::kNotFound, "no pending approval " + request);
    }
    it->second.reply = std::move(reply);
  }
  cv_.notify_all();
  notify_({{"event", "approval-answered"}, {"request", request}});
}

std::vector<std::string> ApprovalBroker::pending() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, slot] : slots_) {
    if (!slot.reply) out.push_back(id);
  }
  return out;
}

}  // namespace nymkit::ctl
