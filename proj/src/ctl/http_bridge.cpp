#include "nymkit/ctl/http_bridge.h"

#include <httplib.h>

#include <chrono>
#include <condition_variable>
#include <deque>
#include <mutex>

#include "nymkit/common/error.h"
#include "nymkit/common/log.h"

namespace nymkit::ctl {
namespace {

using nlohmann::json;

struct EventQueue {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::string> pending;
  int subscription = 0;
};

}  // namespace

bool is_loopback_host(const std::string& host) {
  return host == "127.0.0.1" || host == "localhost" || host == "::1" ||
         host.rfind("127.", 0) == 0;
}

HttpBridge::HttpBridge(Controller& controller, HttpOptions options)
    : controller_(controller), options_(std::move(options)) {}

HttpBridge::~HttpBridge() { stop(); }

int HttpBridge::start() {
  if (!is_loopback_host(options_.host) && !options_.allow_remote) {
    fail(Errc::kInvalidArgument,
         "refusing to bind " + options_.host + " without an explicit remote flag");
  }
  server_ = std::make_unique<httplib::Server>();

  server_->Post("/api", [this](const httplib::Request& req, httplib::Response& res) {
    json frame, id;
    try {
      frame = json::parse(req.body);
      if (!frame.is_object() || !frame.contains("verb")) {
        fail(Errc::kBadFormat, "frame needs a verb");
      }
      id = frame.value("id", json());
      auto body = controller_.call(frame.at("verb").get<std::string>(),
                                   frame.value("args", json::object()));
      res.set_content(ok_frame(id, std::move(body)).dump(), "application/json");
    } catch (const Error& e) {
      res.set_content(error_frame(id, e.code(), e.what()).dump(), "application/json");
    } catch (const json::exception& e) {
      res.status = 400;
      res.set_content(error_frame(id, Errc::kBadFormat, e.what()).dump(), "application/json");
    }
  });

  server_->Get("/verbs", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(json(Controller::verbs()).dump(), "application/json");
  });

  server_->Get("/events", [this](const httplib::Request&, httplib::Response& res) {
    auto q = std::make_shared<EventQueue>();
    q->subscription = controller_.events().subscribe([q](const json& e) {
      {
        std::lock_guard lock(q->mu);
        q->pending.push_back("data: " + e.dump() + "\n\n");
      }
      q->cv.notify_all();
    });
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream",
        [this, q](std::size_t, httplib::DataSink& sink) {
          std::unique_lock lock(q->mu);
          q->cv.wait_for(lock, std::chrono::milliseconds(100),
                         [&] { return !q->pending.empty() || stopping_; });
          if (stopping_) return false;
          while (!q->pending.empty()) {
            auto msg = std::move(q->pending.front());
            q->pending.pop_front();
            if (!sink.write(msg.data(), msg.size())) return false;
          }
          return sink.is_writable();
        },
        [this, q](bool) { controller_.events().unsubscribe(q->subscription); });
  });

  port_ = options_.port == 0 ? server_->bind_to_any_port(options_.host)
                             : (server_->bind_to_port(options_.host, options_.port)
                                    ? options_.port
                                    : -1);
  if (port_ < 0) {
    server_.reset();
    fail(Errc::kAddressInUse, "cannot bind " + options_.host + ":" + std::to_string(options_.port));
  }
  stopping_ = false;
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  logger()->info("http bridge on {}:{}", options_.host, port_);
  return port_;
}

void HttpBridge::stop() {
  if (!server_) return;
  stopping_ = true;
  server_->stop();
  if (thread_.joinable()) thread_.join();
  server_.reset();
}

}  // namespace nymkit::ctl
