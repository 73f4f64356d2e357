#pragma once

#include <atomic>
#include <memory>
#include <string>
#include <thread>

#include "nymkit/ctl/controller.h"

namespace httplib {
class Server;
}

namespace nymkit::ctl {

struct HttpOptions {
  std::string host = "127.0.0.1";
  int port = 0;  // 0: any free port
  // Binding anything but loopback requires this.
  bool allow_remote = false;
};

// HTTP adapter for the web console:
//   POST /api     body {"id","verb","args"} -> response frame
//   GET  /events  server-sent events, one control event per message
//   GET  /verbs   the dispatch table
class HttpBridge {
 public:
  HttpBridge(Controller& controller, HttpOptions options = {});
  ~HttpBridge();
  HttpBridge(const HttpBridge&) = delete;
  HttpBridge& operator=(const HttpBridge&) = delete;

  // Throws kInvalidArgument for a non-loopback host without allow_remote,
  // kAddressInUse if the port is taken. Returns the bound port.
  int start();
  void stop();
  int port() const { return port_; }

 private:
  Controller& controller_;
  HttpOptions options_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<bool> stopping_{false};
};

bool is_loopback_host(const std::string& host);

}  // namespace nymkit::ctl
