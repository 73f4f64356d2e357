#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <json.hpp>

#include "nymkit/ctl/controller.h"
#include "nymkit/ctl/protocol.h"

namespace nymkit::ctl {

// Line-delimited JSON control service on a unix socket. Each connection
// may have several requests in flight; responses carry the request id.
class ControlServer {
 public:
  ControlServer(Controller& controller, std::filesystem::path socket_path);
  ~ControlServer();
  ControlServer(const ControlServer&) = delete;
  ControlServer& operator=(const ControlServer&) = delete;

  // Throws kAddressInUse if another service answers on the path. A stale
  // socket file left by a dead service is replaced.
  void start();
  void stop();

  const std::filesystem::path& path() const { return path_; }

 private:
  struct Connection;

  void accept_loop();
  void serve(std::shared_ptr<Connection> conn);
  void handle(const std::shared_ptr<Connection>& conn, const std::string& line);

  Controller& controller_;
  std::filesystem::path path_;
  int listen_fd_ = -1;
  int wake_[2] = {-1, -1};
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  std::mutex mu_;
  std::list<std::shared_ptr<Connection>> conns_;
  std::list<std::thread> threads_;
};

// Client side of the socket protocol.
class ControlClient : public CommandTarget {
 public:
  using EventSink = std::function<void(const nlohmann::json&)>;

  // Throws kUnreachable if nothing listens on the path.
  explicit ControlClient(const std::filesystem::path& socket_path);
  ~ControlClient() override;
  ControlClient(const ControlClient&) = delete;
  ControlClient& operator=(const ControlClient&) = delete;

  nlohmann::json call(const std::string& verb, const nlohmann::json& args) override;
  // Starts event delivery to `sink` (on the reader thread).
  void subscribe(EventSink sink);
  void send_raw(const std::string& line);

 private:
  void read_loop();
  nlohmann::json await(std::uint64_t id);

  int fd_ = -1;
  std::thread reader_;
  std::mutex write_mu_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::uint64_t, nlohmann::json> responses_;
  EventSink sink_;
  bool closed_ = false;
  std::uint64_t next_id_ = 1;
};

}  // namespace nymkit::ctl
