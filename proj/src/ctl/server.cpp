#include "nymkit/ctl/server.h"

#include <fcntl.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/stat.h>
#include <sys/un.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "nymkit/common/error.h"
#include "nymkit/common/log.h"

namespace nymkit::ctl {
namespace {

using nlohmann::json;

sockaddr_un address(const std::filesystem::path& path) {
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  auto s = path.string();
  if (s.size() >= sizeof addr.sun_path) fail(Errc::kInvalidArgument, "socket path too long: " + s);
  std::memcpy(addr.sun_path, s.c_str(), s.size() + 1);
  return addr;
}

int connect_to(const std::filesystem::path& path) {
  auto addr = address(path);
  int fd = ::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) fail(Errc::kBackendFailure, std::strerror(errno));
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    ::close(fd);
    return -1;
  }
  return fd;
}

bool send_all(int fd, const std::string& data) {
  std::size_t off = 0;
  while (off < data.size()) {
    ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    off += static_cast<std::size_t>(n);
  }
  return true;
}

// Reads until a newline; returns false at end of stream.
class LineReader {
 public:
  explicit LineReader(int fd) : fd_(fd) {}

  bool next(std::string& line) {
    for (;;) {
      auto nl = buf_.find('\n');
      if (nl != std::string::npos) {
        line = buf_.substr(0, nl);
        buf_.erase(0, nl + 1);
        return true;
      }
      char chunk[4096];
      ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return false;
      buf_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  int fd_;
  std::string buf_;
};

}  // namespace

struct ControlServer::Connection {
  int fd = -1;
  std::mutex write_mu;
  int subscription = 0;
  std::mutex workers_mu;
  std::vector<std::thread> workers;

  void write(const json& frame) {
    std::lock_guard lock(write_mu);
    send_all(fd, frame.dump() + "\n");
  }
};

ControlServer::ControlServer(Controller& controller, std::filesystem::path socket_path)
    : controller_(controller), path_(std::move(socket_path)) {}

ControlServer::~ControlServer() { stop(); }

void ControlServer::start() {
  auto addr = address(path_);
  std::error_code ec;
  if (std::filesystem::exists(std::filesystem::symlink_status(path_, ec))) {
    if (!std::filesystem::is_socket(path_, ec)) {
      fail(Errc::kAddressInUse, "path exists and is not a socket: " + path_.string());
    }
    int probe = connect_to(path_);
    if (probe >= 0) {
      ::close(probe);
      fail(Errc::kAddressInUse, "a control service is already listening on " + path_.string());
    }
    std::filesystem::remove(path_, ec);
  }

  listen_fd_ = ::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (listen_fd_ < 0) fail(Errc::kBackendFailure, std::strerror(errno));
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    int err = errno;
    ::close(listen_fd_);
    listen_fd_ = -1;
    fail(err == EADDRINUSE ? Errc::kAddressInUse : Errc::kBackendFailure,
         "bind " + path_.string() + ": " + std::strerror(err));
  }
  ::chmod(path_.c_str(), 0600);
  if (::listen(listen_fd_, 16) != 0) fail(Errc::kBackendFailure, std::strerror(errno));
  if (::pipe2(wake_, O_CLOEXEC) != 0) fail(Errc::kBackendFailure, std::strerror(errno));

  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
  logger()->info("control service listening on {}", path_.string());
}

void ControlServer::stop() {
  if (!running_.exchange(false)) return;
  char b = 0;
  (void)!::write(wake_[1], &b, 1);
  acceptor_.join();
  {
    std::lock_guard lock(mu_);
    for (auto& c : conns_) ::shutdown(c->fd, SHUT_RDWR);
  }
  for (auto& t : threads_) t.join();
  threads_.clear();
  ::close(listen_fd_);
  ::close(wake_[0]);
  ::close(wake_[1]);
  listen_fd_ = wake_[0] = wake_[1] = -1;
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

void ControlServer::accept_loop() {
  while (running_) {
    pollfd fds[2] = {{listen_fd_, POLLIN, 0}, {wake_[0], POLLIN, 0}};
    if (::poll(fds, 2, -1) < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (fds[1].revents) break;
    if (!(fds[0].revents & POLLIN)) continue;
    int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) continue;
    auto conn = std::make_shared<Connection>();
    conn->fd = fd;
    std::lock_guard lock(mu_);
    conns_.push_back(conn);
    threads_.emplace_back([this, conn] { serve(conn); });
  }
}

void ControlServer::serve(std::shared_ptr<Connection> conn) {
  LineReader reader(conn->fd);
  std::string line;
  while (reader.next(line)) {
    if (!line.empty()) handle(conn, line);
  }
  if (conn->subscription) controller_.events().unsubscribe(conn->subscription);
  {
    std::lock_guard lock(conn->workers_mu);
    for (auto& w : conn->workers) w.join();
  }
  ::close(conn->fd);
  std::lock_guard lock(mu_);
  conns_.remove(conn);
}

void ControlServer::handle(const std::shared_ptr<Connection>& conn, const std::string& line) {
  json frame;
  try {
    frame = json::parse(line);
  } catch (const json::exception& e) {
    conn->write(error_frame(nullptr, Errc::kBadFormat, e.what()));
    return;
  }
  json id = frame.is_object() ? frame.value("id", json()) : json();
  if (!frame.is_object() || !frame.contains("verb") || !frame.at("verb").is_string()) {
    conn->write(error_frame(id, Errc::kBadFormat, "frame needs a verb"));
    return;
  }
  auto verb = frame.at("verb").get<std::string>();
  if (verb == "subscribe") {
    if (!conn->subscription) {
      std::weak_ptr<Connection> weak = conn;
      conn->subscription = controller_.events().subscribe([weak](const json& e) {
        if (auto c = weak.lock()) c->write(e);
      });
    }
    conn->write(ok_frame(id, json::object()));
    return;
  }
  if (verb == "unsubscribe") {
    if (conn->subscription) controller_.events().unsubscribe(conn->subscription);
    conn->subscription = 0;
    conn->write(ok_frame(id, json::object()));
    return;
  }

  json args = frame.value("args", json::object());
  // Requests run concurrently so a blocked approval does not stall the
  // connection that will answer it.
  std::lock_guard lock(conn->workers_mu);
  conn->workers.emplace_back([this, conn, id, verb, args] {
    json reply;
    try {
      reply = ok_frame(id, controller_.call(verb, args));
    } catch (const Error& e) {
      reply = error_frame(id, e.code(), e.what());
    } catch (const json::exception& e) {
      reply = error_frame(id, Errc::kUsage, e.what());
    } catch (const std::exception& e) {
      reply = error_frame(id, Errc::kBackendFailure, e.what());
    }
    conn->write(reply);
  });
}

ControlClient::ControlClient(const std::filesystem::path& socket_path) {
  fd_ = connect_to(socket_path);
  if (fd_ < 0) fail(Errc::kUnreachable, "no control service at " + socket_path.string());
  reader_ = std::thread([this] { read_loop(); });
}

ControlClient::~ControlClient() {
  ::shutdown(fd_, SHUT_RDWR);
  reader_.join();
  ::close(fd_);
}

void ControlClient::read_loop() {
  LineReader reader(fd_);
  std::string line;
  while (reader.next(line)) {
    json frame;
    try {
      frame = json::parse(line);
    } catch (const json::exception&) {
      continue;
    }
    if (frame.contains("event")) {
      EventSink sink;
      {
        std::lock_guard lock(mu_);
        sink = sink_;
      }
      if (sink) sink(frame);
      continue;
    }
    if (!frame.contains("id") || !frame.at("id").is_number_unsigned()) continue;
    auto id = frame.at("id").get<std::uint64_t>();
    std::lock_guard lock(mu_);
    responses_[id] = std::move(frame);
    cv_.notify_all();
  }
  std::lock_guard lock(mu_);
  closed_ = true;
  cv_.notify_all();
}

json ControlClient::await(std::uint64_t id) {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return closed_ || responses_.count(id); });
  auto it = responses_.find(id);
  if (it == responses_.end()) fail(Errc::kUnreachable, "control service closed the connection");
  json frame = std::move(it->second);
  responses_.erase(it);
  return frame;
}

void ControlClient::send_raw(const std::string& line) {
  std::lock_guard lock(write_mu_);
  if (!send_all(fd_, line + "\n")) fail(Errc::kUnreachable, "control service closed the connection");
}

json ControlClient::call(const std::string& verb, const json& args) {
  std::uint64_t id;
  {
    std::lock_guard lock(mu_);
    id = next_id_++;
  }
  send_raw(json{{"id", id}, {"verb", verb}, {"args", args}}.dump());
  return unwrap_response(await(id));
}

void ControlClient::subscribe(EventSink sink) {
  {
    std::lock_guard lock(mu_);
    sink_ = std::move(sink);
  }
  call("subscribe", json::object());
}

}  // namespace nymkit::ctl
