// nym: command-line front end and control service.
//
//   nym [--config FILE] [--socket PATH] <verb> [args...]
//   nym [--config FILE] serve [--socket PATH] [--http-port N] [--http-host H] [--allow-remote]
//
// With a socket (flag, NYMKIT_SOCK, or [ctl] socket in the config) verbs go
// to a running service; otherwise they run against an in-process engine.

#include <signal.h>
#include <unistd.h>

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>

#include "nymkit/common/error.h"
#include "nymkit/ctl/cli.h"
#include "nymkit/ctl/controller.h"
#include "nymkit/ctl/http_bridge.h"
#include "nymkit/ctl/server.h"
#include "nymkit/ctl/settings.h"

namespace {

using namespace nymkit;

std::filesystem::path default_socket() {
  if (const char* dir = std::getenv("XDG_RUNTIME_DIR")) {
    return std::filesystem::path(dir) / "nymkit.sock";
  }
  return "/tmp/nymkit-" + std::to_string(::getuid()) + ".sock";
}

int serve(ctl::Settings settings, std::vector<std::string> args,
          std::optional<std::filesystem::path> socket) {
  CLI::App app{"Run the control service", "nym serve"};
  std::optional<std::string> sock_flag;
  int http_port = -1;
  std::string http_host = "127.0.0.1";
  bool allow_remote = false;
  app.add_option("--socket", sock_flag, "Unix socket path");
  app.add_option("--http-port", http_port, "Also serve the HTTP bridge on this port (0: any)");
  app.add_option("--http-host", http_host, "HTTP bridge address");
  app.add_flag("--allow-remote", allow_remote, "Permit a non-loopback HTTP address");
  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (sock_flag) socket = *sock_flag;
  if (!socket) socket = default_socket();

  // Block the signals before any thread starts so only sigwait sees them.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  ctl::Controller controller(std::move(settings));
  ctl::ControlServer server(controller, *socket);
  server.start();
  std::cout << "control socket " << socket->string() << std::endl;
  std::unique_ptr<ctl::HttpBridge> bridge;
  if (http_port >= 0) {
    bridge = std::make_unique<ctl::HttpBridge>(
        controller, ctl::HttpOptions{http_host, http_port, allow_remote});
    int port = bridge->start();
    std::cout << "http bridge http://" << http_host << ":" << port << std::endl;
  }
  int sig = 0;
  sigwait(&set, &sig);
  if (bridge) bridge->stop();
  server.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nym manager", "nym"};
  app.set_help_flag();
  app.prefix_command();
  app.allow_extras();
  std::optional<std::string> config;
  std::optional<std::string> socket_flag;
  app.add_option("--config", config, "Engine configuration file");
  app.add_option("--socket", socket_flag, "Control socket of a running service");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  std::vector<std::string> rest = app.remaining();

  try {
    ctl::Settings settings;
    if (config) settings = ctl::load_settings(*config);
    std::optional<std::filesystem::path> socket = settings.socket_path;
    if (const char* env = std::getenv("NYMKIT_SOCK")) socket = env;
    if (socket_flag) socket = *socket_flag;

    if (!rest.empty() && rest.front() == "serve") {
      rest.erase(rest.begin());
      return serve(std::move(settings), std::move(rest), socket);
    }

    auto io = ctl::default_cli_io();
    if (socket) {
      ctl::ControlClient client(*socket);
      return ctl::run_cli(rest, client, io);
    }
    ctl::Controller controller(std::move(settings));
    return ctl::run_cli(rest, controller, io);
  } catch (const Error& e) {
    std::cerr << "error: " << errc_name(e.code()) << ": " << e.what() << "\n";
    return e.code() == Errc::kUsage ? ctl::kExitUsage : ctl::kExitError;
  }
}
