#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nymkit/ctl/protocol.h"

namespace nymkit::ctl {

struct CliIo {
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;
  // Environment lookup.
  std::function<std::optional<std::string>(const std::string& var)> env;
  // Interactive secret entry; nullopt when no terminal input is available.
  std::function<std::optional<std::string>(const std::string& prompt)> prompt;
};

// stdout/stderr, getenv, and a no-echo terminal prompt (stdin when not a
// terminal).
CliIo default_cli_io();

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;  // engine error, printed as "error: <Code>: <message>"
inline constexpr int kExitUsage = 2;

// Runs one verb, e.g. {"create", "--mode", "ephemeral"}. Passwords come from
// NYMKIT_PASSWORD / NYMKIT_CLOUD_PASSWORD or the prompt; a password on the
// command line is refused.
int run_cli(const std::vector<std::string>& args, CommandTarget& target, const CliIo& io);

// Subcommands the CLI exposes, sorted.
std::vector<std::string> cli_verbs();

// Translation from argv to (verb, args) without executing, secrets omitted.
// Throws kUsage.
std::pair<std::string, nlohmann::json> parse_cli(const std::vector<std::string>& args);

}  // namespace nymkit::ctl
