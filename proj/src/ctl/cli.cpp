#include "nymkit/ctl/cli.h"

#include <termios.h>
#include <unistd.h>

#include <CLI11.hpp>

#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <list>
#include <memory>

#include "nymkit/common/error.h"

namespace nymkit::ctl {
namespace {

using nlohmann::json;

// Binds CLI11 options to optional values and copies the ones given into a
// JSON argument object.
class Args {
 public:
  explicit Args(CLI::App* sub) : sub_(sub) {}

  Args& pos(const std::string& name, const std::string& key, const std::string& desc) {
    auto v = str_slot();
    sub_->add_option(name, *v, desc)->required();
    binders_.push_back([v, key](json& a) { a[key] = *v; });
    return *this;
  }
  Args& str(const std::string& flag, const std::string& key, const std::string& desc) {
    auto v = opt_slot();
    sub_->add_option(flag, *v, desc);
    binders_.push_back([v, key](json& a) {
      if (*v) a[key] = **v;
    });
    return *this;
  }
  Args& num(const std::string& flag, const std::string& key, const std::string& desc) {
    auto v = std::make_shared<std::optional<std::int64_t>>();
    sub_->add_option(flag, *v, desc);
    binders_.push_back([v, key](json& a) {
      if (*v) a[key] = **v;
    });
    return *this;
  }
  Args& flag(const std::string& flag, const std::string& key, const std::string& desc,
             bool value = true) {
    auto v = std::make_shared<bool>(false);
    sub_->add_flag(flag, *v, desc);
    binders_.push_back([v, key, value](json& a) {
      if (*v) a[key] = value;
    });
    return *this;
  }
  Args& list(const std::string& flag, const std::string& key, const std::string& desc) {
    auto v = std::make_shared<std::vector<std::string>>();
    sub_->add_option(flag, *v, desc)->allow_extra_args(false);
    binders_.push_back([v, key](json& a) {
      if (!v->empty()) a[key] = *v;
    });
    return *this;
  }

  json collect() const {
    json a = json::object();
    for (const auto& b : binders_) b(a);
    return a;
  }

 private:
  std::shared_ptr<std::string> str_slot() { return std::make_shared<std::string>(); }
  std::shared_ptr<std::optional<std::string>> opt_slot() {
    return std::make_shared<std::optional<std::string>>();
  }

  CLI::App* sub_;
  std::vector<std::function<void(json&)>> binders_;
};

struct Cli {
  CLI::App app{"Nym manager: isolated pseudonym environments", "nym"};
  bool json_output = false;
  std::list<std::pair<CLI::App*, Args>> verbs;

  Args& verb(const std::string& name, const std::string& desc) {
    auto* sub = app.add_subcommand(name, desc);
    verbs.emplace_back(sub, Args(sub));
    return verbs.back().second;
  }

  Cli() {
    app.require_subcommand(1);
    app.add_flag("--json", json_output, "Print the raw JSON result");

    verb("create", "Start a fresh nym")
        .str("--mode", "mode", "ephemeral, persistent or preconfigured")
        .str("--transport", "transport", "incognito, onion or dcnet")
        .str("--spec", "spec", "anon_ram/anon_disk/comm_ram/comm_disk in MB");
    verb("load", "Restore a stored nym")
        .pos("object", "object", "Stored object name")
        .str("--backend", "backend", "local or cloud")
        .num("--version", "version", "Version to restore (default: latest)")
        .str("--account", "account", "Cloud account to log in with")
        .flag("--unseeded-loader", "seeded_loader", "Give the loader nym a random guard", false);
    verb("store", "Save a persistent nym")
        .pos("nym", "nym", "Nym id")
        .str("--backend", "backend", "local or cloud")
        .str("--object", "object", "Object name (default: nym id or its last object)")
        .str("--account", "account", "Cloud account to log in with");
    verb("snapshot", "Save a pre-configured nym's boot image")
        .pos("nym", "nym", "Nym id")
        .str("--backend", "backend", "local or cloud")
        .str("--object", "object", "Object name")
        .str("--account", "account", "Cloud account to log in with");
    verb("terminate", "End a nym's session")
        .pos("nym", "nym", "Nym id")
        .flag("--discard", "discard", "Drop a persistent nym's state without storing")
        .flag("--store", "store", "Store a persistent nym first")
        .str("--backend", "backend", "Backend for --store")
        .str("--object", "object", "Object for --store");
    verb("pause", "Pause a nym").pos("nym", "nym", "Nym id");
    verb("resume", "Resume a paused nym").pos("nym", "nym", "Nym id");
    verb("list", "List nyms").flag("--all", "all", "Include terminated nyms");
    verb("scrub", "Show findings and the scrub plan for a source file")
        .pos("file", "file", "File in the SaniVM source catalog")
        .num("--paranoia", "paranoia", "0, 1 or 2")
        .list("--override", "overrides", "Accept a High finding without a transform");
    verb("transfer", "Scrub a file and deliver it into a nym")
        .pos("nym", "nym", "Nym id")
        .pos("file", "file", "File in the SaniVM source catalog")
        .num("--paranoia", "paranoia", "0, 1 or 2")
        .list("--override", "overrides", "Accept a High finding without a transform")
        .flag("--approval", "approval", "Wait for an approval instead of failing")
        .num("--timeout-ms", "timeout_ms", "Approval timeout");
    verb("approve", "Answer a pending approval request")
        .pos("request", "request", "Request id")
        .flag("--accept", "approve", "Approve the transfer")
        .num("--paranoia", "paranoia", "Replace the plan's paranoia level")
        .list("--override", "overrides", "Accept a High finding without a transform");
    verb("probe", "Run the isolation probe");
    verb("report", "Produce an evaluation report")
        .pos("kind", "kind", "ksm, bandwidth, phases, sizes or metrics")
        .num("--nyms", "nyms", "Nyms for ksm")
        .str("--transport", "transport", "Transport for bandwidth and phases")
        .num("--payload", "payload_bytes", "Download size for bandwidth")
        .num("--runs", "runs", "Runs per usage model for phases")
        .str("--mode", "mode", "persistent or preconfigured for sizes")
        .num("--cycles", "cycles", "Save cycles for sizes");
    verb("host-boot", "Boot an installed OS as a nym")
        .str("--disk", "disk", "Disk image file")
        .str("--synthesize", "synthesize", "Use a synthetic disk: Linux, WindowsVista, Windows7, Windows8")
        .str("--profile", "profile", "Synthetic disk driver profile: BareMetal or Virtual")
        .num("--blocks", "blocks", "Synthetic disk block count")
        .flag("--repair", "repair", "Apply the virtual-hardware repair first")
        .str("--policy", "policy", "discard, writeback or storecow")
        .flag("--confirm", "confirm", "Confirm a writeback policy")
        .str("--anonymizer", "anonymizer", "Route through an anonymizer (not anonymous)");
  }
};

bool is_password_flag(const std::string& a) {
  for (const char* f : {"--password", "--cloud-password", "--passphrase", "-p"}) {
    std::string flag(f);
    if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
  }
  return false;
}

std::pair<std::string, json> parse_with(Cli& cli, const std::vector<std::string>& args) {
  for (const auto& a : args) {
    if (is_password_flag(a)) {
      fail(Errc::kUsage,
           "passwords are read from NYMKIT_PASSWORD or a prompt, never from the command line");
    }
  }
  cli.app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  for (auto& [sub, binder] : cli.verbs) {
    if (sub->parsed()) return {sub->get_name(), binder.collect()};
  }
  fail(Errc::kUsage, "no verb given");
}

std::optional<std::string> secret(const CliIo& io, const std::string& var,
                                  const std::string& prompt) {
  if (io.env) {
    if (auto v = io.env(var)) return v;
  }
  if (io.prompt) return io.prompt(prompt);
  return std::nullopt;
}

void print_human(std::ostream& out, const std::string& verb, const json& body) {
  if (verb == "create" || verb == "load" || verb == "host-boot") {
    out << body.at("nym").get<std::string>() << "\n";
  } else if (verb == "store" || verb == "snapshot") {
    const auto& r = body.at("receipt");
    out << "stored " << body.at("nym").get<std::string>() << " to "
        << r.at("backend").get<std::string>() << ":" << r.at("object").get<std::string>()
        << " version " << r.at("version") << " (" << r.at("archive_bytes") << " bytes)\n";
  } else if (verb == "terminate" || verb == "pause" || verb == "resume") {
    out << body.at("nym").get<std::string>() << " " << body.at("state").get<std::string>() << "\n";
  } else if (verb == "list") {
    out << std::left << std::setw(10) << "ID" << std::setw(15) << "MODE" << std::setw(12)
        << "STATE" << std::setw(11) << "TRANSPORT"
        << "GUARD\n";
    for (const auto& n : body.at("nyms")) {
      out << std::setw(10) << n.value("id", "") << std::setw(15) << n.value("mode", "")
          << std::setw(12) << n.value("state", "") << std::setw(11) << n.value("transport", "")
          << (n.value("guard_seeded", false) ? "seeded" : "random") << "\n";
    }
  } else if (verb == "scrub") {
    out << body.at("file").get<std::string>() << " (" << body.at("kind").get<std::string>()
        << ")\n";
    for (const auto& f : body.at("findings")) {
      out << "  " << std::left << std::setw(7) << f.value("severity", "") << std::setw(14)
          << f.value("field", "") << f.value("rationale", "") << "\n";
    }
    out << "plan:";
    for (const auto& t : body.at("plan").at("transforms")) out << " " << t.get<std::string>();
    out << "\n";
    if (!body.at("uncovered").empty()) out << "uncovered: " << body.at("uncovered").dump() << "\n";
    if (body.at("residual").is_array()) {
      out << "residual findings: " << body.at("residual").size() << "\n";
    }
  } else if (verb == "transfer") {
    out << "delivered " << body.value("file", "") << " to " << body.value("nym", "") << ":"
        << body.value("destination", "") << "\n";
  } else if (verb == "approve") {
    out << "answered " << body.at("request").get<std::string>() << "\n";
  } else if (verb == "probe") {
    out << "violations: " << body.at("violations") << " (attempted " << body.at("attempted")
        << ", delivered " << body.at("delivered") << ")\n";
    for (const auto& r : body.at("violation_records")) out << "  " << r.dump() << "\n";
  } else if (verb == "report") {
    if (body.contains("csv")) out << body.at("csv").get<std::string>();
    if (body.contains("jsonl")) out << body.at("jsonl").get<std::string>();
  } else {
    out << body.dump(2) << "\n";
  }
}

}  // namespace

CliIo default_cli_io() {
  CliIo io;
  io.out = &std::cout;
  io.err = &std::cerr;
  io.env = [](const std::string& var) -> std::optional<std::string> {
    const char* v = std::getenv(var.c_str());
    return v ? std::optional<std::string>(v) : std::nullopt;
  };
  io.prompt = [](const std::string& prompt) -> std::optional<std::string> {
    bool tty = ::isatty(STDIN_FILENO);
    termios old{};
    if (tty) {
      std::cerr << prompt << std::flush;
      ::tcgetattr(STDIN_FILENO, &old);
      termios quiet = old;
      quiet.c_lflag &= ~static_cast<tcflag_t>(ECHO);
      ::tcsetattr(STDIN_FILENO, TCSANOW, &quiet);
    }
    std::string line;
    bool ok = static_cast<bool>(std::getline(std::cin, line));
    if (tty) {
      ::tcsetattr(STDIN_FILENO, TCSANOW, &old);
      std::cerr << "\n";
    }
    return ok ? std::optional<std::string>(line) : std::nullopt;
  };
  return io;
}

std::vector<std::string> cli_verbs() {
  Cli cli;
  std::vector<std::string> out;
  for (const auto& [sub, _] : cli.verbs) out.push_back(sub->get_name());
  std::sort(out.begin(), out.end());
  return out;
}

std::pair<std::string, json> parse_cli(const std::vector<std::string>& args) {
  Cli cli;
  try {
    return parse_with(cli, args);
  } catch (const CLI::ParseError& e) {
    fail(Errc::kUsage, e.what());
  }
}

int run_cli(const std::vector<std::string>& args, CommandTarget& target, const CliIo& io) {
  Cli cli;
  std::string verb;
  json a;
  try {
    std::tie(verb, a) = parse_with(cli, args);
  } catch (const CLI::CallForHelp& e) {
    return cli.app.exit(e, *io.out, *io.err);
  } catch (const CLI::CallForAllHelp& e) {
    return cli.app.exit(e, *io.out, *io.err);
  } catch (const CLI::ParseError& e) {
    *io.err << "error: Usage: " << e.what() << "\n";
    *io.err << "run 'nym --help' for the list of verbs\n";
    return kExitUsage;
  } catch (const Error& e) {
    *io.err << "error: " << errc_name(e.code()) << ": " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    bool wants_password = verb == "load" || verb == "store" || verb == "snapshot" ||
                          (verb == "terminate" && a.value("store", false));
    a.erase("store");
    if (wants_password) {
      auto pw = secret(io, "NYMKIT_PASSWORD", "Password: ");
      if (!pw) fail(Errc::kUsage, "no password: set NYMKIT_PASSWORD or run interactively");
      a["password"] = *pw;
    }
    if (a.contains("account")) {
      auto pw = secret(io, "NYMKIT_CLOUD_PASSWORD", "Cloud password: ");
      if (!pw) fail(Errc::kUsage, "no cloud password: set NYMKIT_CLOUD_PASSWORD");
      a["cloud_password"] = *pw;
    }
    if (verb == "host-boot" && !a.contains("disk") && !a.contains("synthesize")) {
      fail(Errc::kUsage, "host-boot needs --disk or --synthesize");
    }
    auto body = target.call(verb, a);
    if (cli.json_output) {
      *io.out << body.dump(2) << "\n";
    } else {
      print_human(*io.out, verb, body);
    }
    return kExitOk;
  } catch (const Error& e) {
    *io.err << "error: " << errc_name(e.code()) << ": " << e.what() << "\n";
    return e.code() == Errc::kUsage ? kExitUsage : kExitError;
  }
}

}  // namespace nymkit::ctl
