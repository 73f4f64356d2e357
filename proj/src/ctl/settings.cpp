#include "nymkit/ctl/settings.h"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "nymkit/common/error.h"

namespace nymkit::ctl {
namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"engine", {"host_ram_mb", "rng_seed", "store_dir", "transport", "seeded_loader", "relays",
                  "backend"}},
      {"spec", {"anon_ram_mb", "anon_disk_mb", "comm_ram_mb", "comm_disk_mb"}},
      {"latency", {"vm_boot_ms", "stored_state_factor", "link_bytes_per_ms", "jitter"}},
      {"archive", {"kdf_ops", "kdf_mem_kib"}},
      {"sanivm", {"source_dir", "audit_path", "shared_folder_capacity"}},
      {"ctl", {"socket", "approval_timeout_ms"}},
  };
  return keys;
}

template <typename T>
void read(const pt::ptree& tree, const std::string& key, T& out) {
  auto v = tree.get_optional<std::string>(key);
  if (!v) return;
  try {
    out = tree.get<T>(key);
  } catch (const pt::ptree_bad_data&) {
    fail(Errc::kBadFormat, "bad value for " + key + ": " + *v);
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

}  // namespace

Settings parse_settings(std::string_view text, Settings s, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(Errc::kBadFormat, e.what());
  }

  for (const auto& [section, body] : tree) {
    auto it = known_keys().find(section);
    if (it == known_keys().end()) fail(Errc::kBadFormat, "unknown section [" + section + "]");
    for (const auto& [key, _] : body) {
      if (!it->second.count(key)) fail(Errc::kBadFormat, "unknown key " + section + "." + key);
    }
  }

  auto& e = s.engine;
  read(tree, "engine.host_ram_mb", e.host_ram_mb);
  read(tree, "engine.rng_seed", e.rng_seed);
  read(tree, "engine.seeded_loader", e.seeded_loader);
  read(tree, "engine.backend", s.default_backend);
  if (auto v = tree.get_optional<std::string>("engine.store_dir")) {
    e.local_store_dir = resolve(base_dir, *v);
  }
  if (auto v = tree.get_optional<std::string>("engine.transport")) {
    e.default_transport = transports::parse_kind(*v);
  }
  if (auto v = tree.get_optional<std::string>("engine.relays")) {
    auto path = resolve(base_dir, *v);
    std::ifstream f(path);
    if (!f) fail(Errc::kNotFound, "relay directory not found: " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    e.relays = transports::parse_relay_directory(ss.str());
  }
  if (s.default_backend != "local" && s.default_backend != "cloud") {
    fail(Errc::kBadFormat, "unknown backend " + s.default_backend);
  }

  read(tree, "spec.anon_ram_mb", e.default_spec.anonvm.ram_mb);
  read(tree, "spec.anon_disk_mb", e.default_spec.anonvm.writable_disk_mb);
  read(tree, "spec.comm_ram_mb", e.default_spec.commvm.ram_mb);
  read(tree, "spec.comm_disk_mb", e.default_spec.commvm.writable_disk_mb);

  read(tree, "latency.vm_boot_ms", e.latency.vm_boot_ms);
  read(tree, "latency.stored_state_factor", e.latency.stored_state_factor);
  read(tree, "latency.link_bytes_per_ms", e.latency.link_bytes_per_ms);
  read(tree, "latency.jitter", e.latency.jitter);

  read(tree, "archive.kdf_ops", e.archive_kdf.opslimit);
  read(tree, "archive.kdf_mem_kib", e.archive_kdf.memlimit_kib);

  if (auto v = tree.get_optional<std::string>("sanivm.source_dir")) {
    s.source_dir = resolve(base_dir, *v);
  }
  if (auto v = tree.get_optional<std::string>("sanivm.audit_path")) {
    s.sanivm.audit_path = resolve(base_dir, *v);
  }
  read(tree, "sanivm.shared_folder_capacity", s.sanivm.shared_folder_capacity);

  if (auto v = tree.get_optional<std::string>("ctl.socket")) s.socket_path = resolve(base_dir, *v);
  std::int64_t timeout = s.approval_timeout.count();
  read(tree, "ctl.approval_timeout_ms", timeout);
  if (timeout <= 0) fail(Errc::kBadFormat, "approval_timeout_ms must be positive");
  s.approval_timeout = std::chrono::milliseconds(timeout);
  return s;
}

Settings load_settings(const std::filesystem::path& path, Settings base) {
  std::ifstream f(path);
  if (!f) fail(Errc::kNotFound, "config file not found: " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_settings(ss.str(), std::move(base), path.parent_path());
}

}  // namespace nymkit::ctl
