#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "nymkit/common/error.h"

// Control protocol: newline-delimited JSON frames.
//
//   request   {"id": <any>, "verb": "<verb>", "args": {...}}
//   response  {"id": <same>, "ok": true, "body": {...}}
//             {"id": <same>, "ok": false, "error": {"code": "<Errc>", "message": "..."}}
//   event     {"event": "<kind>", "seq": <n>, ...}
//
// "subscribe" and "unsubscribe" are handled by the transport and toggle
// event delivery on the connection.
namespace nymkit::ctl {

// Anything that executes verbs: the in-process controller or a client of a
// running service.
class CommandTarget {
 public:
  virtual ~CommandTarget() = default;
  virtual nlohmann::json call(const std::string& verb, const nlohmann::json& args) = 0;
};

nlohmann::json ok_frame(const nlohmann::json& id, nlohmann::json body);
nlohmann::json error_frame(const nlohmann::json& id, Errc code, std::string_view message);
// Rethrows an error frame as nymkit::Error; returns the body otherwise.
nlohmann::json unwrap_response(const nlohmann::json& frame);

std::optional<Errc> parse_errc(std::string_view name);

// Copy with every value under a secret-bearing key ("password",
// "cloud_password", ...) replaced by "***".
nlohmann::json redact(nlohmann::json value);
bool is_secret_key(std::string_view key);

}  // namespace nymkit::ctl
