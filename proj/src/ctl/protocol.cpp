#include "nymkit/ctl/protocol.h"

#include <algorithm>
#include <cctype>

namespace nymkit::ctl {

nlohmann::json ok_frame(const nlohmann::json& id, nlohmann::json body) {
  return {{"id", id}, {"ok", true}, {"body", std::move(body)}};
}

nlohmann::json error_frame(const nlohmann::json& id, Errc code, std::string_view message) {
  return {{"id", id},
          {"ok", false},
          {"error", {{"code", errc_name(code)}, {"message", std::string(message)}}}};
}

nlohmann::json unwrap_response(const nlohmann::json& frame) {
  if (!frame.is_object() || !frame.contains("ok")) fail(Errc::kBadFormat, "not a response frame");
  if (frame.at("ok").get<bool>()) return frame.value("body", nlohmann::json::object());
  const auto& err = frame.at("error");
  auto code = parse_errc(err.value("code", "")).value_or(Errc::kBackendFailure);
  throw Error(code, err.value("message", ""));
}

std::optional<Errc> parse_errc(std::string_view name) {
  for (int i = 0; i <= static_cast<int>(Errc::kUsage); ++i) {
    auto c = static_cast<Errc>(i);
    if (errc_name(c) == name) return c;
  }
  return std::nullopt;
}

bool is_secret_key(std::string_view key) {
  std::string k(key);
  std::transform(k.begin(), k.end(), k.begin(), [](unsigned char c) { return std::tolower(c); });
  for (const char* word : {"password", "secret", "passphrase", "token"}) {
    if (k.find(word) != std::string::npos) return true;
  }
  return false;
}

nlohmann::json redact(nlohmann::json value) {
  if (value.is_object()) {
    for (auto it = value.begin(); it != value.end(); ++it) {
      *it = is_secret_key(it.key()) ? nlohmann::json("***") : redact(*it);
    }
  } else if (value.is_array()) {
    for (auto& v : value) v = redact(v);
  }
  return value;
}

}  // namespace nymkit::ctl
