#include "nymkit/snapstore/backend.h"

#include <algorithm>
#include <fstream>

#include "nymkit/common/digest.h"
#include "nymkit/common/error.h"

namespace nymkit::snapstore {
namespace {

constexpr std::size_t kChunk = 64 * 1024;

// Pushes `bytes` through the stream (if any) in chunks, honoring an injected
// failure point. Returns normally only if every byte was transferred.
void transfer(transports::StreamHandle* stream, ByteView bytes,
              std::optional<std::size_t> fail_after, bool upload) {
  bool fails = fail_after && *fail_after <= bytes.size();
  std::size_t limit = fails ? *fail_after : bytes.size();
  for (std::size_t sent = 0; sent < limit;) {
    std::size_t n = std::min(kChunk, limit - sent);
    if (stream) {
      if (upload) stream->write(bytes.subspan(sent, n));
      else stream->receive(bytes.subspan(sent, n));
    }
    sent += n;
  }
  if (fails) fail(Errc::kBackendFailure, "connection lost during upload");
}

std::optional<std::uint64_t> parse_version(const std::string& file,
                                           const std::string& object) {
  if (file.size() <= object.size() + 1 || file.compare(0, object.size(), object) != 0 ||
      file[object.size()] != '.') {
    return std::nullopt;
  }
  std::string suffix = file.substr(object.size() + 1);
  if (suffix.empty() || suffix.size() > 18 ||
      !std::all_of(suffix.begin(), suffix.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return std::nullopt;
  }
  return std::stoull(suffix);
}

}  // namespace

void validate_object_name(const std::string& object) {
  if (object.empty() || object.front() == '.' || object.size() > 200 ||
      !std::all_of(object.begin(), object.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
               (c >= '0' && c <= '9') || c == '.' || c == '_' || c == '-';
      })) {
    fail(Errc::kInvalidArgument, "invalid object name: " + object);
  }
}

// LocalDir -----------------------------------------------------------------

LocalDirBackend::LocalDirBackend(std::filesystem::path root) : root_(std::move(root)) {
  std::filesystem::create_directories(root_);
}

std::string LocalDirBackend::location(const std::string& object) const {
  return "file://" + std::filesystem::absolute(root_ / object).lexically_normal().string();
}

std::vector<std::uint64_t> LocalDirBackend::versions(const std::string& object) const {
  validate_object_name(object);
  std::vector<std::uint64_t> out;
  for (const auto& ent : std::filesystem::directory_iterator(root_)) {
    if (!ent.is_regular_file()) continue;
    if (auto v = parse_version(ent.path().filename().string(), object)) out.push_back(*v);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> LocalDirBackend::objects() const {
  std::vector<std::string> out;
  for (const auto& ent : std::filesystem::directory_iterator(root_)) {
    std::string name = ent.path().filename().string();
    if (!ent.is_regular_file() || name.front() == '.') continue;
    auto dot = name.rfind('.');
    if (dot == std::string::npos || dot == 0) continue;
    std::string object = name.substr(0, dot);
    if (parse_version(name, object)) out.push_back(object);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::uint64_t LocalDirBackend::put(transports::StreamHandle* stream,
                                   const std::string& object, ByteView bytes) {
  validate_object_name(object);
  std::lock_guard lock(mu_);
  auto existing = versions(object);
  std::uint64_t version = existing.empty() ? 1 : existing.back() + 1;
  auto final_path = root_ / (object + "." + std::to_string(version));
  auto tmp_path = root_ / ("." + object + "." + std::to_string(version) + ".partial");

  auto fail_after = take_failure();
  {
    std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::kBackendFailure, "cannot write " + tmp_path.string());
    try {
      transfer(stream, bytes, fail_after, true);
    } catch (...) {
      // Simulated crash: whatever arrived is flushed to the temp file only.
      std::size_t partial = fail_after ? std::min(*fail_after, bytes.size()) : 0;
      out.write(reinterpret_cast<const char*>(bytes.data()), partial);
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp_path, ec);
      throw;
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    out.flush();
    if (!out) fail(Errc::kBackendFailure, "short write to " + tmp_path.string());
  }
  std::filesystem::rename(tmp_path, final_path);
  return version;
}

Bytes LocalDirBackend::get(transports::StreamHandle* stream, const std::string& object,
                           std::optional<std::uint64_t> version) {
  auto vs = versions(object);
  if (vs.empty()) fail(Errc::kNotFound, "no such object: " + object);
  std::uint64_t v = version.value_or(vs.back());
  if (!std::binary_search(vs.begin(), vs.end(), v)) {
    fail(Errc::kNotFound, "no such version: " + object + "." + std::to_string(v));
  }
  std::ifstream in(root_ / (object + "." + std::to_string(v)), std::ios::binary);
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  transfer(stream, data, std::nullopt, false);
  return data;
}

// MockCloud ----------------------------------------------------------------

MockCloudBackend::MockCloudBackend(std::string host_name, std::string provider)
    : host_(std::move(host_name)), provider_(std::move(provider)) {}

namespace {
Digest account_hash(const std::string& account, std::string_view password) {
  Bytes in = to_bytes(account);
  in.push_back(0);
  in.insert(in.end(), password.begin(), password.end());
  Digest d = blake2b(in, as_bytes("mockcloud account"));
  secure_zero(in);
  return d;
}
}  // namespace

std::string MockCloudBackend::location(const std::string& object) const {
  std::lock_guard lock(mu_);
  std::string account = session_ ? tokens_.at(*session_) : std::string();
  return provider_ + "://" + host_ + "/" + account + "/" + object;
}

void MockCloudBackend::create_account(const std::string& account, std::string_view password) {
  std::lock_guard lock(mu_);
  if (account.empty()) fail(Errc::kInvalidArgument, "empty account name");
  accounts_[account] = account_hash(account, password);
}

std::string MockCloudBackend::login(const std::string& account, std::string_view password) {
  std::lock_guard lock(mu_);
  auto it = accounts_.find(account);
  if (it == accounts_.end() || it->second != account_hash(account, password)) {
    fail(Errc::kNotAuthenticated, "login rejected");
  }
  std::array<std::uint8_t, 16> raw;
  random_bytes(raw);
  std::string token = to_hex(raw);
  tokens_[token] = account;
  session_ = token;
  return token;
}

void MockCloudBackend::logout() {
  std::lock_guard lock(mu_);
  if (session_) tokens_.erase(*session_);
  session_.reset();
}

bool MockCloudBackend::logged_in() const {
  std::lock_guard lock(mu_);
  return session_.has_value();
}

const std::string& MockCloudBackend::require_session() const {
  if (!session_) fail(Errc::kNotAuthenticated, "login required");
  return tokens_.at(*session_);
}

void MockCloudBackend::check_stream(transports::StreamHandle* stream) const {
  if (!stream || stream->dest_host() != host_) {
    fail(Errc::kInvalidArgument, "requests must arrive over a stream to " + host_);
  }
}

std::uint64_t MockCloudBackend::put(transports::StreamHandle* stream,
                                    const std::string& object, ByteView bytes) {
  validate_object_name(object);
  std::lock_guard lock(mu_);
  const std::string& account = require_session();
  check_stream(stream);
  log_.push_back({"put", object, stream->observed_source()});
  transfer(stream, bytes, take_failure(), true);
  auto& vs = store_[account][object];
  vs.emplace_back(bytes.begin(), bytes.end());
  return vs.size();
}

Bytes MockCloudBackend::get(transports::StreamHandle* stream, const std::string& object,
                            std::optional<std::uint64_t> version) {
  std::lock_guard lock(mu_);
  const std::string& account = require_session();
  check_stream(stream);
  log_.push_back({"get", object, stream->observed_source()});
  auto acct = store_.find(account);
  if (acct == store_.end() || !acct->second.contains(object)) {
    fail(Errc::kNotFound, "no such object: " + object);
  }
  const auto& vs = acct->second.at(object);
  std::uint64_t v = version.value_or(vs.size());
  if (v == 0 || v > vs.size()) {
    fail(Errc::kNotFound, "no such version: " + object + "." + std::to_string(v));
  }
  Bytes data = vs[v - 1];
  transfer(stream, data, std::nullopt, false);
  return data;
}

std::vector<std::uint64_t> MockCloudBackend::versions(const std::string& object) const {
  std::lock_guard lock(mu_);
  const std::string& account = require_session();
  std::vector<std::uint64_t> out;
  auto acct = store_.find(account);
  if (acct == store_.end()) return out;
  auto obj = acct->second.find(object);
  if (obj == acct->second.end()) return out;
  for (std::uint64_t v = 1; v <= obj->second.size(); ++v) out.push_back(v);
  return out;
}

std::vector<std::string> MockCloudBackend::objects() const {
  std::lock_guard lock(mu_);
  const std::string& account = require_session();
  std::vector<std::string> out;
  if (auto acct = store_.find(account); acct != store_.end()) {
    for (const auto& [name, _] : acct->second) out.push_back(name);
  }
  return out;
}

std::vector<BackendAccess> MockCloudBackend::access_log() const {
  std::lock_guard lock(mu_);
  return log_;
}

}  // namespace nymkit::snapstore
