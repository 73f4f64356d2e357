#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "nymkit/common/bytes.h"
#include "nymkit/common/digest.h"
#include "nymkit/transports/transport.h"

namespace nymkit::snapstore {

enum class BackendKind { kLocalDir, kMockCloud };

// What a backend saw of one request.
struct BackendAccess {
  std::string verb;  // "put" or "get"
  std::string object;
  std::string observed_source;
};

// Versioned, immutable object store. Versions start at 1 and increase per
// object. Writes to one object name are serialized; reads may run
// concurrently with writes.
class StorageBackend {
 public:
  virtual ~StorageBackend() = default;

  virtual BackendKind kind() const = 0;
  // Internet host that streams must be connected to, or nullopt for storage
  // attached to the machine itself.
  virtual std::optional<std::string> host() const = 0;
  // Stable locator for an object, used to seed entry-guard selection.
  virtual std::string location(const std::string& object) const = 0;

  // `stream` must be connected to host() when host() is set.
  virtual std::uint64_t put(transports::StreamHandle* stream,
                            const std::string& object, ByteView bytes) = 0;
  // Latest version when `version` is unset. Throws kNotFound.
  virtual Bytes get(transports::StreamHandle* stream, const std::string& object,
                    std::optional<std::uint64_t> version = std::nullopt) = 0;
  virtual std::vector<std::uint64_t> versions(const std::string& object) const = 0;
  virtual std::vector<std::string> objects() const = 0;

  // The next put fails with kBackendFailure after `bytes` bytes have been
  // transferred. The partial upload never becomes visible.
  void inject_put_failure(std::size_t bytes) { fail_after_ = bytes; }

 protected:
  std::optional<std::size_t> take_failure() {
    auto f = fail_after_;
    fail_after_.reset();
    return f;
  }

 private:
  std::optional<std::size_t> fail_after_;
};

// Object names are restricted to [A-Za-z0-9._-]+ and may not start with '.'.
void validate_object_name(const std::string& object);

// One file per version, named <object>.<version>. Files are written to a
// hidden temporary name and renamed into place.
class LocalDirBackend : public StorageBackend {
 public:
  explicit LocalDirBackend(std::filesystem::path root);

  BackendKind kind() const override { return BackendKind::kLocalDir; }
  std::optional<std::string> host() const override { return std::nullopt; }
  std::string location(const std::string& object) const override;

  std::uint64_t put(transports::StreamHandle* stream, const std::string& object,
                    ByteView bytes) override;
  Bytes get(transports::StreamHandle* stream, const std::string& object,
            std::optional<std::uint64_t> version = std::nullopt) override;
  std::vector<std::uint64_t> versions(const std::string& object) const override;
  std::vector<std::string> objects() const override;

  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
  mutable std::mutex mu_;
};

// In-memory stand-in for a cloud storage provider. Requests need a session
// token from login() and must arrive over a stream connected to the
// provider's host; the provider logs the source address it observes.
class MockCloudBackend : public StorageBackend {
 public:
  MockCloudBackend(std::string host_name, std::string provider = "mockcloud");

  BackendKind kind() const override { return BackendKind::kMockCloud; }
  std::optional<std::string> host() const override { return host_; }
  std::string location(const std::string& object) const override;

  void create_account(const std::string& account, std::string_view password);
  // Returns a session token and makes it current. Throws kNotAuthenticated.
  std::string login(const std::string& account, std::string_view password);
  void logout();
  bool logged_in() const;

  std::uint64_t put(transports::StreamHandle* stream, const std::string& object,
                    ByteView bytes) override;
  Bytes get(transports::StreamHandle* stream, const std::string& object,
            std::optional<std::uint64_t> version = std::nullopt) override;
  std::vector<std::uint64_t> versions(const std::string& object) const override;
  std::vector<std::string> objects() const override;

  std::vector<BackendAccess> access_log() const;

 private:
  const std::string& require_session() const;
  void check_stream(transports::StreamHandle* stream) const;

  std::string host_;
  std::string provider_;
  mutable std::mutex mu_;
  std::map<std::string, Digest> accounts_;  // account -> salted password hash
  std::map<std::string, std::string> tokens_;  // token -> account
  std::optional<std::string> session_;
  // account -> object -> versions
  std::map<std::string, std::map<std::string, std::vector<Bytes>>> store_;
  std::vector<BackendAccess> log_;
};

}  // namespace nymkit::snapstore
