#include "nymkit/common/log.h"

#include <spdlog/sinks/stdout_sinks.h>

#include <cstdlib>
#include <mutex>

namespace nymkit {

std::shared_ptr<spdlog::logger> logger() {
  static std::once_flag once;
  static std::shared_ptr<spdlog::logger> log;
  std::call_once(once, [] {
    log = std::make_shared<spdlog::logger>(
        "nymkit", std::make_shared<spdlog::sinks::stderr_sink_mt>());
    const char* level = std::getenv("NYMKIT_LOG");
    log->set_level(level ? spdlog::level::from_str(level) : spdlog::level::warn);
  });
  return log;
}

void set_log_sink(std::shared_ptr<spdlog::sinks::sink> sink) {
  auto log = logger();
  log->sinks().clear();
  log->sinks().push_back(std::move(sink));
}

}  // namespace nymkit
