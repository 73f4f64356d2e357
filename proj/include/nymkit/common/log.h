#pragma once

#include <memory>

#include <spdlog/spdlog.h>

namespace nymkit {

// Shared "nymkit" logger, writing to stderr. The level comes from NYMKIT_LOG
// (trace, debug, info, warn, error, off) and defaults to warn.
std::shared_ptr<spdlog::logger> logger();

// Replaces the logger's sinks, e.g. to capture output in tests.
void set_log_sink(std::shared_ptr<spdlog::sinks::sink> sink);

}  // namespace nymkit
