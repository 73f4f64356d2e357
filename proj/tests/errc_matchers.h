#pragma once

#include <gtest/gtest.h>

#include <functional>
#include <optional>

#include "nymkit/common/error.h"

namespace nymkit::testing {

// Code of the nymkit::Error thrown by `fn`, or nullopt if it returned.
inline std::optional<Errc> thrown_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

}  // namespace nymkit::testing

#define EXPECT_ERRC(stmt, code) \
  EXPECT_EQ(::nymkit::testing::thrown_code([&] { stmt; }), std::optional(code))
