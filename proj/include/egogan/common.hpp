#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace egogan {

// Exit codes used by the CLI; library code throws the matching exception type.
//   0 success, 2 config error, 3 I/O error, 4 numeric failure.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SchemaError : ConfigError {
    using ConfigError::ConfigError;
};

using i64 = std::int64_t;
using u64 = std::uint64_t;
using u32 = std::uint32_t;
using u8 = std::uint8_t;

} // namespace egogan
