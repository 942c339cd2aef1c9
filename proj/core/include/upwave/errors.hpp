#pragma once

#include <stdexcept>
#include <string>

namespace upwave {

/// Thrown for all recoverable failures: malformed input, gates that do not
/// pass, or signals that cannot be processed. The message is meant to be
/// shown to the operator as-is.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace upwave
