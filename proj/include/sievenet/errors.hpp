#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sievenet {

/// Shape mismatch between an input and what an operation expects.
/// Carries both sizes so callers can report exactly what went wrong.
class DimensionError : public std::invalid_argument {
public:
    DimensionError(const std::string& context, std::size_t expected, std::size_t received)
        : std::invalid_argument(context + ": expected dimension " + std::to_string(expected) +
                                ", received " + std::to_string(received)),
          expected(expected),
          received(received) {}

    std::size_t expected;
    std::size_t received;
};

/// Invalid argument values (wrong activation, non-finite entries, bad config fields).
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// File-system failure with the offending path attached.
class IoError : public std::runtime_error {
public:
    IoError(const std::string& what, const std::string& path)
        : std::runtime_error(what + ": " + path), path(path) {}

    std::string path;
};

}  // namespace sievenet
