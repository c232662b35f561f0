#pragma once

#include <stdexcept>
#include <string>

namespace costly_obs {

// Bad configuration: invalid flag combinations, missing imputer, broken invariants.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Misuse of a stateful session, e.g. stepping a finished episode.
struct ProtocolError : std::runtime_error {
    explicit ProtocolError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed file content. Carries the 1-based line number.
struct ParseError : std::runtime_error {
    long line;
    ParseError(const std::string& msg, long line_no)
        : std::runtime_error(msg + " (line " + std::to_string(line_no) + ")"), line(line_no) {}
};

// Empty or unusable data (e.g. a dataset with no rows, single-class labels).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/vector dimension mismatch.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace costly_obs
