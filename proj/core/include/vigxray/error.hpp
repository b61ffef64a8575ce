#pragma once

#include <stdexcept>
#include <string>

namespace vigxray {

// Failure categories. Readers of container formats report version mismatch,
// truncation and structural problems as distinct kinds so callers (and the
// CLI exit-code mapping) can tell them apart.
enum class ErrorKind {
    Io,                  // unreadable/unwritable file, short read on open
    UnsupportedFormat,   // recognizable file but a variant we do not decode
    CorruptStream,       // malformed payload inside a recognized format
    VersionMismatch,     // container version we do not understand
    ShapeMismatch,       // tensor/graph dimensions inconsistent with config
    InvariantViolation,  // loaded data violates a structural invariant
    InvalidArgument,     // bad parameter from the caller
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

  private:
    ErrorKind kind_;
};

}  // namespace vigxray
