#include "vigxray/error.hpp"

namespace vigxray {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Io: return "io error";
        case ErrorKind::UnsupportedFormat: return "unsupported format";
        case ErrorKind::CorruptStream: return "corrupt stream";
        case ErrorKind::VersionMismatch: return "version mismatch";
        case ErrorKind::ShapeMismatch: return "shape mismatch";
        case ErrorKind::InvariantViolation: return "invariant violation";
        case ErrorKind::InvalidArgument: return "invalid argument";
    }
    return "error";
}

}  // namespace vigxray
