#pragma once

#include <stdexcept>
#include <string>

namespace stressmon {

/// Broad classes of failure. The CLI maps these onto exit codes and the
/// HTTP layer onto status codes, so keep the list short.
enum class ErrorKind {
    InvalidArgument,   // caller supplied out-of-contract parameters
    InsufficientData,  // not enough beats / rows / span to compute something
    Validation,        // malformed input document or window
    Protocol,          // operation called in the wrong engine/service state
    NotFound,
    Conflict,          // duplicates, double labels
    Expired,
    Corrupt,           // unreadable snapshot / log
    Incompatible,      // snapshot from a newer format version
    Io,
    Unavailable,       // remote service unreachable
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
    case ErrorKind::InvalidArgument: return "invalid_argument";
    case ErrorKind::InsufficientData: return "insufficient_data";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Protocol: return "protocol";
    case ErrorKind::NotFound: return "not_found";
    case ErrorKind::Conflict: return "conflict";
    case ErrorKind::Expired: return "expired";
    case ErrorKind::Corrupt: return "corrupt";
    case ErrorKind::Incompatible: return "incompatible";
    case ErrorKind::Io: return "io";
    case ErrorKind::Unavailable: return "unavailable";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string code, const std::string& message)
        : std::runtime_error(message), kind_(kind), code_(std::move(code)) {}

    ErrorKind kind() const noexcept { return kind_; }
    /// Stable machine-readable identifier, e.g. "prompt_expired".
    const std::string& code() const noexcept { return code_; }

private:
    ErrorKind kind_;
    std::string code_;
};

[[noreturn]] inline void fail(ErrorKind kind, std::string code, const std::string& message) {
    throw Error(kind, std::move(code), message);
}

} // namespace stressmon
