#pragma once

#include <stdexcept>
#include <string>

namespace bridgerag {

// Every failure carries a machine-checkable kind; callers never have to
// string-match messages to tell a timeout from a bad status code.
enum class ErrorKind {
    config,
    io,
    parse,
    validation,
    zero_vector,
    dimension_mismatch,
    duplicate_id,
    transport,
    timeout,
    http_status,
    empty_completion,
    budget,
    protocol,
    version_mismatch,
    insufficient_data,
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
        case ErrorKind::config: return "config";
        case ErrorKind::io: return "io";
        case ErrorKind::parse: return "parse";
        case ErrorKind::validation: return "validation";
        case ErrorKind::zero_vector: return "zero_vector";
        case ErrorKind::dimension_mismatch: return "dimension_mismatch";
        case ErrorKind::duplicate_id: return "duplicate_id";
        case ErrorKind::transport: return "transport";
        case ErrorKind::timeout: return "timeout";
        case ErrorKind::http_status: return "http_status";
        case ErrorKind::empty_completion: return "empty_completion";
        case ErrorKind::budget: return "budget";
        case ErrorKind::protocol: return "protocol";
        case ErrorKind::version_mismatch: return "version_mismatch";
        case ErrorKind::insufficient_data: return "insufficient_data";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg, int attempts = 0)
        : std::runtime_error(std::string(to_string(kind)) + ": " + msg),
          kind_(kind),
          attempts_(attempts) {}

    ErrorKind kind() const noexcept { return kind_; }

    /// Number of attempts made before giving up (transport errors only).
    int attempts() const noexcept { return attempts_; }

private:
    ErrorKind kind_;
    int attempts_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& msg, int attempts = 0) {
    throw Error(kind, msg, attempts);
}

} // namespace bridgerag
