#pragma once

#include <stdexcept>
#include <string>

namespace paracycle {

// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// File not readable/writable, rename failed, and similar.
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// Persisted data that cannot be parsed (carries a line number when known).
struct FormatError : Error {
    explicit FormatError(const std::string& msg, long line = -1)
        : Error(line >= 0 ? msg + " (line " + std::to_string(line) + ")" : msg), line_number(line) {}
    long line_number;
};

// A chain or config that violates its invariants.
struct ValidationError : Error {
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// Bad arguments to a computation (dimension mismatch, empty input, ...).
struct DomainError : Error {
    explicit DomainError(const std::string& msg) : Error(msg) {}
};

// A backend request that failed after its bounded retries.
struct BackendError : Error {
    explicit BackendError(const std::string& msg) : Error(msg) {}
};

// The backend exists but cannot perform the requested operation.
struct CapabilityError : BackendError {
    explicit CapabilityError(const std::string& msg) : BackendError(msg) {}
};

}  // namespace paracycle
