#pragma once

#include <stdexcept>
#include <string>

namespace lsc {

// Coarse failure categories. They serve two audiences: tests that want to
// distinguish a bad argument from bad data, and the command-line frontend
// which maps categories onto process exit codes.
enum class ErrorKind {
    Argument,   // caller passed something malformed (shape mismatch, k > n, ...)
    Contract,   // an internal invariant was violated; indicates a bug
    Config,     // unusable run configuration
    Data,       // unreadable / inconsistent input files
    Format,     // serialized artifact is corrupt or has the wrong version
    Numerical,  // NaN, divergence, or an ill-conditioned problem
    Degenerate, // geometry without enough rank to solve (collinear points, ...)
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
    throw Error(kind, msg);
}

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
    if (!cond) fail(kind, msg);
}

} // namespace lsc
