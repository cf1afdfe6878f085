#pragma once

#include <stdexcept>
#include <string>

namespace tiervc {

// All recoverable failures are reported as one of these kinds; the CLI maps
// the kind to its process exit code.
enum class ErrorKind {
    usage   = 2, // bad command line
    config  = 3, // invalid or inconsistent configuration / file contents
    io      = 4, // missing, unreadable or malformed file
    numeric = 5, // NaN/Inf or divergence detected at runtime
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }
    int exit_code() const { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

inline void check(bool ok, ErrorKind kind, const std::string& msg) {
    if (!ok) throw Error(kind, msg);
}

} // namespace tiervc
