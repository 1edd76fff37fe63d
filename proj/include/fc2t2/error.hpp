#pragma once

#include <stdexcept>
#include <string>

namespace fc2t2 {

// Bad engine or run configuration (unsupported order, family, flag value).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Caller-supplied data is unusable (out-of-domain points, bad vectors).
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// An internal precondition between pipeline stages was violated.
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

// Training produced a non-finite loss or gradient.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A file could not be decoded. Carries the 1-based line when known.
struct ParseError : std::runtime_error {
    ParseError(const std::string& what, long line = 0)
        : std::runtime_error(line > 0 ? what + " (line " + std::to_string(line) + ")" : what),
          line_(line) {}
    long line() const { return line_; }

private:
    long line_;
};

} // namespace fc2t2
