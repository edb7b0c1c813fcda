#pragma once

#include <stdexcept>
#include <string>

namespace gda4rec {

// Exit codes used by the command-line driver.
enum class ExitCode : int {
    ok = 0,
    config = 2,
    data = 3,
    divergence = 4,
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised by the parser with the 1-based line number of the offending line.
class ParseError : public DataError {
public:
    ParseError(std::size_t line, const std::string& what)
        : DataError("line " + std::to_string(line) + ": " + what), line_(line), reason_(what) {}

    std::size_t line() const { return line_; }
    const std::string& reason() const { return reason_; }

private:
    std::size_t line_;
    std::string reason_;
};

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Non-finite values in a forward pass, a loss term or a gradient.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace gda4rec
