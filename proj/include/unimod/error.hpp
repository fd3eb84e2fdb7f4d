#pragma once

#include <stdexcept>
#include <string>

namespace unimod {

/// Broad failure categories. The C API maps each one onto a status code.
enum class ErrorKind {
    InvalidArgument,
    Parse,
    Validation,
    UnsupportedGenus,
    Chart,
    RelationMismatch,
    Solver,
    DenseCap,
    Io,
    Config,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Thrown by load functions; carries the 1-based line number of the offending line.
class ParseError : public Error {
public:
    ParseError(int line, const std::string& what)
        : Error(ErrorKind::Parse, "line " + std::to_string(line) + ": " + what), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

}  // namespace unimod
