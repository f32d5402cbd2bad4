#pragma once

#include <stdexcept>
#include <string>

namespace lab {

// Base error for all failures in this library. `code` is a short
// machine-parsable tag; the CLI prints it as "error[<code>]: <what>".
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& what)
        : std::runtime_error(what), code_(std::move(code)) {}

    const std::string& code() const { return code_; }

private:
    std::string code_;
};

class ConstructionError : public Error {
public:
    ConstructionError(const std::string& what) : Error("construction", what) {}
};

class WindowExhausted : public Error {
public:
    WindowExhausted(const std::string& what, double required)
        : Error("window-exhausted", what), required_(required) {}

    // Window width (in flow time) that would have been needed.
    double required_window() const { return required_; }

private:
    double required_;
};

class PreconditionError : public Error {
public:
    PreconditionError(const std::string& what) : Error("precondition", what) {}
};

class UsageError : public Error {
public:
    UsageError(const std::string& what) : Error("usage", what) {}
};

}  // namespace lab
