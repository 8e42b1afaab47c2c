#pragma once

#include <cstddef>
#include <functional>
#include <iostream>
#include <stdexcept>
#include <string>

namespace ruleloop {

// Base for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Network-level failure after the retry budget is exhausted.
class TransportError : public Error {
public:
    TransportError(const std::string& what, int attempts)
        : Error(what), attempts_(attempts) {}
    int attempts() const noexcept { return attempts_; }

private:
    int attempts_;
};

// Backend answered, but the payload does not match the expected schema.
class ProtocolError : public Error {
public:
    using Error::Error;
};

// Prompt exceeded the backend's context window.
class ContextOverflowError : public Error {
public:
    ContextOverflowError(const std::string& what, std::size_t token_count)
        : Error(what), token_count_(token_count) {}
    std::size_t token_count() const noexcept { return token_count_; }

private:
    std::size_t token_count_;
};

// Caller handed in data that violates a documented precondition.
class InvalidInputError : public Error {
public:
    using Error::Error;
};

// Internal contract broken (dimension mismatch, partition misuse, ...).
class InternalError : public Error {
public:
    using Error::Error;
};

// Every student sample for one query failed.
class ExplorationError : public Error {
public:
    using Error::Error;
};

// Non-fatal diagnostics (degraded rewrites, dropped samples, skipped rules)
// are reported through a sink so library code never owns a log format.
using WarnSink = std::function<void(const std::string&)>;

inline WarnSink stderr_warn_sink() {
    return [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
}

inline WarnSink null_warn_sink() {
    return [](const std::string&) {};
}

}  // namespace ruleloop
