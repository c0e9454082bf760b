#pragma once
// Error taxonomy shared by every module. All failures surface as typed
// exceptions; validation that is an expected outcome (validate_report)
// returns a value instead.

#include <stdexcept>
#include <string>

namespace fides {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Caller violated a documented precondition.
class PreconditionError : public Error {
public:
    using Error::Error;
};

// A cross-module contract was violated (foreign fact key, out-of-range metric input).
class ContractError : public Error {
public:
    using Error::Error;
};

// Text that should have had a known structure could not be parsed.
class ParseError : public Error {
public:
    explicit ParseError(const std::string& what, size_t line = 0) : Error(what), line_number(line) {}
    size_t line_number;  // 1-based; 0 when not tied to a file line
};

// A required field was missing or had the wrong type in an input file.
class SchemaError : public Error {
public:
    explicit SchemaError(const std::string& what, size_t line = 0) : Error(what), line_number(line) {}
    size_t line_number;
};

enum class BackendErrorKind {
    Transport,       // connection failure, non-quota HTTP error after retries
    Quota,           // rate/quota exhausted (HTTP 429); harness should back off
    Protocol,        // remote answered but the response violates the wire contract
    MissingFixture,  // mock backend had no entry for the requested key
};

inline const char* to_string(BackendErrorKind k) {
    switch (k) {
        case BackendErrorKind::Transport: return "transport";
        case BackendErrorKind::Quota: return "quota";
        case BackendErrorKind::Protocol: return "protocol";
        case BackendErrorKind::MissingFixture: return "missing_fixture";
    }
    return "unknown";
}

class BackendError : public Error {
public:
    BackendError(BackendErrorKind k, const std::string& what)
        : Error(std::string("[") + to_string(k) + "] " + what), kind(k) {}
    BackendErrorKind kind;
};

// Stage-level failures inside the pipeline.
class GenerationError : public Error {
public:
    using Error::Error;
};
class SegmentationError : public Error {
public:
    using Error::Error;
};
class DecompositionError : public Error {
public:
    using Error::Error;
};
class EditError : public Error {
public:
    using Error::Error;
};
class PageError : public Error {
public:
    using Error::Error;
};
class IoError : public Error {
public:
    using Error::Error;
};
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace fides
