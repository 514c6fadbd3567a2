#pragma once

#include <stdexcept>
#include <string>

namespace nrr {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand dimensions do not conform.
class ShapeError : public Error { public: using Error::Error; };

/// An operation was invoked out of order (e.g. backward before forward).
class StateError : public Error { public: using Error::Error; };

/// NaN or infinity where finite values are required.
class NumericError : public Error { public: using Error::Error; };

/// Invalid configuration or dataset spec.
class ConfigError : public Error { public: using Error::Error; };

/// Bad input value (probability vector, sample, index).
class ValidationError : public Error { public: using Error::Error; };

/// Token absent from the vocabulary.
class VocabError : public Error { public: using Error::Error; };

/// Episode or interpretation set has the wrong structure.
class StructureError : public Error { public: using Error::Error; };

/// Lookup of an absent key.
class NotFoundError : public Error { public: using Error::Error; };

/// Zero vector where a direction is needed.
class DegenerateInputError : public Error { public: using Error::Error; };

/// Malformed serialized input. Carries the 1-based line when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace nrr
