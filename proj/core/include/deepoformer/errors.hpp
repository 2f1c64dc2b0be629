#pragma once

#include <stdexcept>
#include <string>

namespace deepoformer {

// Base of every error the library throws. Derived kinds let callers map
// failures onto exit codes without string matching.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input files and configuration.
class SchemaError : public Error { using Error::Error; };
class ParseError : public Error { using Error::Error; };
class ValidationError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };

// Violated precondition of a feature formula.
class DomainError : public Error { using Error::Error; };

class ArgumentError : public Error { using Error::Error; };
class ShapeError : public ArgumentError { using ArgumentError::ArgumentError; };

// NaN/Inf produced by an operation.
class NumericError : public Error { using Error::Error; };

// Misuse of the gradient tape (e.g. a second backward pass).
class TapeError : public Error { using Error::Error; };

class IoError : public Error { using Error::Error; };

// True for errors caused by bad user input rather than runtime failure.
inline bool is_input_error(const std::exception& e) noexcept {
    return dynamic_cast<const SchemaError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
           dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const ConfigError*>(&e) ||
           dynamic_cast<const DomainError*>(&e) || dynamic_cast<const ArgumentError*>(&e);
}

}  // namespace deepoformer
