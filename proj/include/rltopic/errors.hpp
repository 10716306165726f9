#pragma once

#include <stdexcept>
#include <string>

namespace rltopic {

// Malformed input files, inconsistent data (CLI exit code 2).
class FormatError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// NaN/Inf produced during computation (CLI exit code 3).
class NumericalError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration or shape contract violations (CLI exit code 1).
class ConfigError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace rltopic
