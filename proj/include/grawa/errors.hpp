#pragma once

#include <stdexcept>
#include <string>

namespace grawa {

// Error families map one-to-one onto the CLI exit codes (config = 2,
// numeric = 3); domain and signature errors are reported as config errors.

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class SignatureError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace grawa
