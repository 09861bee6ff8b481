#pragma once

#include <stdexcept>
#include <string>

namespace reclaim {

// Error hierarchy shared by the library and the CLI. exit_code() maps onto
// the CLI contract: 2 config, 3 data, 4 dependency.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
    virtual int exit_code() const { return 1; }
};

class ConfigError : public Error {
public:
    using Error::Error;
    int exit_code() const override { return 2; }
};

// Malformed files, invariant violations, shape mismatches, degenerate inputs.
class DataError : public Error {
public:
    using Error::Error;
    int exit_code() const override { return 3; }
};

// Missing parent artifacts (run3 before run1, etc.).
class DependencyError : public Error {
public:
    using Error::Error;
    int exit_code() const override { return 4; }
};

// Network and provider failures from the translation client.
class TransportError : public DataError {
public:
    using DataError::DataError;
};

}  // namespace reclaim
