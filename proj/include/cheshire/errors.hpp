#pragma once

#include <stdexcept>
#include <string>

namespace cheshire {

// Invalid configuration, flags, or input files. CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed event logs or model data (bad user index, unordered times).
class DataError : public ConfigError {
public:
    explicit DataError(const std::string& what) : ConfigError(what) {}
};

// An observed event happened where the model puts zero intensity, so the
// likelihood is -infinity.
class InfeasibleModelError : public DataError {
public:
    explicit InfeasibleModelError(const std::string& what) : DataError(what) {}
};

// Numerical failure: Riccati blow-up, calibration bracket exhaustion. CLI exit code 3.
class SolverError : public std::runtime_error {
public:
    explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace cheshire
