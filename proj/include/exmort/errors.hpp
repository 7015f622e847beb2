#pragma once

#include <stdexcept>
#include <string>

namespace exmort {

/// Invalid or inconsistent run configuration. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed, incomplete or stale input data and artifacts. Exit code 3.
class DataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Divergent fits, non-finite likelihoods, failed factorizations. Exit code 4.
class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

} // namespace exmort
