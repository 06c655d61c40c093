#pragma once

#include <stdexcept>
#include <string>

namespace msica {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent dataset, manifest or payload.
class DatasetError : public Error {
 public:
  using Error::Error;
};

// Invalid solver configuration or unknown config key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Singular unmixing matrix, failed factorization, non-finite loss.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace msica
