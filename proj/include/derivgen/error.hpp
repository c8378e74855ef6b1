#pragma once

#include <stdexcept>
#include <string>

namespace derivgen {

// Malformed or inconsistent input data (files, splits, vocabularies).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A model artifact could not be read, written or used as requested.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid hyperparameters or option combinations.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace derivgen
