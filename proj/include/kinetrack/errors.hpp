#pragma once

#include <stdexcept>
#include <string>

namespace kinetrack {

// Malformed or out-of-contract input data (CSV rows, bounds, schema).
class DataError : public std::runtime_error {
public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure inside an algorithm (singular innovation covariance,
// non-finite objective, failed decomposition). Messages name the module
// and step where the failure occurred.
class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace kinetrack
