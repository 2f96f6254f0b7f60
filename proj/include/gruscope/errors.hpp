#pragma once

#include <stdexcept>
#include <string>

namespace gruscope {

// Malformed or inconsistent input data (files, ids, vocabularies).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure: degenerate vectors, singular systems, divergence,
// non-convergence.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes disagree. Always a caller bug.
class ShapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace gruscope
