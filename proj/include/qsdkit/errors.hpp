#pragma once

#include <stdexcept>
#include <string>

namespace qsdkit {

/// Base of every exception thrown by qsdkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A parameter lies outside the domain of the operation (e.g. epsilon not in (0,1)).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A caller broke a precondition: mismatched dimensions, empty input, etc.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// The chain cannot be simulated or transformed (zero exit rate, all-zero rates).
class DegenerateChainError : public Error {
 public:
  using Error::Error;
};

/// An iterative numerical method did not converge within its budget.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// A single tour exceeded the configured step cap before absorption.
class RunawayTourError : public Error {
 public:
  using Error::Error;
};

/// Floating-point drift beyond what roundoff can explain.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace qsdkit
