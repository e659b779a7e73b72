#pragma once

#include <stdexcept>
#include <string>

namespace odn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or extent mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Value outside an operation's mathematical domain (log of non-positive,
// non-finite results, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

class InterpolationError : public Error {
 public:
  using Error::Error;
};

// Nonlinear/physics solver failed to converge or to bracket a root.
class SolverError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

class LossError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed, truncated or corrupted files.
class FormatError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

// Optimisation hit a non-finite loss or gradient.
class TrainingAbort : public Error {
 public:
  using Error::Error;
};

}  // namespace odn
