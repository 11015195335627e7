#pragma once

#include <stdexcept>
#include <string>

namespace fhgan {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes do not agree with what an operation or network expects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid argument, configuration value or specification.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Dataset, manifest or image I/O problem.
class DataError : public Error {
 public:
  using Error::Error;
};

// Checkpoint is unreadable, corrupted or has an incompatible version.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or gradient encountered during optimization.
class TrainingFault : public Error {
 public:
  using Error::Error;
};

}  // namespace fhgan
