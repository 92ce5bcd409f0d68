// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace semalign {

/// Root of every error thrown by the library. The CLI maps subclasses onto
/// stable process exit codes (see cli/commands.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent configuration (unknown keys, out-of-range values).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A call received arguments outside its contract (shape mismatch, bad id).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Numerically degenerate input such as a zero-norm vector or a non-finite logit.
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or gradient during optimization.
class TrainingDivergence : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint is unreadable, corrupted, or does not match the model config.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// On-disk dataset does not match what the run config expects.
class StaleDataset : public Error {
 public:
  using Error::Error;
};

}  // namespace semalign
