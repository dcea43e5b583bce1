/*
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <stdexcept>
#include <string>

namespace insloc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents do not satisfy an operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A 2x2 pooling stage received an odd spatial extent.
class EvenSizeViolation : public ShapeError {
 public:
  EvenSizeViolation(const std::string& extent_name, std::size_t value)
      : ShapeError("EvenSizeViolation: " + extent_name + " = " + std::to_string(value) +
                   " must be even for 2x2 max pooling"),
        extent_name_(extent_name),
        value_(value) {}

  const std::string& extent_name() const noexcept { return extent_name_; }
  std::size_t value() const noexcept { return value_; }

 private:
  std::string extent_name_;
  std::size_t value_;
};

/// Malformed or inconsistent configuration input.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed file (checkpoint, manifest, PNG, ...).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Training diverged or was asked to run on unusable data.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace insloc
