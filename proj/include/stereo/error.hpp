#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace stereo {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Errors caused by bad user input (files, formats, values). The CLI maps these
// to exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

class IoError : public InputError {
 public:
  IoError(const std::string& path, const std::string& reason)
      : InputError(path + ": " + reason), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class FormatError : public InputError {
 public:
  FormatError(const std::string& path, const std::string& reason)
      : InputError(path + ": " + reason), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class ValidationError : public InputError {
 public:
  using InputError::InputError;
};

class ShapeError : public InputError {
 public:
  using InputError::InputError;
};

// Geometry estimation failures (rectification).
class EstimationError : public Error {
 public:
  using Error::Error;
};

class DegenerateGeometryError : public EstimationError {
 public:
  using EstimationError::EstimationError;
};

class CropError : public EstimationError {
 public:
  using EstimationError::EstimationError;
};

// Wraps a failure with the pipeline stage (and optional window/tile context)
// where it happened.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what, bool input_fault = false)
      : Error(stage + ": " + what), stage_(std::move(stage)), input_fault_(input_fault) {}
  const std::string& stage() const noexcept { return stage_; }
  // True when the underlying cause was an InputError.
  bool input_fault() const noexcept { return input_fault_; }

 private:
  std::string stage_;
  bool input_fault_ = false;
};

}  // namespace stereo
