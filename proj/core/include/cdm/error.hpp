#pragma once

#include <stdexcept>
#include <string>

namespace cdm {

// Violated precondition on a public operation (bad time, bad step count, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Shape mismatch inside a tensor program. The message names the op.
class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Non-finite values or divergence while optimizing.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite state while integrating a sampler.
class SamplingError : public std::runtime_error {
 public:
  SamplingError(const std::string& what, int step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed text input; carries the source path and 1-based line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& path, int line, const std::string& msg)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + msg), path_(path), line_(line) {}
  const std::string& path() const noexcept { return path_; }
  int line() const noexcept { return line_; }

 private:
  std::string path_;
  int line_;
};

}  // namespace cdm
