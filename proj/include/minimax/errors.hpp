#pragma once

#include <stdexcept>
#include <string>

namespace minimax {

// Invalid model/loss configuration (channel mismatch, bad kernel geometry).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input that violates a shape or resolution contract.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Generic precondition violation (shape mismatch between paired tensors, empty arrays).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A metric that is undefined for the given labels (e.g. single-class AUROC).
class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by the trainer when the loss becomes non-finite.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, long step)
      : std::runtime_error(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

}  // namespace minimax
