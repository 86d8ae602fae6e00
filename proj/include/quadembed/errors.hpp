#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qde {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

// Non-finite value produced by an evaluation (as opposed to a time integration).
class OverflowError : public Error {
 public:
  using Error::Error;
};

// Raised when a time integration produces a non-finite or exploding state.
// `stage` is the RK4 stage (1-4) or -1 when unknown; `step` the step index or -1.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int stage, long step = -1)
      : Error(what), stage_(stage), step_(step) {}

  int stage() const noexcept { return stage_; }
  long step() const noexcept { return step_; }

 private:
  int stage_;
  long step_;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

class RankError : public Error {
 public:
  using Error::Error;
};

class ConditioningError : public Error {
 public:
  using Error::Error;
};

class GradientError : public Error {
 public:
  using Error::Error;
};

class OptimizerError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, long epoch, long step)
      : Error(what), epoch_(epoch), step_(step) {}

  long epoch() const noexcept { return epoch_; }
  long step() const noexcept { return step_; }

 private:
  long epoch_;
  long step_;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace qde
