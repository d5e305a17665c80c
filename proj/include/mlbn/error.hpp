#pragma once

#include <stdexcept>
#include <string>

namespace mlbn {

// Dimension or level mismatch between networks, inputs or datasets.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Argument outside the mathematical domain (non-finite input, bad index...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A fine/coarse pair that does not share its coarse block.
class CouplingError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Weighted particle system collapsed. `level()` is -1 when not tied to a level.
class DegeneracyError : public std::runtime_error {
 public:
  explicit DegeneracyError(const std::string& what, int level = -1)
      : std::runtime_error(level >= 0 ? what + " (level " + std::to_string(level) + ")" : what),
        level_(level) {}

  int level() const noexcept { return level_; }

 private:
  int level_;
};

}  // namespace mlbn
