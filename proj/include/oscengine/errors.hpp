#pragma once

#include <stdexcept>
#include <string>

namespace oscengine {

/// Level or flat index outside the truncated basis.
struct IndexError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

/// Argument outside the mathematical domain of a special function or kernel.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Operation called with an incompatible object (wrong geometry, mismatched dimensions).
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Rejected configuration. `field()` names the offending key.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& constraint)
      : std::invalid_argument(field + ": " + constraint), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Floating-point failure: eigensolver breakdown, degenerate distribution.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace oscengine
