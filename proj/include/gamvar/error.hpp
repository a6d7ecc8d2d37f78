#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gamvar {

/// Input that violates a documented precondition or type invariant.
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when exhaustive enumeration would exceed the configured cap.
class SupportTooLarge : public std::runtime_error {
 public:
  SupportTooLarge(std::string count, std::size_t cap)
      : std::runtime_error("support has " + count +
                           " partitions, above the cap of " +
                           std::to_string(cap)),
        count_(std::move(count)),
        cap_(cap) {}

  const std::string& count() const noexcept { return count_; }
  std::size_t cap() const noexcept { return cap_; }

 private:
  std::string count_;
  std::size_t cap_;
};

/// A (unit, unit, arm, arm) position, zero-based.
struct PairWitness {
  std::size_t unit = 0;
  std::size_t other_unit = 0;
  std::size_t arm = 0;
  std::size_t other_arm = 0;
};

/// The variance estimator needs a co-assignment probability that is zero.
class SapViolation : public std::runtime_error {
 public:
  SapViolation(const std::string& what, PairWitness witness)
      : std::runtime_error(what), witness_(witness) {}

  const PairWitness& witness() const noexcept { return witness_; }

 private:
  PairWitness witness_;
};

/// Malformed configuration or input file.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gamvar
