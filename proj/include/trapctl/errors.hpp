#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace trapctl {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// An argument lies outside the domain where a formula is defined.
class DomainError : public Error {
public:
  using Error::Error;
};

/// Design parameters cannot realize the requested protocol.
///
/// `bound()` holds the violated inequality in symbolic form together with
/// the numeric threshold, e.g. "omega_k >= omega0/b_F = 0.7071".
class FeasibilityError : public Error {
public:
  explicit FeasibilityError(std::string bound)
      : Error("infeasible parameters: requires " + bound), bound_(std::move(bound)) {}

  const std::string& bound() const noexcept { return bound_; }

private:
  std::string bound_;
};

/// The scaling factor reached (or started at) a non-positive value or the floor.
class SingularStateError : public Error {
public:
  SingularStateError(const std::string& what, double time)
      : Error(what + " at t=" + std::to_string(time)), time_(time) {}

  double time() const noexcept { return time_; }

private:
  double time_;
};

/// Integration produced inf/nan, typically after long inverted-trap stretches.
class NumericOverflowError : public Error {
public:
  NumericOverflowError(const std::string& what, double time, std::size_t sample = npos)
      : Error(what + " at t=" + std::to_string(time) +
              (sample == npos ? std::string() : " (sample " + std::to_string(sample) + ")")),
        time_(time), sample_(sample) {}

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  double time() const noexcept { return time_; }
  std::size_t sample() const noexcept { return sample_; }

private:
  double time_;
  std::size_t sample_;
};

/// A covariance matrix lost positive definiteness.
class DegeneracyError : public Error {
public:
  using Error::Error;
};

/// Operation requires a schedule made of constant segments only.
class UnsupportedScheduleError : public Error {
public:
  using Error::Error;
};

/// Malformed protocol file, report or command-line configuration.
class ParseError : public Error {
public:
  using Error::Error;
};

}  // namespace trapctl
