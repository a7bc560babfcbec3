#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>

namespace dbpi {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Vector parameter that takes part in no deduction, so Eigen expressions convert.
template <typename Scalar>
using VectorArg = std::type_identity_t<Vector<Scalar>>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using ComplexVector = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1>;

template <typename Scalar>
using ComplexList = std::vector<std::complex<Scalar>>;

enum class ErrorKind {
  DisconnectedGraph,
  InvalidEdge,
  AssumptionViolated,
  DimensionMismatch,
  NonSymmetricQ,
  NotFixedPoint,
  ConditionsNotMet,
  NoPositiveAlpha,
  WindowTooShort,
  InvalidParams,
  InvalidConfig,
};

inline std::string_view to_string(ErrorKind kind)
{
  switch (kind) {
    case ErrorKind::DisconnectedGraph: return "DisconnectedGraph";
    case ErrorKind::InvalidEdge: return "InvalidEdge";
    case ErrorKind::AssumptionViolated: return "AssumptionViolated";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonSymmetricQ: return "NonSymmetricQ";
    case ErrorKind::NotFixedPoint: return "NotFixedPoint";
    case ErrorKind::ConditionsNotMet: return "ConditionsNotMet";
    case ErrorKind::NoPositiveAlpha: return "NoPositiveAlpha";
    case ErrorKind::WindowTooShort: return "WindowTooShort";
    case ErrorKind::InvalidParams: return "InvalidParams";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind)
  {
  }

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised by the gauge constructors; `which()` is one of 'a', 'b', 'c', 'd'.
class AssumptionViolated : public Error {
 public:
  AssumptionViolated(char which, const std::string& what)
      : Error(ErrorKind::AssumptionViolated, std::string("(") + which + ") " + what), which_(which)
  {
  }

  char which() const noexcept { return which_; }

 private:
  char which_;
};

enum class RunStatus { converged, not_converged, diverged };

inline std::string_view to_string(RunStatus status)
{
  switch (status) {
    case RunStatus::converged: return "converged";
    case RunStatus::not_converged: return "not_converged";
    case RunStatus::diverged: return "diverged";
  }
  return "unknown";
}

inline void require_dimension(Index actual, Index expected, std::string_view what)
{
  if (actual != expected) {
    throw Error(ErrorKind::DimensionMismatch,
                std::string(what) + ": expected " + std::to_string(expected) + ", got " +
                    std::to_string(actual));
  }
}

}  // namespace dbpi
