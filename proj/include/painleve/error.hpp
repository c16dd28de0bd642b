#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace painleve
{

enum class ErrorKind
{
  UnreachableTarget,
  AmbiguousSlip,
  NoContactSolution,
  RateSingular,
  IntegratorFailure,
  ConstraintDriftExceeded,
  ImpulseNonTermination,
  JacobianSingular,
  AllTargetsLiftOff,
  InvalidArgument,
  Validation,
};

std::string_view to_string(ErrorKind kind);

/// Exception carrying a machine-readable kind; the CLI maps it to an exit code.
class Error : public std::runtime_error
{
public:
  Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(what), kind_(kind)
  {
  }

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

}  // namespace painleve
