#include "painleve/error.hpp"

namespace painleve
{

std::string_view to_string(ErrorKind kind)
{
  switch (kind)
  {
    case ErrorKind::UnreachableTarget: return "UnreachableTarget";
    case ErrorKind::AmbiguousSlip: return "AmbiguousSlip";
    case ErrorKind::NoContactSolution: return "NoContactSolution";
    case ErrorKind::RateSingular: return "RateSingular";
    case ErrorKind::IntegratorFailure: return "IntegratorFailure";
    case ErrorKind::ConstraintDriftExceeded: return "ConstraintDriftExceeded";
    case ErrorKind::ImpulseNonTermination: return "ImpulseNonTermination";
    case ErrorKind::JacobianSingular: return "JacobianSingular";
    case ErrorKind::AllTargetsLiftOff: return "AllTargetsLiftOff";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Validation: return "Validation";
  }
  return "Unknown";
}

}  // namespace painleve
