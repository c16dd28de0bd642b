#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <span>
#include <string_view>

#include "painleve/model.hpp"

namespace painleve
{

/// Largest number of integral states a controller may carry; they ride along
/// in the integrator state behind the four joint coordinates.
inline constexpr std::size_t kMaxIntegralStates = 2;

/// Contact force as seen by a controller: the constraint-consistent value in
/// the current contact phase, zero in flight.
struct SensedForce
{
  double f_t = 0.0;
  double f_n = 0.0;
};

struct ControlContext
{
  double t = 0.0;
  const State& x;
  const DynamicsTerms& terms;
  const RobotParams& params;
  SensedForce sensed;
  std::span<const double> integral;
};

/// Continuous-time feedback law evaluated inside the integrator's right-hand
/// side. Integral states are owned by the simulator so that step rejection and
/// event localization never corrupt controller memory.
class Controller
{
public:
  virtual ~Controller() = default;

  virtual std::string_view name() const = 0;
  virtual std::size_t integral_size() const { return 0; }

  /// Must be affine in ctx.sensed; the simulator relies on it to close the
  /// algebraic loop between the torques and the contact force.
  virtual ControlTorques torques(const ControlContext& ctx) const = 0;

  virtual void integral_rate(const ControlContext& /*ctx*/, std::span<double> /*rate*/) const {}

  virtual bool uses_sensed_force() const { return false; }

  /// True when the law cannot be evaluated at this state (e.g. singular J).
  virtual bool singular(const ControlContext& /*ctx*/) const { return false; }

  /// Called once per accepted integration step.
  virtual void on_accepted_step(const ControlContext& /*ctx*/) {}

  virtual std::unique_ptr<Controller> clone() const = 0;
};

class OpenLoop final : public Controller
{
public:
  std::string_view name() const override { return "open-loop"; }
  ControlTorques torques(const ControlContext&) const override { return {}; }
  std::unique_ptr<Controller> clone() const override { return std::make_unique<OpenLoop>(); }
};

}  // namespace painleve
