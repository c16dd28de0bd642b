#pragma once

// Feedback laws for the arm: a joint-space PID on q' = [theta1, theta2 - theta1]
// and a hybrid force/motion law that linearizes the tangential motion and
// regulates the normal reaction. Both run in continuous time inside the
// integrator; the free functions below are the discrete counterparts.

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "painleve/contact.hpp"
#include "painleve/controller.hpp"
#include "painleve/model.hpp"
#include "painleve/sim.hpp"

namespace painleve
{

/// |det J| at or below this is treated as singular by the hybrid law [m^2].
inline constexpr double kJacobianSingular = 1e-6;

enum class ProfileKind
{
  Step,
  Ramp,
  Smoothstep,
};

std::string_view to_string(ProfileKind kind);
std::optional<ProfileKind> profile_kind_from_string(std::string_view name);

struct ReferencePoint
{
  double z = 0.0;
  double z_dot = 0.0;
  double z_ddot = 0.0;
};

/// Tangential reference moving from start to end, beginning at t0 and lasting
/// duration seconds (a step jumps at t0).
struct ReferenceProfile
{
  ProfileKind kind = ProfileKind::Ramp;
  double start = 0.0;
  double end = 0.0;
  double t0 = 0.0;
  double duration = 1.0;

  void validate() const;
  static ReferenceProfile hold(double z);
};

ReferencePoint reference_profile(const ReferenceProfile& profile, double t);

struct PidGains
{
  std::array<double, 2> kp{};
  std::array<double, 2> ki{};
  std::array<double, 2> kd{};

  void validate() const;
  static PidGains nominal();  // Kp1 = 200, Ki1 = 25, Kd1 = 2, loop 2 off
};

/// Discrete PID memory: trapezoidal integral of the q' error.
struct PidIntegrator
{
  std::array<double, 2> integral{};
  std::array<double, 2> last_error{};
  bool primed = false;

  void reset() { *this = {}; }
};

/// q' = [theta1, theta2 - theta1] and its rate.
Vec2 relative_coordinates(const State& x);
Vec2 relative_rates(const State& x);

/// One PID evaluation; advances the integral by dt with the trapezoidal rule.
ControlTorques pid_torques(const State& x, const Vec2& q_ref, const Vec2& q_ref_dot, const PidGains& gains,
                           double dt, PidIntegrator& memory);

struct HybridGains
{
  double kp = 900.0;
  double kd = 900.0;
  double ki = 650.0;
  double f_n_ref = 10.0;  // [N]

  void validate() const;
};

/// Trapezoidal integral of f_n_ref - f_n.
struct ForceIntegrator
{
  double integral = 0.0;
  double last_error = 0.0;
  bool primed = false;
};

/// Hybrid law evaluated once; throws JacobianSingular when |det J| <= kJacobianSingular.
ControlTorques hybrid_torques(const State& x, const DynamicsTerms& terms, const ContactState& contact,
                              const HybridGains& gains, const ReferencePoint& ref, const RobotParams& params,
                              double dt, ForceIntegrator& memory);

/// Generalized torque of the hybrid law for a given integral value and sensed force.
Vec2 hybrid_generalized(const State& x, const DynamicsTerms& terms, const RobotParams& params,
                        const HybridGains& gains, const ReferencePoint& ref, double integral,
                        SensedForce sensed);

/// Continuous PID. The reference q'* follows inverse kinematics of the profile
/// on the given elbow branch; q'*_dot comes from J^-1 applied to [z_t*_dot, 0].
class PidController final : public Controller
{
public:
  PidController(PidGains gains, ReferenceProfile profile, Elbow elbow, const RobotParams& params);

  std::string_view name() const override { return "pid"; }
  std::size_t integral_size() const override { return 2; }
  ControlTorques torques(const ControlContext& ctx) const override;
  void integral_rate(const ControlContext& ctx, std::span<double> rate) const override;
  std::unique_ptr<Controller> clone() const override { return std::make_unique<PidController>(*this); }

  /// Joint-space reference at time t: q'*, q'*_dot.
  std::pair<Vec2, Vec2> reference(double t) const;

private:
  PidGains gains_;
  ReferenceProfile profile_;
  Elbow elbow_;
  RobotParams params_;
};

class HybridController final : public Controller
{
public:
  HybridController(HybridGains gains, ReferenceProfile profile);

  std::string_view name() const override { return "hybrid"; }
  std::size_t integral_size() const override { return 1; }
  ControlTorques torques(const ControlContext& ctx) const override;
  void integral_rate(const ControlContext& ctx, std::span<double> rate) const override;
  bool uses_sensed_force() const override { return true; }
  bool singular(const ControlContext& ctx) const override;
  void on_accepted_step(const ControlContext& ctx) override;
  std::unique_ptr<Controller> clone() const override { return std::make_unique<HybridController>(*this); }

  const HybridGains& gains() const { return gains_; }

private:
  HybridGains gains_;
  ReferenceProfile profile_;
  std::optional<Vec2> held_;  // generalized torque kept while J is singular
};

enum class ControllerKind
{
  OpenLoop,
  Pid,
  Hybrid,
};

std::string_view to_string(ControllerKind kind);
std::optional<ControllerKind> controller_kind_from_string(std::string_view name);

/// Declarative controller description, independent of the reference profile.
struct ControllerSpec
{
  ControllerKind kind = ControllerKind::OpenLoop;
  PidGains pid = PidGains::nominal();
  HybridGains hybrid;

  void validate() const;
};

std::unique_ptr<Controller> make_controller(const ControllerSpec& spec, const ReferenceProfile& profile,
                                            Elbow elbow, const RobotParams& params);

struct ZtSearch
{
  double ramp_rate = 0.01;  // [m/s]
  double hold = 10.0;       // time at the target after the ramp [s]
  double tolerance = 1e-3;  // bisection width [m]
  double upper = 0.0;       // 0: just inside the reach limit
  SimConfig sim;            // tolerances and impact law; t_end is set per candidate
};

struct ZtTrial
{
  double target = 0.0;
  bool lift_off = false;
  double t_lift_off = 0.0;
};

struct ZtResult
{
  double z_t_sliding = 0.0;
  std::vector<ZtTrial> trials;
};

/// True when the run has any event that takes the tip off the belt.
std::optional<double> first_lift_off(const Trajectory& trajectory);

/// Runs a ramp to one candidate target and reports lift-off.
ZtTrial try_target(const ControllerSpec& spec, const State& initial, const RobotParams& params,
                   const ZtSearch& search, double target);

/// Largest ramp target reachable without lift-off, by bisection.
ZtResult find_zt_sliding(const ControllerSpec& spec, const State& initial, const RobotParams& params,
                         const ZtSearch& search);

}  // namespace painleve
