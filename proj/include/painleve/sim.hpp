#pragma once

// Event-driven integration of the arm-on-belt hybrid system. Smooth phases
// (flight, sliding, stick) are integrated with an adaptive Dormand-Prince 5(4)
// scheme; mode transitions are located on the dense output and impacts are
// resolved by Darboux-Keller integration in normal-impulse space.

#include <array>
#include <cstddef>
#include <string_view>
#include <vector>

#include "painleve/contact.hpp"
#include "painleve/controller.hpp"
#include "painleve/model.hpp"

namespace painleve
{

struct SimConfig
{
  double t_end = 300.0;
  double rel_tol = 1e-9;
  double abs_tol = 1e-11;
  double event_tol = 1e-10;    // event-time localization [s]
  double restitution = 0.1;    // Poisson coefficient on the normal impulse
  double output_dt = 0.0;      // 0: one sample per accepted step and event
  bool stick_enabled = true;
  double max_step = 0.02;      // [s]
  double record_start = 0.0;   // samples before this time are not kept
  double impulse_cap = 10.0;   // [N s]
  double zeno_speed = 1e-3;    // touchdowns slower than this are plastic [m/s]
  std::size_t max_events = 1'000'000;

  void validate() const;
};

enum class Phase
{
  Flight,
  Sliding,
  Stick,
};

std::string_view to_string(Phase phase);

struct Sample
{
  double t = 0.0;
  State x;
  Vec2 accel = Vec2::Zero();  // joint accelerations, for Hermite interpolation
  EndEffector ee;
  ContactState contact;
  ControlTorques u;
};

enum class EventKind
{
  Touchdown,              // impact resolved in impulse space
  LiftOff,                // smooth separation, f_n reached zero
  ImpactWithoutCollision, // inconsistent mode resolved impulsively
  IndeterminateFlight,    // indeterminate mode resolved as flight
  ParadoxBoundary,        // p crossed zero while sliding
  SlipReversal,
  StickStart,
  SlipStart,              // stick left the friction cone
  ControllerSingular,
};

std::string_view to_string(EventKind kind);

struct Event
{
  double t = 0.0;
  EventKind kind = EventKind::Touchdown;
  State pre;
  State post;
  Vec2 pre_accel = Vec2::Zero();
};

/// True for the events that take the tip off the belt.
bool is_lift_off(EventKind kind);

struct Trajectory
{
  std::vector<Sample> samples;
  std::vector<Event> events;

  std::size_t count(EventKind kind) const;
};

/// Simulator state at a phase boundary: time, joint state and the controller's
/// integral states.
struct HybridState
{
  double t = 0.0;
  State x;
  std::array<double, kMaxIntegralStates> integral{};
};

enum class PhaseEnd
{
  Horizon,
  Touchdown,        // flight: gap reached zero while approaching
  LiftOff,          // sliding or stick: f_n dropped to zero
  ParadoxBoundary,  // sliding: p dropped to zero
  SlipEnd,          // sliding: z_r_dot reached zero
  SlipOnset,        // stick: |f_t| reached mu f_n
};

std::string_view to_string(PhaseEnd end);

struct PhaseSegment
{
  HybridState end;
  Vec2 end_accel = Vec2::Zero();
  PhaseEnd reason = PhaseEnd::Horizon;
  std::vector<Sample> samples;
  std::vector<Event> events;  // non-terminating notices, e.g. controller singularity
};

/// Contact-free motion until touchdown (gap = 0 approaching) or t_end.
PhaseSegment step_flight(const HybridState& start, Controller& controller, const RobotParams& params,
                         const SimConfig& config);

/// Sliding with f_n = -b/p and friction opposing slip_sign, projected back on
/// the manifold after every accepted step. Throws ConstraintDriftExceeded when
/// |gap| exceeds 100 contact tolerances before projection.
PhaseSegment step_sliding(const HybridState& start, int slip_sign, Controller& controller,
                          const RobotParams& params, const SimConfig& config);

/// Tip carried by the belt with friction inside the Coulomb cone.
PhaseSegment step_stick(const HybridState& start, Controller& controller, const RobotParams& params,
                        const SimConfig& config);

struct ImpactResult
{
  State post;
  double compression_impulse = 0.0;  // normal impulse at maximal compression [N s]
  double total_impulse = 0.0;
  int slip_changes = 0;
};

/// Frictional impact in normal-impulse space with Poisson restitution on the
/// normal impulse. Throws ImpulseNonTermination when the impulse exceeds cap.
ImpactResult resolve_impact(const State& pre, const RobotParams& params, double restitution,
                            double impulse_cap);

/// Pre: gap = 0 and z_n_dot < 0.
State resolve_touchdown(const State& pre, const RobotParams& params, const SimConfig& config);

/// Impact without collision from an inconsistent contact state (p < 0, b < 0
/// at z_n_dot = 0). Throws InvalidArgument if the state is not inconsistent.
State resolve_inconsistent(const State& state, const ControlTorques& u, const RobotParams& params,
                           const SimConfig& config);

/// Full hybrid simulation from an initial state; the controller is cloned, so
/// the caller's instance is never mutated.
Trajectory simulate(const State& initial, const Controller& controller, const RobotParams& params,
                    const SimConfig& config);

}  // namespace painleve
