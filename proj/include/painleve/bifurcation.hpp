#pragma once

// Brute-force bifurcation analysis over (mu, v_belt): each grid point is
// simulated past a transient, and the recorded window is reduced to the peak
// theta1 rate, a bounce flag and a Poincare section.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "painleve/control.hpp"
#include "painleve/model.hpp"
#include "painleve/sim.hpp"

namespace painleve
{

struct InitialCondition
{
  std::string label;
  State x;
};

/// Named initial conditions x0_a, x0_d and x0_u, projected onto the contact
/// manifold; nullopt for an unknown name.
std::optional<InitialCondition> preset(std::string_view name, const RobotParams& params);
std::vector<std::string> preset_names();

/// Uniform theta1 in [-40, 40] deg on the manifold, theta1_dot = 0, random
/// elbow branch. Unreachable draws are rejected and redrawn.
std::vector<InitialCondition> random_initial_conditions(std::size_t count, std::uint64_t seed,
                                                        const RobotParams& params);

/// Inclusive grid min, min + step, ... up to max (within step/1e6).
std::vector<double> grid_values(double min, double max, double step);

struct SweepSpec
{
  double mu_min = 0.6;
  double mu_max = 0.6;
  double mu_step = 0.1;
  double v_min = -1.0;
  double v_max = -0.1;
  double v_step = 0.005;
  std::vector<InitialCondition> initial;
  std::size_t random_count = 0;
  std::optional<std::uint64_t> seed;
  double transient = 250.0;  // [s]
  double record = 50.0;      // [s]
  double bounce_threshold = 1e-6;  // on max theta1_dot [rad/s]
  ControllerSpec controller;
  std::optional<double> reference_target;  // closed loop: ramp target for z_t*; none holds z_t(0)
  double reference_rate = 0.01;            // [m/s]

  void validate() const;
};

struct Classification
{
  enum class Kind
  {
    NoBounce,
    Periodic,
    Chaotic,
    InsufficientData,
  };
  Kind kind = Kind::NoBounce;
  int period = 0;  // >= 1 when periodic

  friend bool operator==(const Classification&, const Classification&) = default;
};

std::string_view to_string(Classification::Kind kind);

struct SweepPoint
{
  double mu = 0.0;
  double v_belt = 0.0;
  std::string ic_label;
  double max_theta1_dot = 0.0;
  bool bounce = false;
  Classification classification;
  std::vector<double> poincare;        // theta1 [rad]
  std::optional<std::string> error;   // simulation failure at this point
};

struct SweepResult
{
  std::vector<SweepPoint> points;  // mu major, then v_belt, then initial condition
};

struct SectionPoint
{
  double t = 0.0;
  double theta1 = 0.0;
};

/// theta1 where theta1_dot turns from negative to non-negative, at or after
/// t_from. Smooth crossings are located on cubic Hermite interpolants to
/// event_tol; a crossing made by an impulsive jump is taken at the jump.
std::vector<SectionPoint> poincare_section(const Trajectory& trajectory, double t_from = 0.0,
                                           double event_tol = 1e-10);

/// Peak theta1_dot over samples and event states at or after t_from.
double max_theta1_dot(const Trajectory& trajectory, double t_from);

inline constexpr int kMaxPeriod = 32;

/// Periodic(n) for the smallest n <= n_max such that the last 3n points each
/// match the point n earlier within tol; chaotic otherwise. Fewer than 8
/// points gives InsufficientData.
Classification classify_attractor(const std::vector<double>& points, double tol = 1e-3,
                                  int n_max = kMaxPeriod);

/// One grid point: simulate transient + record and reduce.
SweepPoint run_point(const SweepSpec& spec, const RobotParams& params, const SimConfig& config,
                     const InitialCondition& ic);

/// Full grid on a pool of `jobs` worker threads (0: hardware concurrency).
/// Results are ordered by grid index, independent of scheduling.
SweepResult sweep(const SweepSpec& spec, const RobotParams& base, const SimConfig& config,
                  std::size_t jobs = 1);

/// Sweep with the controller and reference of the sweep spec active.
SweepResult closed_loop_sweep(const SweepSpec& spec, const RobotParams& base, const SimConfig& config,
                              std::size_t jobs = 1);

}  // namespace painleve
