#pragma once

// Closed-form dynamics and kinematics of the planar two-link arm whose tip
// slides on a belt. Angles are absolute, measured from the downward vertical;
// the belt surface sits at z_n = -H.

#include <Eigen/Core>
#include <numbers>

namespace painleve
{

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

constexpr double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
constexpr double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

struct RobotParams
{
  double m = 0.12;                      // link mass [kg]
  double l = 0.21;                      // link length [m]
  double sigma = 0.005;                 // joint damping [N m s/rad]
  double k = 1.3;                       // lower-joint spring [N m/rad]
  double H = 0.3775;                    // shoulder height above belt [m]
  double alpha0 = deg_to_rad(13.72);    // spring rest angle [rad]
  double mu = 0.6;                      // Coulomb friction coefficient
  double v_belt = -0.4;                 // belt speed [m/s]
  double g = 9.81;                      // gravity [m/s^2]

  /// Throws Error{InvalidArgument} naming the first violated invariant.
  void validate() const;
};

/// Joint angles and rates, ordered as [theta1, theta1_dot, theta2, theta2_dot].
struct State
{
  double theta1 = 0.0;
  double theta1_dot = 0.0;
  double theta2 = 0.0;
  double theta2_dot = 0.0;

  Vec2 q() const { return {theta1, theta2}; }
  Vec2 q_dot() const { return {theta1_dot, theta2_dot}; }
  static State from(const Vec2& q, const Vec2& q_dot)
  {
    return {q.x(), q_dot.x(), q.y(), q_dot.y()};
  }
  bool finite() const;
};

/// Joint torques. u1 acts between ground and link 1, u2 between the links,
/// so the generalized force on (theta1, theta2) is [u1 - u2, u2].
struct ControlTorques
{
  double u1 = 0.0;
  double u2 = 0.0;

  Vec2 generalized() const { return {u1 - u2, u2}; }
  static ControlTorques from_generalized(const Vec2& u)
  {
    return {u.x() + u.y(), u.y()};
  }
};

struct DynamicsTerms
{
  Mat2 M;     // mass matrix
  Mat2 M_inv;
  Vec2 w;     // spring, damper and gravity torques
  Vec2 c;     // Coriolis/centrifugal torques
  Mat2 J;     // tip Jacobian, z_dot = J q_dot
  Mat2 J_dot;
  Mat2 Q;     // J M^-1 J^T
  Vec2 s;     // centripetal tip acceleration, J_dot q_dot
};

struct EndEffector
{
  double z_t = 0.0;
  double z_n = 0.0;
  double z_t_dot = 0.0;
  double z_n_dot = 0.0;
  double gap = 0.0;  // z_n + H
};

enum class Elbow
{
  Up,    // theta2 - theta1 > 0
  Down,  // theta2 - theta1 < 0
};

struct JointAngles
{
  double theta1 = 0.0;
  double theta2 = 0.0;
  bool degenerate = false;  // straight arm, both branches coincide
};

EndEffector forward_kinematics(const State& state, const RobotParams& params);

DynamicsTerms eval_terms(const State& state, const RobotParams& params);

/// Contact-free joint accelerations.
Vec2 free_dynamics(const State& state, const ControlTorques& u, const RobotParams& params);

/// Joint accelerations under a tip force f = [f_t, f_n].
Vec2 joint_accelerations(const DynamicsTerms& terms, const ControlTorques& u, const Vec2& tip_force);

/// Throws Error{UnreachableTarget} outside the annulus |z| <= 2l.
JointAngles inverse_kinematics(double z_t, double z_n, Elbow elbow, const RobotParams& params);

Elbow elbow_of(const State& state);

/// Kinetic, gravitational and spring energy.
double mechanical_energy(const State& state, const RobotParams& params);

/// Power dissipated by the two joint dashpots (non-negative).
double damping_power(const State& state, const RobotParams& params);

}  // namespace painleve
