#include "painleve/model.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <string>

#include "painleve/error.hpp"

namespace painleve
{

void RobotParams::validate() const
{
  auto require = [](bool ok, const char* what) {
    if (!ok)
    {
      throw Error(ErrorKind::InvalidArgument, std::string("robot parameter violates ") + what);
    }
  };
  require(std::isfinite(m) && m > 0.0, "m > 0");
  require(std::isfinite(l) && l > 0.0, "l > 0");
  require(std::isfinite(H) && H > 0.0 && H < 2.0 * l, "0 < H < 2l");
  require(std::isfinite(mu) && mu >= 0.0, "mu >= 0");
  require(std::isfinite(sigma) && sigma >= 0.0, "sigma >= 0");
  require(std::isfinite(k) && k >= 0.0, "k >= 0");
  require(std::isfinite(alpha0), "finite alpha0");
  require(std::isfinite(v_belt), "finite v_belt");
  require(std::isfinite(g), "finite g");
}

bool State::finite() const
{
  return std::isfinite(theta1) && std::isfinite(theta1_dot) && std::isfinite(theta2) &&
         std::isfinite(theta2_dot);
}

EndEffector forward_kinematics(const State& x, const RobotParams& params)
{
  const double l = params.l;
  const double s1 = std::sin(x.theta1);
  const double c1 = std::cos(x.theta1);
  const double s2 = std::sin(x.theta2);
  const double c2 = std::cos(x.theta2);

  EndEffector ee;
  ee.z_t = l * (s1 + s2);
  ee.z_n = -l * (c1 + c2);
  ee.z_t_dot = l * (c1 * x.theta1_dot + c2 * x.theta2_dot);
  ee.z_n_dot = l * (s1 * x.theta1_dot + s2 * x.theta2_dot);
  ee.gap = ee.z_n + params.H;
  return ee;
}

DynamicsTerms eval_terms(const State& x, const RobotParams& params)
{
  const double m = params.m;
  const double l = params.l;
  const double ml2 = m * l * l;
  const double s1 = std::sin(x.theta1);
  const double c1 = std::cos(x.theta1);
  const double s2 = std::sin(x.theta2);
  const double c2 = std::cos(x.theta2);
  const double rel = x.theta2 - x.theta1;
  const double rel_dot = x.theta2_dot - x.theta1_dot;
  const double spring = params.k * (rel + params.alpha0);
  const double w1 = x.theta1_dot;
  const double w2 = x.theta2_dot;

  DynamicsTerms t;
  const double m12 = 0.5 * ml2 * std::cos(rel);
  t.M << 4.0 / 3.0 * ml2, m12, m12, ml2 / 3.0;
  const double det = t.M.determinant();
  t.M_inv << t.M(1, 1) / det, -m12 / det, -m12 / det, t.M(0, 0) / det;

  t.w << 1.5 * m * params.g * l * s1 - spring - params.sigma * (w2 - 2.0 * w1),
    0.5 * m * params.g * l * s2 + spring + params.sigma * rel_dot;

  t.c << 0.5 * ml2 * w2 * w2 * std::sin(-rel), 0.5 * ml2 * w1 * w1 * std::sin(rel);

  t.J << l * c1, l * c2, l * s1, l * s2;
  t.J_dot << -l * s1 * w1, -l * s2 * w2, l * c1 * w1, l * c2 * w2;

  t.Q = t.J * t.M_inv * t.J.transpose();
  // Enforce exact symmetry; the product above can differ in the last ulp.
  const double q12 = 0.5 * (t.Q(0, 1) + t.Q(1, 0));
  t.Q(0, 1) = q12;
  t.Q(1, 0) = q12;

  t.s << -l * (w1 * w1 * s1 + w2 * w2 * s2), l * (w1 * w1 * c1 + w2 * w2 * c2);
  return t;
}

Vec2 joint_accelerations(const DynamicsTerms& terms, const ControlTorques& u, const Vec2& tip_force)
{
  return terms.M_inv * (-terms.w - terms.c + terms.J.transpose() * tip_force + u.generalized());
}

Vec2 free_dynamics(const State& state, const ControlTorques& u, const RobotParams& params)
{
  return joint_accelerations(eval_terms(state, params), u, Vec2::Zero());
}

JointAngles inverse_kinematics(double z_t, double z_n, Elbow elbow, const RobotParams& params)
{
  const double reach = 2.0 * params.l;
  const double r = std::hypot(z_t, z_n);
  if (!std::isfinite(r) || r > reach * (1.0 + 1e-12))
  {
    throw Error(ErrorKind::UnreachableTarget,
                "target (" + std::to_string(z_t) + ", " + std::to_string(z_n) + ") outside reach");
  }
  // Direction of the target measured from the downward vertical, and the
  // half-angle opened between the two links.
  const double heading = std::atan2(z_t, -z_n);
  const double ratio = std::min(r / reach, 1.0);
  const double half = std::acos(ratio);

  JointAngles out;
  if (elbow == Elbow::Up)
  {
    out.theta1 = heading - half;
    out.theta2 = heading + half;
  }
  else
  {
    out.theta1 = heading + half;
    out.theta2 = heading - half;
  }
  out.degenerate = (half == 0.0);
  return out;
}

Elbow elbow_of(const State& state)
{
  return state.theta2 - state.theta1 >= 0.0 ? Elbow::Up : Elbow::Down;
}

double mechanical_energy(const State& x, const RobotParams& params)
{
  const DynamicsTerms t = eval_terms(x, params);
  const Vec2 qd = x.q_dot();
  const double kinetic = 0.5 * qd.dot(t.M * qd);
  const double gravity =
    -params.m * params.g * params.l * (1.5 * std::cos(x.theta1) + 0.5 * std::cos(x.theta2));
  const double stretch = x.theta2 - x.theta1 + params.alpha0;
  const double spring = 0.5 * params.k * stretch * stretch;
  return kinetic + gravity + spring;
}

double damping_power(const State& x, const RobotParams& params)
{
  const double rel_dot = x.theta2_dot - x.theta1_dot;
  return params.sigma * (x.theta1_dot * x.theta1_dot + rel_dot * rel_dot);
}

}  // namespace painleve
