#pragma once

// Independent evaluations used as test oracles. Everything here is written
// from the closed-form model with plain doubles, without Eigen and without
// calling into the library's dynamics.

#include <array>
#include <cmath>
#include <random>

#include "painleve/model.hpp"

namespace oracle
{

using painleve::RobotParams;
using painleve::State;

using V2 = std::array<double, 2>;
using M2 = std::array<std::array<double, 2>, 2>;

inline M2 mass(const State& x, const RobotParams& p)
{
  const double ml2 = p.m * p.l * p.l;
  const double off = ml2 / 2.0 * std::cos(x.theta2 - x.theta1);
  return {{{4.0 / 3.0 * ml2, off}, {off, ml2 / 3.0}}};
}

inline V2 w(const State& x, const RobotParams& p)
{
  const double spring = p.k * (x.theta2 - x.theta1 + p.alpha0);
  return {1.5 * p.m * p.g * p.l * std::sin(x.theta1) - spring - p.sigma * (x.theta2_dot - 2.0 * x.theta1_dot),
          0.5 * p.m * p.g * p.l * std::sin(x.theta2) + spring + p.sigma * (x.theta2_dot - x.theta1_dot)};
}

inline V2 c(const State& x, const RobotParams& p)
{
  const double h = p.m * p.l * p.l / 2.0;
  return {h * x.theta2_dot * x.theta2_dot * std::sin(x.theta1 - x.theta2),
          h * x.theta1_dot * x.theta1_dot * std::sin(x.theta2 - x.theta1)};
}

inline M2 jacobian(const State& x, const RobotParams& p)
{
  return {{{p.l * std::cos(x.theta1), p.l * std::cos(x.theta2)}, {p.l * std::sin(x.theta1), p.l * std::sin(x.theta2)}}};
}

inline V2 tip(double th1, double th2, const RobotParams& p)
{
  return {p.l * (std::sin(th1) + std::sin(th2)), -p.l * (std::cos(th1) + std::cos(th2))};
}

inline V2 centripetal(const State& x, const RobotParams& p)
{
  const double a = x.theta1_dot * x.theta1_dot;
  const double b = x.theta2_dot * x.theta2_dot;
  return {-p.l * (std::sin(x.theta1) * a + std::sin(x.theta2) * b),
          p.l * (std::cos(x.theta1) * a + std::cos(x.theta2) * b)};
}

inline M2 inverse(const M2& a)
{
  const double det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
  return {{{a[1][1] / det, -a[0][1] / det}, {-a[1][0] / det, a[0][0] / det}}};
}

inline V2 mul(const M2& a, const V2& v) { return {a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]}; }

inline V2 mul_t(const M2& a, const V2& v) { return {a[0][0] * v[0] + a[1][0] * v[1], a[0][1] * v[0] + a[1][1] * v[1]}; }

/// Q = J M^-1 J^T.
inline M2 delassus(const State& x, const RobotParams& p)
{
  const M2 J = jacobian(x, p);
  const M2 Mi = inverse(mass(x, p));
  M2 q{};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
    {
      double s = 0.0;
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) s += J[i][a] * Mi[a][b] * J[j][b];
      q[i][j] = s;
    }
  return q;
}

/// Joint accelerations with generalized torque u_gen and tip force f = [f_t, f_n].
inline V2 accel(const State& x, const RobotParams& p, const V2& u_gen, const V2& f)
{
  const V2 ww = w(x, p);
  const V2 cc = c(x, p);
  const V2 jf = mul_t(jacobian(x, p), f);
  return mul(inverse(mass(x, p)), {-ww[0] - cc[0] + jf[0] + u_gen[0], -ww[1] - cc[1] + jf[1] + u_gen[1]});
}

/// b and p as in the sliding decomposition, z_ddot_n = b + p f_n.
inline V2 painleve_bp(const State& x, const RobotParams& p, const V2& u_gen, int slip_sign)
{
  const V2 free = accel(x, p, u_gen, {0.0, 0.0});
  const M2 J = jacobian(x, p);
  const V2 s = centripetal(x, p);
  const double b = J[1][0] * free[0] + J[1][1] * free[1] + s[1];
  const M2 Q = delassus(x, p);
  return {b, -p.mu * slip_sign * Q[1][0] + Q[1][1]};
}

inline double energy(const State& x, const RobotParams& p)
{
  const M2 M = mass(x, p);
  const double kin = 0.5 * (M[0][0] * x.theta1_dot * x.theta1_dot + 2.0 * M[0][1] * x.theta1_dot * x.theta2_dot +
                            M[1][1] * x.theta2_dot * x.theta2_dot);
  const double grav = -p.m * p.g * p.l * (1.5 * std::cos(x.theta1) + 0.5 * std::cos(x.theta2));
  const double stretch = x.theta2 - x.theta1 + p.alpha0;
  return kin + grav + 0.5 * p.k * stretch * stretch;
}

inline double dissipation(const State& x, const RobotParams& p)
{
  const double rel = x.theta2_dot - x.theta1_dot;
  return p.sigma * (x.theta1_dot * x.theta1_dot + rel * rel);
}

/// Fixed-step RK4 on the contact-free dynamics with zero torque.
inline State rk4_flight(State x, const RobotParams& p, double h)
{
  auto f = [&](const State& s) {
    const V2 a = accel(s, p, {0.0, 0.0}, {0.0, 0.0});
    return std::array<double, 4>{s.theta1_dot, a[0], s.theta2_dot, a[1]};
  };
  auto add = [](const State& s, const std::array<double, 4>& d, double k) {
    return State{s.theta1 + k * d[0], s.theta1_dot + k * d[1], s.theta2 + k * d[2], s.theta2_dot + k * d[3]};
  };
  const auto k1 = f(x);
  const auto k2 = f(add(x, k1, h / 2));
  const auto k3 = f(add(x, k2, h / 2));
  const auto k4 = f(add(x, k3, h));
  for (int i = 0; i < 4; ++i)
  {
    const double d = (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]) / 6.0;
    if (i == 0) x.theta1 += h * d;
    if (i == 1) x.theta1_dot += h * d;
    if (i == 2) x.theta2 += h * d;
    if (i == 3) x.theta2_dot += h * d;
  }
  return x;
}

/// Darboux-Keller impulse stepping with a fixed normal-impulse step. Within
/// a step the rates are affine in the impulse, so a step that crosses zero
/// slip or the end of compression is split at the crossing.
inline State impulse_stepping(const State& pre, const RobotParams& p, double e, double step)
{
  const M2 J = jacobian(pre, p);
  const M2 Mi = inverse(mass(pre, p));
  const M2 Q = delassus(pre, p);
  double q1 = pre.theta1_dot;
  double q2 = pre.theta2_dot;
  auto zn = [&] { return J[1][0] * q1 + J[1][1] * q2; };
  auto zr = [&] { return J[0][0] * q1 + J[0][1] * q2 - p.v_belt; };
  // Q is constant through the impact, so once stick holds it holds to the end.
  bool stuck = false;
  auto ratio = [&]() -> double {
    const double stick = -Q[0][1] / Q[0][0];
    if (stuck) return stick;
    const double r = zr();
    if (std::abs(r) > 1e-12) return r > 0 ? -p.mu : p.mu;
    if (std::abs(stick) <= p.mu)
    {
      stuck = true;
      return stick;
    }
    return Q[0][1] > 0 ? -p.mu : p.mu;
  };
  // Compensated sums keep round-off flat over millions of steps.
  struct Kahan
  {
    double sum;
    double carry = 0.0;
    void add(double v)
    {
      const double y = v - carry;
      const double t = sum + y;
      carry = (t - sum) - y;
      sum = t;
    }
  };
  Kahan k1{q1};
  Kahan k2{q2};
  Kahan total{0.0};
  auto advance = [&](double lambda, double d) {
    const V2 dq = mul(Mi, mul_t(J, {lambda, 1.0}));
    k1.add(dq[0] * d);
    k2.add(dq[1] * d);
    q1 = k1.sum;
    q2 = k2.sum;
    total.add(d);
  };

  double impulse = 0.0;
  double target = -1.0;
  for (long n = 0; n < 100'000'000; ++n)
  {
    const double lambda = ratio();
    const double dzn = Q[1][0] * lambda + Q[1][1];
    const double dzr = Q[0][0] * lambda + Q[0][1];
    double d = step;
    bool compression_end = false;
    if (target < 0.0 && dzn > 0.0 && zn() + dzn * d >= 0.0)
    {
      d = std::max(-zn(), 0.0) / dzn;
      compression_end = true;
    }
    if (target >= 0.0 && impulse + d >= target) d = target - impulse;
    const double r = zr();
    if (!stuck && std::abs(r) > 1e-12 && (r + dzr * d) * r <= 0.0 && -r / dzr <= d)
    {
      d = -r / dzr;
      compression_end = false;
    }
    advance(lambda, d);
    impulse = total.sum;
    if (compression_end)
    {
      target = (1.0 + e) * impulse;
      if (e == 0.0) break;
    }
    if (target >= 0.0 && impulse >= target)
    {
      if (zn() < 0.0)
      {
        target = -1.0;
        continue;
      }
      break;
    }
  }
  return {pre.theta1, q1, pre.theta2, q2};
}

inline std::mt19937_64& rng()
{
  static std::mt19937_64 gen(20240611);
  return gen;
}

inline State random_state(double angle_span = 3.0, double rate_span = 5.0)
{
  std::uniform_real_distribution<double> a(-angle_span, angle_span);
  std::uniform_real_distribution<double> r(-rate_span, rate_span);
  return {a(rng()), r(rng()), a(rng()), r(rng())};
}

}  // namespace oracle
