#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "oracle.hpp"
#include "painleve/bifurcation.hpp"
#include "painleve/error.hpp"
#include "painleve/sim.hpp"

using namespace painleve;

namespace
{

class ConstantTorque final : public Controller
{
public:
  explicit ConstantTorque(ControlTorques u) : u_(u) {}
  std::string_view name() const override { return "constant"; }
  ControlTorques torques(const ControlContext&) const override { return u_; }
  std::unique_ptr<Controller> clone() const override { return std::make_unique<ConstantTorque>(*this); }

private:
  ControlTorques u_;
};

State start(std::string_view name, const RobotParams& p) { return preset(name, p)->x; }

SimConfig horizon(double t_end)
{
  SimConfig c;
  c.t_end = t_end;
  return c;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

bool same_state(const State& a, const State& b)
{
  return same_bits(a.theta1, b.theta1) && same_bits(a.theta1_dot, b.theta1_dot) && same_bits(a.theta2, b.theta2) &&
         same_bits(a.theta2_dot, b.theta2_dot);
}

double normal_rate(const State& x, const RobotParams& p)
{
  const auto J = oracle::jacobian(x, p);
  return J[1][0] * x.theta1_dot + J[1][1] * x.theta2_dot;
}

double slip_rate(const State& x, const RobotParams& p)
{
  const auto J = oracle::jacobian(x, p);
  return J[0][0] * x.theta1_dot + J[0][1] * x.theta2_dot - p.v_belt;
}

}  // namespace

TEST(Flight, ForceFreeRigidRotationKeepsRates)
{
  RobotParams p;
  p.g = 0.0;
  p.k = 0.0;
  p.sigma = 0.0;
  p.H = 0.4199;
  const State x0{0.3, 0.5, 0.3, 0.5};
  const Trajectory tr = simulate(x0, OpenLoop{}, p, horizon(2.0));
  EXPECT_TRUE(tr.events.empty());
  for (const Sample& s : tr.samples)
  {
    EXPECT_NEAR(s.x.theta1_dot, 0.5, 1e-12);
    EXPECT_NEAR(s.x.theta2_dot, 0.5, 1e-12);
    EXPECT_NEAR(s.x.theta1, 0.3 + 0.5 * s.t, 1e-10);
    EXPECT_NEAR(s.x.theta2, 0.3 + 0.5 * s.t, 1e-10);
  }
}

TEST(Flight, TouchdownTimeMatchesFixedStepOracle)
{
  RobotParams p;
  p.H = 0.40;
  const State x0{deg_to_rad(30.0), 0.0, 0.0, 0.0};
  ASSERT_GT(forward_kinematics(x0, p).gap, 0.0);

  // RK4 at h = 1e-4 to the first sign change, then bisection with RK4.
  const double h = 1e-4;
  State x = x0;
  double t = 0.0;
  auto gap = [&](const State& s) { return oracle::tip(s.theta1, s.theta2, p)[1] + p.H; };
  while (gap(oracle::rk4_flight(x, p, h)) > 0.0)
  {
    x = oracle::rk4_flight(x, p, h);
    t += h;
    ASSERT_LT(t, 5.0);
  }
  double lo = 0.0;
  double hi = h;
  for (int i = 0; i < 60; ++i)
  {
    const double mid = 0.5 * (lo + hi);
    (gap(oracle::rk4_flight(x, p, mid)) > 0.0 ? lo : hi) = mid;
  }
  const double t_oracle = t + 0.5 * (lo + hi);

  const Trajectory tr = simulate(x0, OpenLoop{}, p, horizon(t_oracle + 0.1));
  ASSERT_FALSE(tr.events.empty());
  EXPECT_EQ(tr.events.front().kind, EventKind::Touchdown);
  EXPECT_NEAR(tr.events.front().t, t_oracle, 1e-6);
}

TEST(Flight, BouncingRegimeRecontactsBelt)
{
  const RobotParams p;
  const Trajectory tr = simulate(start("x0_a", p), OpenLoop{}, p, horizon(20.0));
  bool lifted = false;
  bool recontact = false;
  for (const Event& e : tr.events)
  {
    if (is_lift_off(e.kind)) lifted = true;
    if (lifted && e.kind == EventKind::Touchdown) recontact = true;
  }
  EXPECT_TRUE(recontact);
}

TEST(Flight, TimeReversalWithoutDissipation)
{
  RobotParams p;
  p.sigma = 0.0;
  p.H = 0.4199;
  SimConfig c = horizon(2.0);
  c.rel_tol = 1e-12;
  c.abs_tol = 1e-14;
  const State x0{0.3, 0.5, 0.05, 0.3};
  const Trajectory fwd = simulate(x0, OpenLoop{}, p, c);
  ASSERT_TRUE(fwd.events.empty());
  State mid = fwd.samples.back().x;
  mid.theta1_dot = -mid.theta1_dot;
  mid.theta2_dot = -mid.theta2_dot;
  const Trajectory back = simulate(mid, OpenLoop{}, p, c);
  ASSERT_TRUE(back.events.empty());
  const State end = back.samples.back().x;
  EXPECT_NEAR(end.theta1, x0.theta1, 1e-7);
  EXPECT_NEAR(end.theta2, x0.theta2, 1e-7);
  EXPECT_NEAR(-end.theta1_dot, x0.theta1_dot, 1e-7);
  EXPECT_NEAR(-end.theta2_dot, x0.theta2_dot, 1e-7);
}

TEST(Flight, StepEndsAtTouchdown)
{
  RobotParams p;
  p.H = 0.40;
  HybridState h;
  h.x = State{deg_to_rad(30.0), 0.0, 0.0, 0.0};
  OpenLoop ctrl;
  const PhaseSegment seg = step_flight(h, ctrl, p, horizon(2.0));
  EXPECT_EQ(seg.reason, PhaseEnd::Touchdown);
  EXPECT_NEAR(forward_kinematics(seg.end.x, p).gap, 0.0, 1e-9);
  EXPECT_LT(forward_kinematics(seg.end.x, p).z_n_dot, 0.0);
}

TEST(Sliding, StaticContactOnStillBeltHolds)
{
  RobotParams p;
  p.v_belt = 0.0;
  const State x = contact_closure(deg_to_rad(-5.0), 0.0, p, Elbow::Down);
  const DynamicsTerms t = eval_terms(x, p);
  // Hold the pose against gravity and the spring while pressing with 5 N.
  const Vec2 u = t.w + t.c - t.J.transpose() * Vec2(0.0, 5.0);
  const Trajectory tr = simulate(x, ConstantTorque(ControlTorques::from_generalized(u)), p, horizon(2.0));
  ASSERT_EQ(tr.events.size(), 1u);
  EXPECT_EQ(tr.events[0].kind, EventKind::StickStart);
  EXPECT_EQ(tr.events[0].t, 0.0);
  for (const Sample& s : tr.samples)
  {
    EXPECT_EQ(s.contact.mode, ContactMode::Stick);
    EXPECT_NEAR(s.contact.f_n, 5.0, 1e-9);
    EXPECT_NEAR(s.x.theta1, x.theta1, 1e-9);
    EXPECT_NEAR(s.x.theta2, x.theta2, 1e-9);
  }
}

TEST(Sliding, ForceAndNormalAccelerationResiduals)
{
  const RobotParams p;
  const Trajectory tr = simulate(start("x0_d", p), OpenLoop{}, p, horizon(10.0));
  int sliding = 0;
  for (const Sample& s : tr.samples)
  {
    if (s.contact.mode != ContactMode::Sliding) continue;
    ++sliding;
    EXPECT_LE(std::abs(s.contact.f_n + s.contact.b / s.contact.p), 1e-9);
    const oracle::V2 a = oracle::accel(s.x, p, {0.0, 0.0}, {s.contact.f_t, s.contact.f_n});
    const auto J = oracle::jacobian(s.x, p);
    const double zn_ddot = J[1][0] * a[0] + J[1][1] * a[1] + oracle::centripetal(s.x, p)[1];
    EXPECT_LE(std::abs(zn_ddot), 1e-9);
    EXPECT_NEAR(s.accel.x(), a[0], 1e-8 * (1 + std::abs(a[0])));
  }
  EXPECT_GT(sliding, 50);
}

TEST(Sliding, ElbowDownPresetSettlesWithoutBounce)
{
  const RobotParams p;
  const Trajectory tr = simulate(start("x0_d", p), OpenLoop{}, p, horizon(300.0));
  std::size_t late = 0;
  for (const Event& e : tr.events)
  {
    if (e.t > 250.0 && is_lift_off(e.kind)) ++late;
  }
  EXPECT_EQ(late, 0u);
  EXPECT_LE(max_theta1_dot(tr, 250.0), 1e-6);
}

TEST(Invariants, ComplementarityAndNoPenetration)
{
  const RobotParams p;
  const Trajectory tr = simulate(start("x0_a", p), OpenLoop{}, p, horizon(30.0));
  ASSERT_GT(tr.count(EventKind::Touchdown), 5u);
  for (const Sample& s : tr.samples)
  {
    EXPECT_GE(s.contact.f_n, 0.0);
    EXPECT_LE(s.contact.f_n * std::abs(s.ee.gap), 1e-8);
    EXPECT_GE(s.ee.gap, -100 * tolerance::contact);
  }
}

TEST(Invariants, ImpactWithoutCollisionLaunchesTip)
{
  const RobotParams p;
  const Trajectory tr = simulate(start("x0_a", p), OpenLoop{}, p, horizon(30.0));
  std::size_t iwc = 0;
  for (const Event& e : tr.events)
  {
    if (e.kind != EventKind::ImpactWithoutCollision) continue;
    ++iwc;
    EXPECT_LE(normal_rate(e.pre, p), 1e-6);
    EXPECT_GT(normal_rate(e.post, p), 0.0);
  }
  EXPECT_GT(iwc, 0u);
}

TEST(Invariants, PlasticTouchdownEndsAtRest)
{
  const RobotParams p;
  SimConfig c = horizon(30.0);
  c.restitution = 0.0;
  const Trajectory tr = simulate(start("x0_a", p), OpenLoop{}, p, c);
  for (const Event& e : tr.events)
  {
    if (e.kind == EventKind::Touchdown)
    {
      EXPECT_NEAR(normal_rate(e.post, p), 0.0, 1e-12);
    }
  }
}

TEST(Invariants, DeterministicEventLog)
{
  const RobotParams p;
  const Trajectory a = simulate(start("x0_a", p), OpenLoop{}, p, horizon(20.0));
  const Trajectory b = simulate(start("x0_a", p), OpenLoop{}, p, horizon(20.0));
  ASSERT_EQ(a.events.size(), b.events.size());
  for (std::size_t i = 0; i < a.events.size(); ++i)
  {
    EXPECT_TRUE(same_bits(a.events[i].t, b.events[i].t));
    EXPECT_EQ(a.events[i].kind, b.events[i].kind);
    EXPECT_TRUE(same_state(a.events[i].pre, b.events[i].pre));
    EXPECT_TRUE(same_state(a.events[i].post, b.events[i].post));
  }
}

TEST(Invariants, TighterTolerancesBarelyMoveSmoothRun)
{
  const RobotParams p;
  SimConfig c = horizon(5.0);
  c.rel_tol = 1e-9;
  c.abs_tol = 1e-11;
  HybridState h;
  h.x = contact_closure(deg_to_rad(-11.4), 0.0, p, Elbow::Down);
  OpenLoop ctrl;
  const PhaseSegment a = step_sliding(h, 1, ctrl, p, c);
  c.rel_tol /= 2;
  c.abs_tol /= 2;
  const PhaseSegment b = step_sliding(h, 1, ctrl, p, c);
  ASSERT_NEAR(a.end.t, b.end.t, 1e-8);
  const double scale = 1.0 + std::abs(a.end.x.theta1_dot);
  EXPECT_LT(std::abs(a.end.x.theta1 - b.end.x.theta1), 10 * 1e-9 * scale);
  EXPECT_LT(std::abs(a.end.x.theta1_dot - b.end.x.theta1_dot), 10 * 1e-9 * scale);
}

TEST(Invariants, BouncingOnsetIsConvergedInTolerance)
{
  // x0_a starts inconsistent: an impact without collision at t = 0, then the
  // first touchdown. Regression oracle: the same run at tightened tolerances.
  const RobotParams p;
  auto onset = [&](double rel, double abs) {
    SimConfig c = horizon(2.0);
    c.rel_tol = rel;
    c.abs_tol = abs;
    const Trajectory tr = simulate(start("x0_a", p), OpenLoop{}, p, c);
    EXPECT_FALSE(tr.events.empty());
    EXPECT_EQ(tr.events.front().kind, EventKind::ImpactWithoutCollision);
    EXPECT_EQ(tr.events.front().t, 0.0);
    for (const Event& e : tr.events)
    {
      if (e.kind == EventKind::Touchdown) return e.t;
    }
    return -1.0;
  };
  const double coarse = onset(1e-9, 1e-11);
  const double fine = onset(1e-11, 1e-13);
  ASSERT_GT(coarse, 0.0);
  EXPECT_NEAR(coarse, fine, 1e-6);
}

TEST(Simulate, ZeroHorizonReturnsInitialSample)
{
  const RobotParams p;
  const State x = start("x0_d", p);
  const Trajectory tr = simulate(x, OpenLoop{}, p, horizon(0.0));
  ASSERT_EQ(tr.samples.size(), 1u);
  EXPECT_EQ(tr.samples[0].t, 0.0);
  EXPECT_NEAR(tr.samples[0].x.theta1, x.theta1, 1e-12);
  EXPECT_NEAR(tr.samples[0].x.theta2, x.theta2, 1e-12);
  EXPECT_EQ(tr.samples[0].contact.mode, ContactMode::Sliding);
  EXPECT_TRUE(tr.events.empty());
}

TEST(Simulate, PenetratingStartIsRejected)
{
  const RobotParams p;
  State x = start("x0_d", p);
  x.theta1 += 0.02;
  ASSERT_LT(forward_kinematics(x, p).gap, 0.0);
  try
  {
    simulate(x, OpenLoop{}, p, horizon(1.0));
    FAIL();
  }
  catch (const Error& e)
  {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidArgument);
  }
}

TEST(Simulate, ConfigValidation)
{
  SimConfig c;
  c.rel_tol = -1.0;
  EXPECT_THROW(c.validate(), Error);
  c = SimConfig{};
  c.restitution = 1.5;
  EXPECT_THROW(c.validate(), Error);
  c = SimConfig{};
  c.t_end = -1.0;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_NO_THROW(SimConfig{}.validate());
}

TEST(Simulate, LowFrictionNeverBounces)
{
  RobotParams p;
  p.mu = 0.3;
  SimConfig c = horizon(125.0);
  c.record_start = 100.0;
  for (double v : {-1.0, -0.6, -0.4, -0.1})
  {
    p.v_belt = v;
    const Trajectory tr = simulate(start("x0_a", p), OpenLoop{}, p, c);
    EXPECT_LE(max_theta1_dot(tr, 100.0), 1e-6) << "v_belt " << v;
  }
}

TEST(Simulate, HighFrictionKeepsBouncingAfterTransient)
{
  const RobotParams p;
  SimConfig c = horizon(275.0);
  c.record_start = 250.0;
  const Trajectory tr = simulate(start("x0_a", p), OpenLoop{}, p, c);
  std::size_t late = 0;
  for (const Event& e : tr.events)
  {
    if (e.t > 250.0 && e.kind == EventKind::Touchdown) ++late;
  }
  EXPECT_GT(late, 5u);
  EXPECT_GT(max_theta1_dot(tr, 250.0), 1e-6);
}

TEST(Impact, FrictionlessPlastic)
{
  RobotParams p;
  p.mu = 0.0;
  for (int i = 0; i < 200; ++i)
  {
    State x = oracle::random_state();
    if (normal_rate(x, p) >= 0.0)
    {
      x.theta1_dot = -x.theta1_dot;
      x.theta2_dot = -x.theta2_dot;
    }
    const double zn = normal_rate(x, p);
    const auto J = oracle::jacobian(x, p);
    const double zt = J[0][0] * x.theta1_dot + J[0][1] * x.theta2_dot;
    const auto Q = oracle::delassus(x, p);
    const ImpactResult r = resolve_impact(x, p, 0.0, 1e3);
    const auto J2 = oracle::jacobian(r.post, p);
    EXPECT_NEAR(normal_rate(r.post, p), 0.0, 1e-12);
    // Normal impulse -zn / Q11 moves the tangential rate by Q01 times it.
    EXPECT_NEAR(J2[0][0] * r.post.theta1_dot + J2[0][1] * r.post.theta2_dot, zt - Q[0][1] / Q[1][1] * zn, 1e-10);
    EXPECT_NEAR(r.total_impulse, -zn / Q[1][1], 1e-10);
  }
}

TEST(Impact, FrictionlessElasticReflects)
{
  RobotParams p;
  p.mu = 0.0;
  for (int i = 0; i < 200; ++i)
  {
    State x = oracle::random_state();
    if (normal_rate(x, p) >= 0.0)
    {
      x.theta1_dot = -x.theta1_dot;
      x.theta2_dot = -x.theta2_dot;
    }
    const ImpactResult r = resolve_impact(x, p, 1.0, 1e3);
    EXPECT_NEAR(normal_rate(r.post, p), -normal_rate(x, p), 1e-10);
  }
}

TEST(Impact, MatchesImpulseSteppingOracle)
{
  const RobotParams p;
  std::uniform_real_distribution<double> th(deg_to_rad(-40), deg_to_rad(40));
  std::uniform_real_distribution<double> rate(-3.0, 3.0);
  int compared = 0;
  int slip_changes = 0;
  for (int i = 0; i < 300; ++i)
  {
    State x;
    try
    {
      x = contact_closure(th(oracle::rng()), rate(oracle::rng()), p, i % 2 ? Elbow::Up : Elbow::Down);
    }
    catch (const Error&)
    {
      continue;
    }
    // Add an approach velocity along the normal direction of the tip.
    const auto J = oracle::jacobian(x, p);
    const double det = J[0][0] * J[1][1] - J[0][1] * J[1][0];
    if (std::abs(det) < 1e-3) continue;
    const double approach = -rate(oracle::rng()) * 0.3 - 0.01;
    const double dz = std::min(approach, -0.01);
    x.theta1_dot += -J[0][1] * dz / det;
    x.theta2_dot += J[0][0] * dz / det;
    ASSERT_LT(normal_rate(x, p), 0.0);
    for (double e : {0.0, 0.1, 0.5})
    {
      const ImpactResult r = resolve_impact(x, p, e, 1e3);
      const State o = oracle::impulse_stepping(x, p, e, 1e-5);
      EXPECT_NEAR(r.post.theta1_dot, o.theta1_dot, 1e-8) << i << " e=" << e;
      EXPECT_NEAR(r.post.theta2_dot, o.theta2_dot, 1e-8) << i << " e=" << e;
      EXPECT_GE(normal_rate(r.post, p), -1e-12);
      slip_changes += r.slip_changes;
      ++compared;
    }
  }
  EXPECT_GT(compared, 300);
  EXPECT_GT(slip_changes, 0);
}

TEST(Impact, CapStopsRunawayImpulse)
{
  const RobotParams p;
  State x = start("x0_d", p);
  x.theta1_dot = -1.0;
  x.theta2_dot = 2.0;
  ASSERT_LT(normal_rate(x, p), 0.0);
  try
  {
    resolve_impact(x, p, 0.0, 1e-9);
    FAIL();
  }
  catch (const Error& e)
  {
    EXPECT_EQ(e.kind(), ErrorKind::ImpulseNonTermination);
  }
}

TEST(Impact, InconsistentStateLiftsOff)
{
  const RobotParams p;
  // Elbow-up manifold beyond the admissible range where p < 0; drive b < 0.
  const JointAngles a = inverse_kinematics(0.1835, -p.H, Elbow::Up, p);
  const State x = contact_closure(a.theta1, 0.0, p, Elbow::Up);
  ControlTorques u;
  ContactState cs;
  for (double push = 0.0; push < 5.0; push += 0.05)
  {
    const Vec2 g = eval_terms(x, p).J.transpose() * Vec2(0.0, -push);
    u = ControlTorques::from_generalized(eval_terms(x, p).w + g);
    cs = classify_mode(x, u, p);
    if (cs.mode == ContactMode::Inconsistent) break;
  }
  ASSERT_EQ(cs.mode, ContactMode::Inconsistent);
  const State post = resolve_inconsistent(x, u, p, SimConfig{});
  EXPECT_GT(normal_rate(post, p), 0.0);
  EXPECT_NE(slip_rate(post, p), slip_rate(x, p));
}
