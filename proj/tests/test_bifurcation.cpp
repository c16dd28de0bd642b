#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracle.hpp"
#include "painleve/bifurcation.hpp"
#include "painleve/contact.hpp"
#include "painleve/error.hpp"

using namespace painleve;

namespace
{

using Kind = Classification::Kind;

SweepSpec row(double mu, double v_min, double v_max, double v_step)
{
  SweepSpec s;
  s.mu_min = s.mu_max = mu;
  s.v_min = v_min;
  s.v_max = v_max;
  s.v_step = v_step;
  s.transient = 60.0;
  s.record = 20.0;
  s.initial = {*preset("x0_a", RobotParams{})};
  return s;
}

Trajectory synthetic(auto theta1, auto rate, auto accel, double t_end, double dt)
{
  Trajectory tr;
  for (double t = 0.0; t <= t_end + 1e-12; t += dt)
  {
    Sample s;
    s.t = t;
    s.x = State{theta1(t), rate(t), 0.0, 0.0};
    s.accel = Vec2(accel(t), 0.0);
    tr.samples.push_back(s);
  }
  return tr;
}

void expect_same(const SweepResult& a, const SweepResult& b)
{
  ASSERT_EQ(a.points.size(), b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i)
  {
    const SweepPoint& p = a.points[i];
    const SweepPoint& q = b.points[i];
    EXPECT_EQ(p.mu, q.mu);
    EXPECT_EQ(p.v_belt, q.v_belt);
    EXPECT_EQ(p.ic_label, q.ic_label);
    EXPECT_EQ(p.max_theta1_dot, q.max_theta1_dot);
    EXPECT_EQ(p.bounce, q.bounce);
    EXPECT_EQ(p.classification, q.classification);
    EXPECT_EQ(p.poincare, q.poincare);
  }
}

}  // namespace

TEST(Classify, ConstantSequenceIsPeriodOne)
{
  const Classification c = classify_attractor(std::vector<double>(20, 0.3));
  EXPECT_EQ(c.kind, Kind::Periodic);
  EXPECT_EQ(c.period, 1);
}

TEST(Classify, AlternatingSequenceIsPeriodTwo)
{
  std::vector<double> v;
  for (int i = 0; i < 20; ++i) v.push_back(i % 2 ? 0.1 : -0.2);
  const Classification c = classify_attractor(v);
  EXPECT_EQ(c.kind, Kind::Periodic);
  EXPECT_EQ(c.period, 2);
}

TEST(Classify, PeriodThreeWithJitterBelowTolerance)
{
  std::vector<double> v;
  for (int i = 0; i < 40; ++i) v.push_back(0.1 * (i % 3) + 1e-5 * ((i * 7) % 5));
  const Classification c = classify_attractor(v);
  EXPECT_EQ(c.kind, Kind::Periodic);
  EXPECT_EQ(c.period, 3);
}

TEST(Classify, ShortSequenceIsInsufficient)
{
  EXPECT_EQ(classify_attractor(std::vector<double>(7, 0.0)).kind, Kind::InsufficientData);
  EXPECT_EQ(classify_attractor({}).kind, Kind::InsufficientData);
}

TEST(Classify, RandomSequenceIsChaotic)
{
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v;
  for (int i = 0; i < 200; ++i) v.push_back(u(oracle::rng()));
  EXPECT_EQ(classify_attractor(v).kind, Kind::Chaotic);
}

TEST(Classify, PeriodAboveLimitIsChaotic)
{
  std::vector<double> v;
  for (int i = 0; i < 200; ++i) v.push_back(0.01 * (i % 40));
  EXPECT_EQ(classify_attractor(v, 1e-3, 32).kind, Kind::Chaotic);
  EXPECT_EQ(classify_attractor(v, 1e-3, 40).period, 40);
}

TEST(Poincare, SineCrossesAtMinus1)
{
  const Trajectory tr = synthetic([](double t) { return std::sin(t); }, [](double t) { return std::cos(t); },
                                  [](double t) { return -std::sin(t); }, 30.0, 0.05);
  const auto section = poincare_section(tr);
  ASSERT_EQ(section.size(), 5u);  // 3pi/2 + 2pi k below 30
  for (std::size_t k = 0; k < section.size(); ++k)
  {
    EXPECT_NEAR(section[k].theta1, -1.0, 1e-8);
    EXPECT_NEAR(section[k].t, 1.5 * std::numbers::pi + 2 * std::numbers::pi * k, 1e-6);
  }
  EXPECT_EQ(poincare_section(tr, 10.0).size(), 4u);
}

TEST(Poincare, MonotoneMotionHasEmptySection)
{
  const Trajectory tr = synthetic([](double t) { return 0.5 * t; }, [](double) { return 0.5; },
                                  [](double) { return 0.0; }, 10.0, 0.1);
  EXPECT_TRUE(poincare_section(tr).empty());
  EXPECT_DOUBLE_EQ(max_theta1_dot(tr, 0.0), 0.5);
}

TEST(Poincare, JumpCrossingIsTakenAtTheJump)
{
  Trajectory tr = synthetic([](double) { return 0.2; }, [](double t) { return t < 1.0 ? -1.0 : 1.0; },
                            [](double) { return 0.0; }, 2.0, 0.5);
  Event e;
  e.t = 1.0;
  e.kind = EventKind::Touchdown;
  e.pre = State{0.2, -1.0, 0.0, 0.0};
  e.post = State{0.2, 1.0, 0.0, 0.0};
  tr.events.push_back(e);
  const auto section = poincare_section(tr);
  ASSERT_EQ(section.size(), 1u);
  EXPECT_DOUBLE_EQ(section[0].t, 1.0);
  EXPECT_DOUBLE_EQ(section[0].theta1, 0.2);
}

TEST(Grid, InclusiveEndpoints)
{
  const auto v = grid_values(-1.0, -0.1, 0.005);
  ASSERT_EQ(v.size(), 181u);
  EXPECT_DOUBLE_EQ(v.front(), -1.0);
  EXPECT_NEAR(v.back(), -0.1, 1e-12);
  EXPECT_EQ(grid_values(0.1, 1.0, 0.1).size(), 10u);
  EXPECT_EQ(grid_values(0.5, 0.5, 0.1).size(), 1u);
  EXPECT_THROW(grid_values(0.0, 1.0, 0.0), Error);
  EXPECT_THROW(grid_values(1.0, 0.0, 0.1), Error);
}

TEST(Presets, OnManifoldAndNamed)
{
  const RobotParams p;
  for (const std::string& name : preset_names())
  {
    const auto ic = preset(name, p);
    ASSERT_TRUE(ic.has_value());
    EXPECT_EQ(ic->label, name);
    const EndEffector ee = forward_kinematics(ic->x, p);
    EXPECT_NEAR(ee.z_n, -p.H, 1e-12);
    EXPECT_NEAR(ee.z_n_dot, 0.0, 1e-12);
  }
  EXPECT_FALSE(preset("x0_z", p).has_value());
}

TEST(RandomIc, DeterministicAndOnManifold)
{
  const RobotParams p;
  const auto a = random_initial_conditions(50, 7, p);
  const auto b = random_initial_conditions(50, 7, p);
  const auto c = random_initial_conditions(50, 8, p);
  ASSERT_EQ(a.size(), 50u);
  bool differs = false;
  bool up = false;
  bool down = false;
  for (std::size_t i = 0; i < a.size(); ++i)
  {
    EXPECT_EQ(a[i].x.theta1, b[i].x.theta1);
    EXPECT_EQ(a[i].x.theta2, b[i].x.theta2);
    differs |= a[i].x.theta1 != c[i].x.theta1;
    EXPECT_LE(std::abs(a[i].x.theta1), 40.0 * std::numbers::pi / 180.0 + 1e-12);
    EXPECT_EQ(a[i].x.theta1_dot, 0.0);
    const EndEffector ee = forward_kinematics(a[i].x, p);
    EXPECT_NEAR(ee.z_n, -p.H, 1e-10);
    EXPECT_NEAR(ee.z_n_dot, 0.0, 1e-10);
    (elbow_of(a[i].x) == Elbow::Up ? up : down) = true;
  }
  EXPECT_TRUE(differs);
  EXPECT_TRUE(up && down);
}

TEST(SweepSpecValidation, RejectsBadSpecs)
{
  SweepSpec s = row(0.6, -0.5, -0.4, 0.1);
  EXPECT_NO_THROW(s.validate());
  SweepSpec no_seed = s;
  no_seed.random_count = 3;
  EXPECT_THROW(no_seed.validate(), Error);
  SweepSpec empty = s;
  empty.initial.clear();
  EXPECT_THROW(empty.validate(), Error);
  SweepSpec zero_mu = s;
  zero_mu.mu_min = 0.0;
  EXPECT_THROW(zero_mu.validate(), Error);
  SweepSpec step = s;
  step.v_step = 0.0;
  EXPECT_THROW(step.validate(), Error);
  SweepSpec window = s;
  window.record = 0.0;
  EXPECT_THROW(window.validate(), Error);
}

TEST(Sweep, OrderAndThreadIndependence)
{
  SweepSpec s = row(0.6, -0.5, -0.2, 0.1);
  s.initial.push_back(*preset("x0_d", RobotParams{}));
  const SweepResult one = sweep(s, RobotParams{}, SimConfig{}, 1);
  const SweepResult two = sweep(s, RobotParams{}, SimConfig{}, 3);
  expect_same(one, two);
  ASSERT_EQ(one.points.size(), 8u);
  EXPECT_EQ(one.points[0].ic_label, "x0_a");
  EXPECT_EQ(one.points[1].ic_label, "x0_d");
  EXPECT_LT(one.points[0].v_belt, one.points[2].v_belt);
}

TEST(Sweep, OpenLoopClosedLoopSweepEqualsSweep)
{
  const SweepSpec s = row(0.6, -0.5, -0.3, 0.1);
  expect_same(sweep(s, RobotParams{}, SimConfig{}, 2), closed_loop_sweep(s, RobotParams{}, SimConfig{}, 2));
}

TEST(Sweep, BounceFlagInsensitiveToThreshold)
{
  SweepSpec s = row(0.6, -0.5, -0.1, 0.1);
  s.bounce_threshold = 1e-8;
  const SweepResult lo = sweep(s, RobotParams{}, SimConfig{}, 2);
  s.bounce_threshold = 1e-4;
  const SweepResult hi = sweep(s, RobotParams{}, SimConfig{}, 2);
  bool any = false;
  bool none = false;
  for (std::size_t i = 0; i < lo.points.size(); ++i)
  {
    EXPECT_EQ(lo.points[i].bounce, hi.points[i].bounce) << lo.points[i].v_belt;
    (lo.points[i].bounce ? any : none) = true;
  }
  EXPECT_TRUE(any && none);
}

TEST(Sweep, NoBounceFlagMatchesClassification)
{
  const SweepResult r = sweep(row(0.6, -0.5, -0.1, 0.1), RobotParams{}, SimConfig{}, 2);
  for (const SweepPoint& p : r.points)
  {
    EXPECT_FALSE(p.error.has_value());
    EXPECT_EQ(p.bounce, p.classification.kind != Kind::NoBounce) << p.v_belt;
    EXPECT_EQ(p.bounce, p.max_theta1_dot > 1e-6);
  }
}

TEST(Sweep, BouncingSpreadsWithFriction)
{
  // At v = -0.4 the bouncing found at lower friction persists at higher friction.
  SweepSpec s = row(0.3, -0.4, -0.4, 0.1);
  s.mu_max = 0.9;
  const SweepResult r = sweep(s, RobotParams{}, SimConfig{}, 3);
  bool seen = false;
  for (const SweepPoint& p : r.points)
  {
    if (seen)
    {
      EXPECT_TRUE(p.bounce) << p.mu;
    }
    seen |= p.bounce;
  }
  EXPECT_TRUE(seen);
  EXPECT_FALSE(r.points.front().bounce);
}

TEST(Sweep, ClassificationStableUnderWindowShift)
{
  SweepSpec a = row(0.6, -0.5, -0.2, 0.1);
  a.transient = 80.0;
  a.record = 40.0;
  SweepSpec b = a;
  b.transient = 100.0;
  const SweepResult ra = sweep(a, RobotParams{}, SimConfig{}, 2);
  const SweepResult rb = sweep(b, RobotParams{}, SimConfig{}, 2);
  for (std::size_t i = 0; i < ra.points.size(); ++i)
  {
    EXPECT_EQ(ra.points[i].classification.kind, rb.points[i].classification.kind) << ra.points[i].v_belt;
    EXPECT_EQ(ra.points[i].classification.period, rb.points[i].classification.period);
  }
}

TEST(Sweep, HybridLoopSuppressesBouncing)
{
  SweepSpec s = row(0.6, -0.5, -0.3, 0.1);
  s.initial = {*preset("x0_d", RobotParams{})};
  s.controller.kind = ControllerKind::Hybrid;
  const SweepResult r = closed_loop_sweep(s, RobotParams{}, SimConfig{}, 3);
  for (const SweepPoint& p : r.points)
  {
    EXPECT_FALSE(p.error.has_value());
    EXPECT_FALSE(p.bounce) << p.v_belt;
  }
}
