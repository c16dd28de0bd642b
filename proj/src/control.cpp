#include "painleve/control.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>

#include "painleve/error.hpp"

namespace painleve
{

std::string_view to_string(ProfileKind kind)
{
  switch (kind)
  {
    case ProfileKind::Step: return "step";
    case ProfileKind::Ramp: return "ramp";
    case ProfileKind::Smoothstep: return "smoothstep";
  }
  return "unknown";
}

std::optional<ProfileKind> profile_kind_from_string(std::string_view name)
{
  for (ProfileKind k : {ProfileKind::Step, ProfileKind::Ramp, ProfileKind::Smoothstep})
  {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

void ReferenceProfile::validate() const
{
  if (!std::isfinite(start) || !std::isfinite(end) || !std::isfinite(t0))
  {
    throw Error(ErrorKind::InvalidArgument, "reference profile has non-finite fields");
  }
  if (kind != ProfileKind::Step && !(duration > 0.0))
  {
    throw Error(ErrorKind::InvalidArgument, "reference profile duration must be > 0");
  }
}

ReferenceProfile ReferenceProfile::hold(double z)
{
  return ReferenceProfile{ProfileKind::Step, z, z, 0.0, 1.0};
}

ReferencePoint reference_profile(const ReferenceProfile& profile, double t)
{
  const double span = profile.end - profile.start;
  if (profile.kind == ProfileKind::Step)
  {
    return {t < profile.t0 ? profile.start : profile.end, 0.0, 0.0};
  }
  const double s = (t - profile.t0) / profile.duration;
  if (s <= 0.0) return {profile.start, 0.0, 0.0};
  if (s >= 1.0) return {profile.end, 0.0, 0.0};
  if (profile.kind == ProfileKind::Ramp)
  {
    return {profile.start + span * s, span / profile.duration, 0.0};
  }
  // Quintic smoothstep: zero rate and acceleration at both ends.
  const double d = profile.duration;
  const double h = s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
  const double hd = 30.0 * s * s * (1.0 - s) * (1.0 - s);
  const double hdd = 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s);
  return {profile.start + span * h, span * hd / d, span * hdd / (d * d)};
}

void PidGains::validate() const
{
  for (int i = 0; i < 2; ++i)
  {
    if (!std::isfinite(kp[i]) || !std::isfinite(ki[i]) || !std::isfinite(kd[i]))
    {
      throw Error(ErrorKind::InvalidArgument, "PID gains must be finite");
    }
  }
}

PidGains PidGains::nominal()
{
  PidGains g;
  g.kp = {200.0, 0.0};
  g.ki = {25.0, 0.0};
  g.kd = {2.0, 0.0};
  return g;
}

Vec2 relative_coordinates(const State& x) { return {x.theta1, x.theta2 - x.theta1}; }

Vec2 relative_rates(const State& x) { return {x.theta1_dot, x.theta2_dot - x.theta1_dot}; }

namespace
{

ControlTorques pid_law(const Vec2& error, const Vec2& rate_error, const Vec2& integral, const PidGains& g)
{
  ControlTorques u;
  u.u1 = g.kp[0] * error.x() + g.ki[0] * integral.x() + g.kd[0] * rate_error.x();
  u.u2 = g.kp[1] * error.y() + g.ki[1] * integral.y() + g.kd[1] * rate_error.y();
  return u;
}

}  // namespace

ControlTorques pid_torques(const State& x, const Vec2& q_ref, const Vec2& q_ref_dot, const PidGains& gains,
                           double dt, PidIntegrator& memory)
{
  const Vec2 error = q_ref - relative_coordinates(x);
  const Vec2 rate_error = q_ref_dot - relative_rates(x);
  if (memory.primed)
  {
    for (int i = 0; i < 2; ++i) memory.integral[i] += 0.5 * dt * (memory.last_error[i] + error[i]);
  }
  memory.last_error = {error.x(), error.y()};
  memory.primed = true;
  return pid_law(error, rate_error, Vec2(memory.integral[0], memory.integral[1]), gains);
}

void HybridGains::validate() const
{
  if (!std::isfinite(kp) || !std::isfinite(kd) || !std::isfinite(ki))
  {
    throw Error(ErrorKind::InvalidArgument, "hybrid gains must be finite");
  }
  if (!(f_n_ref > 0.0))
  {
    throw Error(ErrorKind::InvalidArgument, "f_n_ref must be > 0");
  }
}

Vec2 hybrid_generalized(const State& x, const DynamicsTerms& terms, const RobotParams& params,
                        const HybridGains& gains, const ReferencePoint& ref, double integral,
                        SensedForce sensed)
{
  const EndEffector ee = forward_kinematics(x, params);
  const double alpha_v = ref.z_ddot + gains.kp * (ref.z - ee.z_t) + gains.kd * (ref.z_dot - ee.z_t_dot);
  const double alpha_f = gains.f_n_ref + gains.ki * integral;
  const Vec2 motion = terms.J.partialPivLu().solve(Vec2(alpha_v, 0.0) - terms.s);
  return terms.w + terms.c + terms.M * motion + terms.J.transpose() * Vec2(-sensed.f_t, -alpha_f);
}

ControlTorques hybrid_torques(const State& x, const DynamicsTerms& terms, const ContactState& contact,
                              const HybridGains& gains, const ReferencePoint& ref, const RobotParams& params,
                              double dt, ForceIntegrator& memory)
{
  if (std::abs(terms.J.determinant()) <= kJacobianSingular)
  {
    throw Error(ErrorKind::JacobianSingular, "|det J| below threshold");
  }
  const double error = gains.f_n_ref - contact.f_n;
  if (memory.primed) memory.integral += 0.5 * dt * (memory.last_error + error);
  memory.last_error = error;
  memory.primed = true;
  return ControlTorques::from_generalized(
    hybrid_generalized(x, terms, params, gains, ref, memory.integral, SensedForce{contact.f_t, contact.f_n}));
}

PidController::PidController(PidGains gains, ReferenceProfile profile, Elbow elbow, const RobotParams& params)
  : gains_(gains), profile_(profile), elbow_(elbow), params_(params)
{
  gains_.validate();
  profile_.validate();
}

std::pair<Vec2, Vec2> PidController::reference(double t) const
{
  const ReferencePoint r = reference_profile(profile_, t);
  const JointAngles q = inverse_kinematics(r.z, -params_.H, elbow_, params_);
  Vec2 q_rel(q.theta1, q.theta2 - q.theta1);
  Vec2 rate = Vec2::Zero();
  if (r.z_dot != 0.0)
  {
    const State ref_state{q.theta1, 0.0, q.theta2, 0.0};
    const Mat2 J = eval_terms(ref_state, params_).J;
    const Eigen::FullPivLU<Mat2> lu(J);
    if (lu.isInvertible())
    {
      const Vec2 qd = lu.solve(Vec2(r.z_dot, 0.0));
      rate = Vec2(qd.x(), qd.y() - qd.x());
    }
  }
  return {q_rel, rate};
}

ControlTorques PidController::torques(const ControlContext& ctx) const
{
  const auto [q_ref, q_ref_dot] = reference(ctx.t);
  const Vec2 integral(ctx.integral[0], ctx.integral[1]);
  return pid_law(q_ref - relative_coordinates(ctx.x), q_ref_dot - relative_rates(ctx.x), integral, gains_);
}

void PidController::integral_rate(const ControlContext& ctx, std::span<double> rate) const
{
  const Vec2 error = reference(ctx.t).first - relative_coordinates(ctx.x);
  rate[0] = error.x();
  rate[1] = error.y();
}

HybridController::HybridController(HybridGains gains, ReferenceProfile profile)
  : gains_(gains), profile_(profile)
{
  gains_.validate();
  profile_.validate();
}

bool HybridController::singular(const ControlContext& ctx) const
{
  return std::abs(ctx.terms.J.determinant()) <= kJacobianSingular;
}

ControlTorques HybridController::torques(const ControlContext& ctx) const
{
  if (singular(ctx))
  {
    return ControlTorques::from_generalized(held_.value_or(Vec2::Zero()));
  }
  return ControlTorques::from_generalized(hybrid_generalized(
    ctx.x, ctx.terms, ctx.params, gains_, reference_profile(profile_, ctx.t), ctx.integral[0], ctx.sensed));
}

void HybridController::integral_rate(const ControlContext& ctx, std::span<double> rate) const
{
  rate[0] = gains_.f_n_ref - ctx.sensed.f_n;
}

void HybridController::on_accepted_step(const ControlContext& ctx)
{
  if (!singular(ctx)) held_ = torques(ctx).generalized();
}

std::string_view to_string(ControllerKind kind)
{
  switch (kind)
  {
    case ControllerKind::OpenLoop: return "open-loop";
    case ControllerKind::Pid: return "pid";
    case ControllerKind::Hybrid: return "hybrid";
  }
  return "unknown";
}

std::optional<ControllerKind> controller_kind_from_string(std::string_view name)
{
  for (ControllerKind k : {ControllerKind::OpenLoop, ControllerKind::Pid, ControllerKind::Hybrid})
  {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

void ControllerSpec::validate() const
{
  if (kind == ControllerKind::Pid) pid.validate();
  if (kind == ControllerKind::Hybrid) hybrid.validate();
}

std::unique_ptr<Controller> make_controller(const ControllerSpec& spec, const ReferenceProfile& profile,
                                            Elbow elbow, const RobotParams& params)
{
  spec.validate();
  switch (spec.kind)
  {
    case ControllerKind::OpenLoop: return std::make_unique<OpenLoop>();
    case ControllerKind::Pid: return std::make_unique<PidController>(spec.pid, profile, elbow, params);
    case ControllerKind::Hybrid: return std::make_unique<HybridController>(spec.hybrid, profile);
  }
  throw Error(ErrorKind::InvalidArgument, "unknown controller kind");
}

std::optional<double> first_lift_off(const Trajectory& trajectory)
{
  for (const Event& e : trajectory.events)
  {
    if (is_lift_off(e.kind)) return e.t;
  }
  return std::nullopt;
}

ZtTrial try_target(const ControllerSpec& spec, const State& initial, const RobotParams& params,
                   const ZtSearch& search, double target)
{
  const double z0 = forward_kinematics(initial, params).z_t;
  ReferenceProfile profile;
  profile.kind = ProfileKind::Ramp;
  profile.start = z0;
  profile.end = target;
  profile.duration = std::max(std::abs(target - z0) / search.ramp_rate, 1e-3);
  SimConfig config = search.sim;
  config.t_end = profile.duration + search.hold;
  config.output_dt = config.t_end;  // only events matter here
  config.record_start = config.t_end;

  const auto controller = make_controller(spec, profile, elbow_of(initial), params);
  ZtTrial trial;
  trial.target = target;
  try
  {
    const Trajectory tr = simulate(initial, *controller, params, config);
    if (const auto t = first_lift_off(tr))
    {
      trial.lift_off = true;
      trial.t_lift_off = *t;
    }
  }
  catch (const Error& e)
  {
    // A run that breaks down (e.g. chattering contact) cannot count as held.
    if (e.kind() == ErrorKind::InvalidArgument) throw;
    trial.lift_off = true;
    trial.t_lift_off = -1.0;
  }
  return trial;
}

ZtResult find_zt_sliding(const ControllerSpec& spec, const State& initial, const RobotParams& params,
                         const ZtSearch& search)
{
  if (!(search.ramp_rate > 0.0) || !(search.tolerance > 0.0) || !(search.hold >= 0.0))
  {
    throw Error(ErrorKind::InvalidArgument, "search needs ramp_rate > 0, tolerance > 0, hold >= 0");
  }
  const double reach = std::sqrt(4.0 * params.l * params.l - params.H * params.H);
  const double z0 = forward_kinematics(initial, params).z_t;
  const double upper = search.upper > 0.0 ? std::min(search.upper, reach) : reach * (1.0 - 1e-6);

  ZtResult result;
  auto run = [&](double target) {
    result.trials.push_back(try_target(spec, initial, params, search, target));
    return !result.trials.back().lift_off;
  };

  if (!run(z0))
  {
    throw Error(ErrorKind::AllTargetsLiftOff, "lift-off even when holding the initial position");
  }
  double lo = z0;
  double hi = upper;
  if (run(hi))
  {
    result.z_t_sliding = hi;
    return result;
  }
  while (hi - lo > search.tolerance)
  {
    const double mid = 0.5 * (lo + hi);
    if (run(mid))
      lo = mid;
    else
      hi = mid;
  }
  result.z_t_sliding = lo;
  return result;
}

}  // namespace painleve
