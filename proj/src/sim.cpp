#include "painleve/sim.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <boost/math/tools/roots.hpp>
#include <boost/numeric/odeint.hpp>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>

#include "painleve/error.hpp"

namespace painleve
{

void SimConfig::validate() const
{
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorKind::InvalidArgument, std::string("sim config violates ") + what);
  };
  require(std::isfinite(t_end) && t_end >= 0.0, "t_end >= 0");
  require(rel_tol > 0.0 && abs_tol > 0.0 && event_tol > 0.0, "tolerances > 0");
  require(restitution >= 0.0 && restitution <= 1.0, "0 <= restitution <= 1");
  require(std::isfinite(output_dt) && output_dt >= 0.0, "output_dt >= 0");
  require(max_step > 0.0, "max_step > 0");
  require(impulse_cap > 0.0, "impulse_cap > 0");
  require(std::isfinite(record_start), "finite record_start");
  require(zeno_speed >= 0.0, "zeno_speed >= 0");
}

std::string_view to_string(Phase phase)
{
  switch (phase)
  {
    case Phase::Flight: return "Flight";
    case Phase::Sliding: return "Sliding";
    case Phase::Stick: return "Stick";
  }
  return "Unknown";
}

std::string_view to_string(EventKind kind)
{
  switch (kind)
  {
    case EventKind::Touchdown: return "touchdown";
    case EventKind::LiftOff: return "lift_off";
    case EventKind::ImpactWithoutCollision: return "iwc";
    case EventKind::IndeterminateFlight: return "indeterminate_flight";
    case EventKind::ParadoxBoundary: return "paradox_boundary";
    case EventKind::SlipReversal: return "slip_reversal";
    case EventKind::StickStart: return "stick_start";
    case EventKind::SlipStart: return "slip_start";
    case EventKind::ControllerSingular: return "controller_singular";
  }
  return "unknown";
}

std::string_view to_string(PhaseEnd end)
{
  switch (end)
  {
    case PhaseEnd::Horizon: return "horizon";
    case PhaseEnd::Touchdown: return "touchdown";
    case PhaseEnd::LiftOff: return "lift_off";
    case PhaseEnd::ParadoxBoundary: return "paradox_boundary";
    case PhaseEnd::SlipEnd: return "slip_end";
    case PhaseEnd::SlipOnset: return "slip_onset";
  }
  return "unknown";
}

bool is_lift_off(EventKind kind)
{
  return kind == EventKind::LiftOff || kind == EventKind::ImpactWithoutCollision ||
         kind == EventKind::IndeterminateFlight;
}

std::size_t Trajectory::count(EventKind kind) const
{
  return static_cast<std::size_t>(
    std::count_if(events.begin(), events.end(), [kind](const Event& e) { return e.kind == kind; }));
}

namespace
{

constexpr std::size_t kDim = 4 + kMaxIntegralStates;
using OdeState = std::array<double, kDim>;

OdeState pack(const HybridState& h)
{
  OdeState y{};
  y[0] = h.x.theta1;
  y[1] = h.x.theta1_dot;
  y[2] = h.x.theta2;
  y[3] = h.x.theta2_dot;
  for (std::size_t i = 0; i < kMaxIntegralStates; ++i) y[4 + i] = h.integral[i];
  return y;
}

State state_of(const OdeState& y) { return {y[0], y[1], y[2], y[3]}; }

HybridState unpack(double t, const OdeState& y)
{
  HybridState h;
  h.t = t;
  h.x = state_of(y);
  for (std::size_t i = 0; i < kMaxIntegralStates; ++i) h.integral[i] = y[4 + i];
  return h;
}

struct PhaseEval
{
  DynamicsTerms terms;
  EndEffector ee;
  ControlTorques u;
  Vec2 force = Vec2::Zero();  // [f_t, f_n]
  Vec2 qdd = Vec2::Zero();
  PainleveCoefficients pb;
  bool loop_ok = true;        // the sensed-force loop had a finite solution
};

Vec2 lerp_torque(const ControlTorques& base, const ControlTorques& unit, double amount)
{
  return base.generalized() + amount * (unit.generalized() - base.generalized());
}

/// Right-hand side of one smooth phase. The contact force and the controller
/// torques are solved together: torques are affine in the sensed force, the
/// force is affine in the torques, so the loop closes with one linear solve.
class PhaseDynamics
{
public:
  PhaseDynamics(Phase phase, int slip_sign, const Controller& controller, const RobotParams& params)
    : phase_(phase), slip_sign_(slip_sign), controller_(controller), params_(params)
  {
  }

  PhaseEval evaluate(double t, const OdeState& y) const
  {
    PhaseEval ev;
    const State x = state_of(y);
    ev.terms = eval_terms(x, params_);
    ev.ee = forward_kinematics(x, params_);
    const std::span<const double> integral(y.data() + 4, controller_.integral_size());
    auto torques_at = [&](SensedForce f) {
      return controller_.torques(ControlContext{t, x, ev.terms, params_, f, integral});
    };
    const double mu = params_.mu;
    const int nominal = slip_velocity(ev.ee, params_) >= 0.0 ? 1 : -1;

    switch (phase_)
    {
      case Phase::Flight:
      {
        ev.u = torques_at({});
        ev.pb = painleve_pb(ev.terms, ev.u, mu, nominal);
        break;
      }
      case Phase::Sliding:
      {
        const double s = static_cast<double>(slip_sign_);
        const ControlTorques u0 = torques_at({});
        const PainleveCoefficients pb0 = painleve_pb(ev.terms, u0, mu, slip_sign_);
        double f_n = -pb0.b / pb0.p;
        ev.u = u0;
        if (controller_.uses_sensed_force())
        {
          const ControlTorques u1 = torques_at({-mu * s, 1.0});
          const double b1 = painleve_pb(ev.terms, u1, mu, slip_sign_).b - pb0.b;
          const double denom = pb0.p + b1;
          f_n = -pb0.b / denom;
          ev.loop_ok = std::isfinite(f_n);
          if (!ev.loop_ok) f_n = 0.0;
          ev.u = ControlTorques::from_generalized(lerp_torque(u0, u1, f_n));
        }
        ev.force = Vec2(-mu * s * f_n, f_n);
        ev.pb = painleve_pb(ev.terms, ev.u, mu, slip_sign_);
        break;
      }
      case Phase::Stick:
      {
        const ControlTorques u0 = torques_at({});
        const Vec2 a0 = free_tip_acceleration(ev.terms, u0);
        Mat2 K = ev.terms.Q;
        Vec2 dt_col = Vec2::Zero();
        Vec2 dn_col = Vec2::Zero();
        if (controller_.uses_sensed_force())
        {
          dt_col = torques_at({1.0, 0.0}).generalized() - u0.generalized();
          dn_col = torques_at({0.0, 1.0}).generalized() - u0.generalized();
          const Mat2 JMinv = ev.terms.J * ev.terms.M_inv;
          K.col(0) += JMinv * dt_col;
          K.col(1) += JMinv * dn_col;
        }
        const Eigen::FullPivLU<Mat2> lu(K);
        ev.loop_ok = lu.isInvertible();
        ev.force = ev.loop_ok ? Vec2(-lu.solve(a0)) : Vec2::Zero();
        ev.u = ControlTorques::from_generalized(u0.generalized() + dt_col * ev.force.x() +
                                                dn_col * ev.force.y());
        ev.pb = painleve_pb(ev.terms, ev.u, mu, nominal);
        break;
      }
    }
    ev.qdd = joint_accelerations(ev.terms, ev.u, ev.force);
    return ev;
  }

  void operator()(const OdeState& y, OdeState& dy, double t) const
  {
    const PhaseEval ev = evaluate(t, y);
    dy.fill(0.0);
    dy[0] = y[1];
    dy[1] = ev.qdd.x();
    dy[2] = y[3];
    dy[3] = ev.qdd.y();
    const std::size_t n = controller_.integral_size();
    if (n > 0)
    {
      const State x = state_of(y);
      const std::span<const double> integral(y.data() + 4, n);
      const ControlContext ctx{t, x, ev.terms, params_, SensedForce{ev.force.x(), ev.force.y()},
                               integral};
      controller_.integral_rate(ctx, std::span<double>(dy.data() + 4, n));
    }
  }

  ContactState contact_state(const PhaseEval& ev) const
  {
    ContactState cs;
    cs.mode = phase_ == Phase::Flight    ? ContactMode::Flight
              : phase_ == Phase::Sliding ? ContactMode::Sliding
                                         : ContactMode::Stick;
    cs.p = ev.pb.p;
    cs.b = ev.pb.b;
    cs.f_t = ev.force.x();
    cs.f_n = ev.force.y();
    cs.z_r_dot = slip_velocity(ev.ee, params_);
    cs.slip_sign = phase_ == Phase::Sliding ? slip_sign_ : 0;
    return cs;
  }

  Sample sample(double t, const OdeState& y) const
  {
    const PhaseEval ev = evaluate(t, y);
    Sample s;
    s.t = t;
    s.x = state_of(y);
    s.accel = ev.qdd;
    s.ee = ev.ee;
    s.contact = contact_state(ev);
    s.u = ev.u;
    return s;
  }

  ControlContext context(double t, const State& x, const PhaseEval& ev, const OdeState& y) const
  {
    return ControlContext{t, x, ev.terms, params_, SensedForce{ev.force.x(), ev.force.y()},
                          std::span<const double>(y.data() + 4, controller_.integral_size())};
  }

private:
  Phase phase_;
  int slip_sign_;
  const Controller& controller_;
  const RobotParams& params_;
};

/// Scalar function that stays positive while the phase remains valid.
struct Guard
{
  std::function<double(const PhaseEval&, const OdeState&)> value;
  PhaseEnd reason;
  double unarmed_tol;  // a guard starting at <= 0 fires once it drops below -tol
  bool armed = false;
};

std::vector<Guard> guards_for(Phase phase, int slip_sign, const RobotParams& params)
{
  std::vector<Guard> g;
  switch (phase)
  {
    case Phase::Flight:
      g.push_back({[](const PhaseEval& ev, const OdeState&) { return ev.ee.gap; }, PhaseEnd::Touchdown,
                   tolerance::contact});
      break;
    case Phase::Sliding:
    {
      const double s = static_cast<double>(slip_sign);
      g.push_back({[](const PhaseEval& ev, const OdeState&) { return ev.force.y(); }, PhaseEnd::LiftOff,
                   1e-9});
      g.push_back({[](const PhaseEval& ev, const OdeState&) { return ev.pb.p; },
                   PhaseEnd::ParadoxBoundary, tolerance::sign});
      g.push_back({[s, &params](const PhaseEval& ev, const OdeState&) {
                     return s * slip_velocity(ev.ee, params);
                   },
                   PhaseEnd::SlipEnd, tolerance::slip});
      break;
    }
    case Phase::Stick:
    {
      const double mu = params.mu;
      g.push_back({[](const PhaseEval& ev, const OdeState&) { return ev.force.y(); }, PhaseEnd::LiftOff,
                   1e-9});
      g.push_back({[mu](const PhaseEval& ev, const OdeState&) {
                     return mu * ev.force.y() - std::abs(ev.force.x());
                   },
                   PhaseEnd::SlipOnset, 1e-9});
      break;
    }
  }
  return g;
}

/// Grid sample times in (t0, t1] for a positive output period.
void grid_times(double t0, double t1, const SimConfig& config, std::vector<double>& out)
{
  out.clear();
  const double dt = config.output_dt;
  const auto last = static_cast<std::int64_t>(std::floor(config.t_end / dt + 1e-9));
  auto k = static_cast<std::int64_t>(std::floor(t0 / dt)) - 1;
  for (; k <= last; ++k)
  {
    const double t = std::min(static_cast<double>(k) * dt, config.t_end);
    if (t <= t0) continue;
    if (t > t1) break;
    if (t >= config.record_start) out.push_back(t);
  }
}

State project_for_phase(Phase phase, const State& x, const RobotParams& params)
{
  if (phase == Phase::Sliding)
  {
    return project_onto_contact(x, params, true);
  }
  // Stick: tip on the belt and moving with it.
  State p = project_onto_contact(x, params, false);
  const DynamicsTerms t = eval_terms(p, params);
  const Eigen::FullPivLU<Mat2> lu(t.J);
  if (lu.isInvertible())
  {
    const Vec2 qd = lu.solve(Vec2(params.v_belt, 0.0));
    p.theta1_dot = qd.x();
    p.theta2_dot = qd.y();
    return p;
  }
  return project_onto_contact(x, params, true);
}

PhaseSegment run_phase(const HybridState& start, Phase phase, int slip_sign, Controller& controller,
                       const RobotParams& params, const SimConfig& config)
{
  namespace odeint = boost::numeric::odeint;
  const PhaseDynamics dyn(phase, slip_sign, controller, params);
  PhaseSegment seg;

  OdeState y0 = pack(start);
  const PhaseEval ev0 = dyn.evaluate(start.t, y0);
  if (start.t >= config.t_end)
  {
    seg.end = start;
    seg.end_accel = ev0.qdd;
    seg.reason = PhaseEnd::Horizon;
    return seg;
  }

  std::vector<Guard> guards = guards_for(phase, slip_sign, params);
  std::vector<double> prev_values(guards.size());
  for (std::size_t i = 0; i < guards.size(); ++i)
  {
    prev_values[i] = guards[i].value(ev0, y0);
    guards[i].armed = prev_values[i] > 0.0;
  }

  auto stepper = odeint::make_dense_output(config.abs_tol, config.rel_tol, config.max_step,
                                           odeint::runge_kutta_dopri5<OdeState>());
  stepper.initialize(y0, start.t, std::min(config.max_step, 1e-4));
  const bool constrained = phase != Phase::Flight;
  std::vector<double> grid;
  bool singular_logged = false;

  auto record_range = [&](double t0, double t1) {
    if (config.output_dt <= 0.0) return;
    grid_times(t0, t1, config, grid);
    OdeState y;
    for (double t : grid)
    {
      stepper.calc_state(t, y);
      seg.samples.push_back(dyn.sample(t, y));
    }
  };

  for (;;)
  {
    std::pair<double, double> step;
    try
    {
      step = stepper.do_step(std::cref(dyn));
    }
    catch (const Error&)
    {
      throw;
    }
    catch (const std::exception& e)
    {
      throw Error(ErrorKind::IntegratorFailure,
                  std::string("step size collapse in ") + std::string(to_string(phase)) + " at t = " +
                    std::to_string(stepper.current_time()) + ": " + e.what());
    }
    const double ta = step.first;
    const double tb = std::min(step.second, config.t_end);

    // Scan the step for the first guard crossing.
    constexpr int kScan = 4;
    double t_prev = ta;
    std::optional<std::pair<double, std::size_t>> hit;
    OdeState y;
    for (int k = 1; k <= kScan && !hit; ++k)
    {
      const double tk = ta + (tb - ta) * static_cast<double>(k) / kScan;
      stepper.calc_state(tk, y);
      const PhaseEval ev = dyn.evaluate(tk, y);
      for (std::size_t i = 0; i < guards.size(); ++i)
      {
        const double v = guards[i].value(ev, y);
        const double shift = guards[i].armed ? 0.0 : guards[i].unarmed_tol;
        const bool crossed = guards[i].armed ? (prev_values[i] > 0.0 && v <= 0.0) : (v < -shift);
        if (crossed)
        {
          auto g = [&](double t) {
            OdeState yt;
            stepper.calc_state(t, yt);
            return guards[i].value(dyn.evaluate(t, yt), yt) + shift;
          };
          double lo = t_prev;
          double hi = tk;
          if (g(lo) > 0.0)
          {
            std::uintmax_t iters = 200;
            const auto tol = [&](double a, double b) { return std::abs(b - a) <= config.event_tol; };
            try
            {
              const auto br = boost::math::tools::toms748_solve(g, lo, hi, tol, iters);
              hi = g(br.first) <= 0.0 ? br.first : br.second;
            }
            catch (const std::exception&)
            {
              // keep the scan bracket
            }
          }
          else
          {
            hi = lo;
          }
          if (!hit || hi < hit->first) hit = std::make_pair(hi, i);
        }
        if (v > 0.0) guards[i].armed = true;
        prev_values[i] = v;
      }
      t_prev = tk;
    }

    if (hit)
    {
      const double te = hit->first;
      record_range(ta, te);
      OdeState ye;
      stepper.calc_state(te, ye);
      seg.end = unpack(te, ye);
      seg.end_accel = dyn.evaluate(te, ye).qdd;
      seg.reason = guards[hit->second].reason;
      return seg;
    }

    record_range(ta, tb);
    if (step.second >= config.t_end)
    {
      OdeState ye;
      stepper.calc_state(config.t_end, ye);
      seg.end = unpack(config.t_end, ye);
      seg.end_accel = dyn.evaluate(config.t_end, ye).qdd;
      seg.reason = PhaseEnd::Horizon;
      if (config.output_dt <= 0.0 && config.t_end >= config.record_start)
      {
        seg.samples.push_back(dyn.sample(config.t_end, ye));
      }
      return seg;
    }

    OdeState yb = stepper.current_state();
    if (constrained)
    {
      const State xb = state_of(yb);
      const double gap = forward_kinematics(xb, params).gap;
      if (std::abs(gap) > 100.0 * tolerance::contact)
      {
        throw Error(ErrorKind::ConstraintDriftExceeded,
                    "gap " + std::to_string(gap) + " m at t = " + std::to_string(tb));
      }
      const State xp = project_for_phase(phase, xb, params);
      yb[0] = xp.theta1;
      yb[1] = xp.theta1_dot;
      yb[2] = xp.theta2;
      yb[3] = xp.theta2_dot;
      stepper.initialize(yb, tb, stepper.current_time_step());
    }
    const PhaseEval evb = dyn.evaluate(tb, yb);
    for (std::size_t i = 0; i < guards.size(); ++i) prev_values[i] = guards[i].value(evb, yb);
    const State xb = state_of(yb);
    const ControlContext ctx = dyn.context(tb, xb, evb, yb);
    if (!singular_logged && controller.singular(ctx))
    {
      // Logged once per phase; the controller holds its last torque meanwhile.
      seg.events.push_back(Event{tb, EventKind::ControllerSingular, xb, xb, evb.qdd});
      singular_logged = true;
    }
    controller.on_accepted_step(ctx);
    if (config.output_dt <= 0.0 && tb >= config.record_start)
    {
      seg.samples.push_back(dyn.sample(tb, yb));
    }
  }
}

}  // namespace

PhaseSegment step_flight(const HybridState& start, Controller& controller, const RobotParams& params,
                         const SimConfig& config)
{
  return run_phase(start, Phase::Flight, 0, controller, params, config);
}

PhaseSegment step_sliding(const HybridState& start, int slip_sign, Controller& controller,
                          const RobotParams& params, const SimConfig& config)
{
  if (slip_sign != 1 && slip_sign != -1)
  {
    throw Error(ErrorKind::InvalidArgument, "slip sign must be +1 or -1");
  }
  return run_phase(start, Phase::Sliding, slip_sign, controller, params, config);
}

PhaseSegment step_stick(const HybridState& start, Controller& controller, const RobotParams& params,
                        const SimConfig& config)
{
  return run_phase(start, Phase::Stick, 0, controller, params, config);
}

ImpactResult resolve_impact(const State& pre, const RobotParams& params, double restitution,
                            double impulse_cap)
{
  const DynamicsTerms t = eval_terms(pre, params);
  const Mat2& Q = t.Q;
  const double mu = params.mu;
  Vec2 v = pre.q_dot();
  auto normal_rate = [&] { return t.J.row(1).dot(v); };
  auto slip_rate = [&] { return t.J.row(0).dot(v) - params.v_belt; };

  ImpactResult out;
  double impulse = 0.0;
  double target = std::numeric_limits<double>::infinity();
  bool compressing = true;
  double zn = normal_rate();
  double zr = slip_rate();
  int last_sign = 2;

  for (int segment = 0; segment < 1000; ++segment)
  {
    // Tangential impulse ratio for the current slip state.
    double lambda = 0.0;
    int sign = 0;
    if (std::abs(zr) > tolerance::slip)
    {
      sign = zr > 0.0 ? 1 : -1;
      lambda = -mu * sign;
    }
    else
    {
      const double stick_ratio = -Q(0, 1) / Q(0, 0);
      if (std::abs(stick_ratio) <= mu)
      {
        lambda = stick_ratio;
      }
      else
      {
        sign = Q(0, 1) > 0.0 ? 1 : -1;
        lambda = -mu * sign;
      }
    }
    if (sign != last_sign && last_sign != 2) ++out.slip_changes;
    last_sign = sign;

    const double dzn = Q(1, 0) * lambda + Q(1, 1);
    const double dzr = Q(0, 0) * lambda + Q(0, 1);

    double step = std::numeric_limits<double>::infinity();
    enum class Stop { None, Compression, Restitution, Slip } stop = Stop::None;
    if (compressing && dzn > 0.0)
    {
      const double d = std::max(-zn, 0.0) / dzn;
      if (d < step)
      {
        step = d;
        stop = Stop::Compression;
      }
    }
    if (!compressing)
    {
      const double d = std::max(target - impulse, 0.0);
      if (d < step)
      {
        step = d;
        stop = Stop::Restitution;
      }
    }
    if (sign != 0 && static_cast<double>(sign) * dzr < 0.0)
    {
      const double d = -zr / dzr;
      if (d < step)
      {
        step = d;
        stop = Stop::Slip;
      }
    }
    if (stop == Stop::None || impulse + step > impulse_cap)
    {
      throw Error(ErrorKind::ImpulseNonTermination,
                  "normal impulse exceeds " + std::to_string(impulse_cap) + " N s");
    }

    v += t.M_inv * t.J.transpose() * Vec2(lambda, 1.0) * step;
    impulse += step;
    zn = normal_rate();
    zr = slip_rate();

    if (stop == Stop::Slip)
    {
      zr = 0.0;
      // Land exactly on zero slip so the next segment takes the stick test.
      const double residual = slip_rate();
      if (residual != 0.0)
      {
        const Vec2 dir = t.M_inv * t.J.row(0).transpose();
        v -= dir * (residual / t.J.row(0).dot(dir));
        zn = normal_rate();
      }
    }
    else if (stop == Stop::Compression)
    {
      compressing = false;
      out.compression_impulse = impulse;
      target = (1.0 + restitution) * impulse;
      if (restitution == 0.0 || target <= impulse)
      {
        break;
      }
    }
    else if (stop == Stop::Restitution)
    {
      if (zn < 0.0)
      {
        // Restitution reversed the approach; compress again.
        compressing = true;
        continue;
      }
      break;
    }
  }

  out.total_impulse = impulse;
  out.post = State::from(pre.q(), v);
  if (!compressing)
  {
    // Snap float residue: compression ends at exactly zero normal velocity.
    const double residual = t.J.row(1).dot(v);
    if (residual < 0.0 && residual > -1e-12)
    {
      const Vec2 dir = t.M_inv * t.J.row(1).transpose();
      v -= dir * (residual / t.J.row(1).dot(dir));
      out.post = State::from(pre.q(), v);
    }
  }
  return out;
}

State resolve_touchdown(const State& pre, const RobotParams& params, const SimConfig& config)
{
  return resolve_impact(pre, params, config.restitution, config.impulse_cap).post;
}

State resolve_inconsistent(const State& state, const ControlTorques& u, const RobotParams& params,
                           const SimConfig& config)
{
  const ContactState cs = classify_mode(state, u, params, config.stick_enabled);
  if (cs.mode != ContactMode::Inconsistent)
  {
    throw Error(ErrorKind::InvalidArgument,
                "impact without collision requires an inconsistent state, got " +
                  std::string(to_string(cs.mode)));
  }
  return resolve_impact(state, params, config.restitution, config.impulse_cap).post;
}

namespace
{

struct Decision
{
  enum class Action { Flight, Sliding, Stick, Impulse } action = Action::Flight;
  int slip_sign = 0;
  EventKind flight_kind = EventKind::LiftOff;
};

/// Next phase for a state on the manifold with zero normal velocity.
/// forced_sign selects the slip direction; negative_p forces the paradox side
/// after a p crossing, where p sits inside its tie band.
Decision decide_contact(const HybridState& h, const Controller& controller, const RobotParams& params,
                        const SimConfig& config, std::optional<int> forced_sign, bool negative_p)
{
  const OdeState y = pack(h);
  const EndEffector ee = forward_kinematics(h.x, params);
  const double zr = slip_velocity(ee, params);

  int sign = zr >= 0.0 ? 1 : -1;
  if (forced_sign)
  {
    sign = *forced_sign;
  }
  else if (std::abs(zr) <= tolerance::slip)
  {
    const PhaseEval stick = PhaseDynamics(Phase::Stick, 0, controller, params).evaluate(h.t, y);
    const double ft = stick.force.x();
    const double fn = stick.force.y();
    if (config.stick_enabled && stick.loop_ok && fn > 0.0 && std::abs(ft) <= params.mu * fn)
    {
      return {Decision::Action::Stick, 0, EventKind::StickStart};
    }
    if (stick.loop_ok && ft != 0.0) sign = ft > 0.0 ? -1 : 1;
  }

  const PhaseEval slide = PhaseDynamics(Phase::Sliding, sign, controller, params).evaluate(h.t, y);
  double p = slide.pb.p;
  if (negative_p && p >= 0.0) p = -std::max(p, tolerance::sign);
  double b = slide.pb.b;
  if (!slide.loop_ok || !(slide.force.y() > 0.0))
  {
    b = PhaseDynamics(Phase::Flight, 0, controller, params).evaluate(h.t, y).pb.b;
  }
  const ContactMode mode = mode_from_signs(p, b);
  if (mode == ContactMode::Sliding)
  {
    return {Decision::Action::Sliding, sign, EventKind::LiftOff};
  }
  if (mode == ContactMode::Inconsistent)
  {
    return {Decision::Action::Impulse, sign, EventKind::ImpactWithoutCollision};
  }
  // Flight or indeterminate: flight must actually separate with zero sensed force.
  const double b_flight = PhaseDynamics(Phase::Flight, 0, controller, params).evaluate(h.t, y).pb.b;
  const EventKind kind =
    mode == ContactMode::Indeterminate ? EventKind::IndeterminateFlight : EventKind::LiftOff;
  if (b_flight > -tolerance::sign)
  {
    return {Decision::Action::Flight, sign, kind};
  }
  if (p < 0.0)
  {
    return {Decision::Action::Impulse, sign, EventKind::ImpactWithoutCollision};
  }
  return {Decision::Action::Sliding, sign, EventKind::LiftOff};
}

class Simulation
{
public:
  Simulation(const Controller& controller, const RobotParams& params, const SimConfig& config)
    : controller_(controller.clone()), params_(params), config_(config)
  {
  }

  Trajectory run(const State& initial)
  {
    const EndEffector ee = forward_kinematics(initial, params_);
    if (ee.gap < -tolerance::contact)
    {
      throw Error(ErrorKind::InvalidArgument,
                  "initial state penetrates the belt by " + std::to_string(-ee.gap) + " m");
    }
    HybridState h;
    h.x = initial;

    phase_ = Phase::Flight;
    if (ee.gap <= tolerance::contact)
    {
      if (ee.z_n_dot < -tolerance::contact_rate)
      {
        h.x = project_onto_contact(h.x, params_, false);
        record_initial(h);
        if (config_.t_end <= 0.0) return std::move(traj_);
        touchdown(h, Vec2::Zero());
      }
      else if (ee.z_n_dot <= tolerance::contact_rate)
      {
        h.x = project_onto_contact(h.x, params_, true);
        record_initial(h);
        const Decision d = decide_contact(h, *controller_, params_, config_, std::nullopt, false);
        if (config_.t_end <= 0.0)
        {
          // Label the lone sample with the mode the run would start in.
          const bool sliding = d.action == Decision::Action::Sliding;
          if (!traj_.samples.empty() && (sliding || d.action == Decision::Action::Stick))
          {
            slip_sign_ = sliding ? d.slip_sign : 0;
            traj_.samples.back() = sample_for(h, sliding ? Phase::Sliding : Phase::Stick);
          }
          return std::move(traj_);
        }
        apply(h, d, Vec2::Zero());
      }
      else
      {
        record_initial(h);
      }
    }
    else
    {
      record_initial(h);
    }
    if (config_.t_end <= 0.0) return std::move(traj_);
    if (!traj_.samples.empty() && traj_.samples.back().t == h.t)
    {
      traj_.samples.back() = sample_for(h, phase_);
    }

    while (h.t < config_.t_end)
    {
      PhaseSegment seg;
      switch (phase_)
      {
        case Phase::Flight: seg = step_flight(h, *controller_, params_, config_); break;
        case Phase::Sliding: seg = step_sliding(h, slip_sign_, *controller_, params_, config_); break;
        case Phase::Stick: seg = step_stick(h, *controller_, params_, config_); break;
      }
      append(seg.samples);
      for (const Event& e : seg.events) traj_.events.push_back(e);
      h = seg.end;
      switch (seg.reason)
      {
        case PhaseEnd::Horizon: return std::move(traj_);
        case PhaseEnd::Touchdown:
        {
          h.x = project_onto_contact(h.x, params_, false);
          touchdown(h, seg.end_accel);
          break;
        }
        case PhaseEnd::LiftOff:
        {
          log(h.t, EventKind::LiftOff, h.x, h.x, seg.end_accel);
          enter(Phase::Flight, 0, h);
          break;
        }
        case PhaseEnd::ParadoxBoundary:
        {
          h.x = project_onto_contact(h.x, params_, true);
          log(h.t, EventKind::ParadoxBoundary, h.x, h.x, seg.end_accel);
          apply(h, decide_contact(h, *controller_, params_, config_, slip_sign_, true), seg.end_accel);
          break;
        }
        case PhaseEnd::SlipEnd:
        {
          h.x = project_onto_contact(h.x, params_, true);
          const int before = slip_sign_;
          const Decision d = decide_contact(h, *controller_, params_, config_, std::nullopt, false);
          if (d.action == Decision::Action::Sliding && d.slip_sign == before)
          {
            // Numerical graze of zero slip; continue in the same direction
            // from the far side would contradict the crossing, so reverse.
            apply(h, decide_contact(h, *controller_, params_, config_, -before, false), seg.end_accel);
          }
          else
          {
            apply(h, d, seg.end_accel);
          }
          break;
        }
        case PhaseEnd::SlipOnset:
        {
          h.x = project_onto_contact(h.x, params_, true);
          const PhaseEval stick =
            PhaseDynamics(Phase::Stick, 0, *controller_, params_).evaluate(h.t, pack(h));
          const int sign = stick.force.x() > 0.0 ? -1 : 1;
          log(h.t, EventKind::SlipStart, h.x, h.x, seg.end_accel);
          apply(h, decide_contact(h, *controller_, params_, config_, sign, false), seg.end_accel);
          break;
        }
      }
      if (traj_.events.size() > config_.max_events)
      {
        throw Error(ErrorKind::IntegratorFailure,
                    "event budget exhausted at t = " + std::to_string(h.t));
      }
    }
    return std::move(traj_);
  }

private:
  void record_initial(const HybridState& h)
  {
    if (config_.record_start > 0.0) return;
    traj_.samples.push_back(sample_for(h, phase_guess(h)));
  }

  Phase phase_guess(const HybridState& h) const
  {
    return on_contact_manifold(forward_kinematics(h.x, params_)) ? phase_ : Phase::Flight;
  }

  Sample sample_for(const HybridState& h, Phase phase) const
  {
    return PhaseDynamics(phase, slip_sign_ == 0 ? 1 : slip_sign_, *controller_, params_)
      .sample(h.t, pack(h));
  }

  void append(std::vector<Sample>& samples)
  {
    for (Sample& s : samples) push_sample(std::move(s));
  }

  void push_sample(Sample s)
  {
    if (!traj_.samples.empty() && !(s.t > traj_.samples.back().t))
    {
      if (s.t == traj_.samples.back().t) traj_.samples.back() = std::move(s);
      return;
    }
    traj_.samples.push_back(std::move(s));
  }

  void log(double t, EventKind kind, const State& pre, const State& post, const Vec2& pre_accel)
  {
    traj_.events.push_back(Event{t, kind, pre, post, pre_accel});
    if (t == last_event_time_)
    {
      if (++same_time_ > 64)
      {
        throw Error(ErrorKind::IntegratorFailure,
                    "no progress: repeated mode transitions at t = " + std::to_string(t));
      }
    }
    else
    {
      last_event_time_ = t;
      same_time_ = 0;
    }
  }

  void enter(Phase phase, int sign, const HybridState& h)
  {
    phase_ = phase;
    slip_sign_ = sign;
    if (config_.output_dt <= 0.0 && h.t >= config_.record_start)
    {
      push_sample(sample_for(h, phase));
    }
  }

  void touchdown(HybridState& h, const Vec2& pre_accel)
  {
    const State pre = h.x;
    const double approach = -forward_kinematics(pre, params_).z_n_dot;
    const double e = approach < config_.zeno_speed ? 0.0 : config_.restitution;
    h.x = resolve_impact(pre, params_, e, config_.impulse_cap).post;
    log(h.t, EventKind::Touchdown, pre, h.x, pre_accel);
    after_impulse(h, pre_accel);
  }

  void after_impulse(HybridState& h, const Vec2& pre_accel)
  {
    const EndEffector ee = forward_kinematics(h.x, params_);
    if (ee.z_n_dot > tolerance::contact_rate)
    {
      enter(Phase::Flight, 0, h);
      return;
    }
    h.x = project_onto_contact(h.x, params_, true);
    apply(h, decide_contact(h, *controller_, params_, config_, std::nullopt, false), pre_accel);
  }

  void apply(HybridState& h, const Decision& d, const Vec2& pre_accel)
  {
    switch (d.action)
    {
      case Decision::Action::Flight:
        log(h.t, d.flight_kind, h.x, h.x, pre_accel);
        enter(Phase::Flight, 0, h);
        return;
      case Decision::Action::Sliding:
        if (phase_ == Phase::Sliding && slip_sign_ != d.slip_sign)
        {
          log(h.t, EventKind::SlipReversal, h.x, h.x, pre_accel);
        }
        enter(Phase::Sliding, d.slip_sign, h);
        return;
      case Decision::Action::Stick:
        log(h.t, EventKind::StickStart, h.x, h.x, pre_accel);
        enter(Phase::Stick, 0, h);
        return;
      case Decision::Action::Impulse:
      {
        const State pre = h.x;
        h.x = resolve_impact(pre, params_, config_.restitution, config_.impulse_cap).post;
        log(h.t, EventKind::ImpactWithoutCollision, pre, h.x, pre_accel);
        after_impulse(h, pre_accel);
        return;
      }
    }
  }

  std::unique_ptr<Controller> controller_;
  RobotParams params_;
  SimConfig config_;
  Trajectory traj_;
  Phase phase_ = Phase::Flight;
  int slip_sign_ = 1;
  double last_event_time_ = -1.0;
  int same_time_ = 0;
};

}  // namespace

Trajectory simulate(const State& initial, const Controller& controller, const RobotParams& params,
                    const SimConfig& config)
{
  params.validate();
  config.validate();
  if (!initial.finite())
  {
    throw Error(ErrorKind::InvalidArgument, "initial state is not finite");
  }
  Simulation sim(controller, params, config);
  return sim.run(initial);
}

}  // namespace painleve
