#include "painleve/contact.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <cstdint>
#include <string>

#include "painleve/error.hpp"

namespace painleve
{

std::string_view to_string(ContactMode mode)
{
  switch (mode)
  {
    case ContactMode::Sliding: return "Sliding";
    case ContactMode::Flight: return "Flight";
    case ContactMode::Indeterminate: return "Indeterminate";
    case ContactMode::Inconsistent: return "Inconsistent";
    case ContactMode::Stick: return "Stick";
  }
  return "Unknown";
}

std::optional<ContactMode> contact_mode_from_string(std::string_view name)
{
  for (auto mode : {ContactMode::Sliding, ContactMode::Flight, ContactMode::Indeterminate,
                    ContactMode::Inconsistent, ContactMode::Stick})
  {
    if (to_string(mode) == name)
    {
      return mode;
    }
  }
  return std::nullopt;
}

double slip_velocity(const EndEffector& ee, const RobotParams& params)
{
  return ee.z_t_dot - params.v_belt;
}

Vec2 free_tip_acceleration(const DynamicsTerms& terms, const ControlTorques& u)
{
  return -terms.J * terms.M_inv * (terms.w + terms.c - u.generalized()) + terms.s;
}

PainleveCoefficients painleve_pb(const DynamicsTerms& terms, const ControlTorques& u, double mu,
                                 int slip_sign)
{
  const Vec2 j2 = terms.J.row(1).transpose();
  PainleveCoefficients pb;
  pb.b = -j2.dot(terms.M_inv * (terms.w + terms.c - u.generalized())) + terms.s.y();
  pb.p = -mu * static_cast<double>(slip_sign) * terms.Q(1, 0) + terms.Q(1, 1);
  return pb;
}

PainleveCoefficients painleve_pb(const State& state, const ControlTorques& u,
                                 const RobotParams& params)
{
  const double z_r_dot = slip_velocity(forward_kinematics(state, params), params);
  if (!(std::abs(z_r_dot) > tolerance::slip))
  {
    throw Error(ErrorKind::AmbiguousSlip,
                "slip velocity " + std::to_string(z_r_dot) + " inside stick tolerance");
  }
  return painleve_pb(eval_terms(state, params), u, params.mu, z_r_dot > 0.0 ? 1 : -1);
}

ContactMode mode_from_signs(double p, double b, bool* degenerate)
{
  const bool p_tie = std::abs(p) < tolerance::sign;
  const bool b_tie = std::abs(b) < tolerance::sign;
  if (degenerate != nullptr)
  {
    *degenerate = p_tie || b_tie;
  }
  const bool pressing = !b_tie && b < 0.0;
  if (p_tie)
  {
    return pressing ? ContactMode::Sliding : ContactMode::Flight;
  }
  if (p > 0.0)
  {
    return pressing ? ContactMode::Sliding : ContactMode::Flight;
  }
  return pressing ? ContactMode::Inconsistent : ContactMode::Indeterminate;
}

StickForces stick_forces(const DynamicsTerms& terms, const ControlTorques& u, double mu)
{
  StickForces out;
  const double det = terms.Q.determinant();
  if (!(std::abs(det) > 1e-12 * terms.Q.squaredNorm()))
  {
    return out;
  }
  out.solvable = true;
  out.f = -terms.Q.inverse() * free_tip_acceleration(terms, u);
  out.sustainable = out.f.y() > 0.0 && std::abs(out.f.x()) <= mu * out.f.y();
  return out;
}

bool on_contact_manifold(const EndEffector& ee)
{
  return std::abs(ee.gap) <= tolerance::contact && std::abs(ee.z_n_dot) <= tolerance::contact_rate;
}

namespace
{

ContactState classify_slipping(const DynamicsTerms& terms, const ControlTorques& u, double mu,
                               int slip_sign, double z_r_dot)
{
  ContactState cs;
  cs.z_r_dot = z_r_dot;
  cs.slip_sign = slip_sign;
  const PainleveCoefficients pb = painleve_pb(terms, u, mu, slip_sign);
  cs.p = pb.p;
  cs.b = pb.b;
  cs.mode = mode_from_signs(pb.p, pb.b, &cs.degenerate);
  if (cs.mode == ContactMode::Sliding)
  {
    cs.f_n = -pb.b / std::max(pb.p, tolerance::sign);
    cs.f_t = -mu * static_cast<double>(slip_sign) * cs.f_n;
  }
  return cs;
}

}  // namespace

ContactState classify_mode(const State& state, const ControlTorques& u, const RobotParams& params,
                           bool stick_enabled)
{
  const EndEffector ee = forward_kinematics(state, params);
  const double z_r_dot = slip_velocity(ee, params);
  const DynamicsTerms terms = eval_terms(state, params);
  const int nominal_sign = z_r_dot >= 0.0 ? 1 : -1;

  if (!on_contact_manifold(ee))
  {
    ContactState cs;
    cs.mode = ContactMode::Flight;
    cs.z_r_dot = z_r_dot;
    cs.slip_sign = nominal_sign;
    const PainleveCoefficients pb = painleve_pb(terms, u, params.mu, nominal_sign);
    cs.p = pb.p;
    cs.b = pb.b;
    return cs;
  }

  if (std::abs(z_r_dot) > tolerance::slip)
  {
    return classify_slipping(terms, u, params.mu, nominal_sign, z_r_dot);
  }

  const StickForces stick = stick_forces(terms, u, params.mu);
  if (stick_enabled && stick.sustainable)
  {
    ContactState cs;
    cs.mode = ContactMode::Stick;
    cs.z_r_dot = z_r_dot;
    cs.slip_sign = 0;
    cs.f_t = stick.f.x();
    cs.f_n = stick.f.y();
    const PainleveCoefficients pb = painleve_pb(terms, u, params.mu, nominal_sign);
    cs.p = pb.p;
    cs.b = pb.b;
    return cs;
  }
  // Slip develops opposite to the friction the stick solve asked for.
  int sign = nominal_sign;
  if (stick.solvable && stick.f.x() != 0.0)
  {
    sign = stick.f.x() > 0.0 ? -1 : 1;
  }
  return classify_slipping(terms, u, params.mu, sign, z_r_dot);
}

State contact_closure(double theta1, double theta1_dot, const RobotParams& params, Elbow elbow)
{
  const double c2 = params.H / params.l - std::cos(theta1);
  if (!(std::abs(c2) <= 1.0))
  {
    throw Error(ErrorKind::NoContactSolution,
                "no contact posture for theta1 = " + std::to_string(rad_to_deg(theta1)) + " deg");
  }
  const double root = std::acos(c2);
  State x;
  x.theta1 = theta1;
  x.theta1_dot = theta1_dot;
  x.theta2 = elbow == Elbow::Up ? root : -root;
  const double s2 = std::sin(x.theta2);
  const double lever = std::sin(theta1) * theta1_dot;
  if (std::abs(s2) < 1e-12)
  {
    if (lever != 0.0)
    {
      throw Error(ErrorKind::RateSingular, "theta2_dot undefined at sin(theta2) = 0");
    }
    x.theta2_dot = 0.0;
    return x;
  }
  x.theta2_dot = -lever / s2;
  return x;
}

State project_onto_contact(const State& state, const RobotParams& params, bool zero_normal_rate)
{
  State x = state;
  const double l = params.l;
  for (int iter = 0; iter < 8; ++iter)
  {
    const double gap = params.H - l * (std::cos(x.theta1) + std::cos(x.theta2));
    const double g1 = l * std::sin(x.theta1);
    const double g2 = l * std::sin(x.theta2);
    const double norm2 = g1 * g1 + g2 * g2;
    if (norm2 <= 0.0)
    {
      break;
    }
    x.theta1 -= gap * g1 / norm2;
    x.theta2 -= gap * g2 / norm2;
    if (std::abs(gap) < 1e-15)
    {
      break;
    }
  }
  if (zero_normal_rate)
  {
    const DynamicsTerms t = eval_terms(x, params);
    const Vec2 j2 = t.J.row(1).transpose();
    const Vec2 minv_j2 = t.M_inv * j2;
    const double gain = j2.dot(minv_j2);
    if (gain > 0.0)
    {
      const Vec2 qd = x.q_dot() - (j2.dot(x.q_dot()) / gain) * minv_j2;
      x.theta1_dot = qd.x();
      x.theta2_dot = qd.y();
    }
  }
  return x;
}

RegionMap region_map(const std::vector<double>& theta1_grid, const std::vector<double>& theta1_dot_grid,
                     const RobotParams& params, const ControlTorques& u, Elbow elbow)
{
  for (double v : theta1_grid)
  {
    if (!std::isfinite(v)) throw Error(ErrorKind::InvalidArgument, "non-finite theta1 grid value");
  }
  for (double v : theta1_dot_grid)
  {
    if (!std::isfinite(v)) throw Error(ErrorKind::InvalidArgument, "non-finite theta1_dot grid value");
  }

  RegionMap map;
  map.theta1 = theta1_grid;
  map.theta1_dot = theta1_dot_grid;
  map.modes.resize(theta1_grid.size() * theta1_dot_grid.size());

  // Signed p and b at a manifold point; nullopt where the closure fails.
  auto coefficients = [&](double th1, double th1_dot) -> std::optional<PainleveCoefficients> {
    try
    {
      const State x = contact_closure(th1, th1_dot, params, elbow);
      const double z_r_dot = slip_velocity(forward_kinematics(x, params), params);
      return painleve_pb(eval_terms(x, params), u, params.mu, z_r_dot >= 0.0 ? 1 : -1);
    }
    catch (const Error&)
    {
      return std::nullopt;
    }
  };

  for (std::size_t i = 0; i < theta1_grid.size(); ++i)
  {
    for (std::size_t j = 0; j < theta1_dot_grid.size(); ++j)
    {
      try
      {
        const State x = contact_closure(theta1_grid[i], theta1_dot_grid[j], params, elbow);
        map.modes[i * theta1_dot_grid.size() + j] = classify_mode(x, u, params).mode;
      }
      catch (const Error&)
      {
        map.modes[i * theta1_dot_grid.size() + j] = std::nullopt;
      }
    }
  }

  // Zero-level sets located by bisection along grid edges.
  auto locate = [&](std::array<double, 2> a, std::array<double, 2> b, bool use_p) {
    auto value = [&](double s) -> std::optional<double> {
      const auto pb = coefficients(a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1]));
      if (!pb) return std::nullopt;
      return use_p ? pb->p : pb->b;
    };
    const auto va = value(0.0);
    const auto vb = value(1.0);
    if (!va || !vb || (*va > 0.0) == (*vb > 0.0)) return;
    double lo = 0.0;
    double hi = 1.0;
    const bool lo_positive = *va > 0.0;
    for (int it = 0; it < 60; ++it)
    {
      const double mid = 0.5 * (lo + hi);
      const auto vm = value(mid);
      if (!vm) return;
      if ((*vm > 0.0) == lo_positive) lo = mid;
      else hi = mid;
    }
    const double s = 0.5 * (lo + hi);
    (use_p ? map.p_zero : map.b_zero)
      .push_back({a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])});
  };

  for (std::size_t i = 0; i < theta1_grid.size(); ++i)
  {
    for (std::size_t j = 0; j < theta1_dot_grid.size(); ++j)
    {
      const std::array<double, 2> here{theta1_grid[i], theta1_dot_grid[j]};
      if (i + 1 < theta1_grid.size())
      {
        const std::array<double, 2> right{theta1_grid[i + 1], theta1_dot_grid[j]};
        locate(here, right, true);
        locate(here, right, false);
      }
      if (j + 1 < theta1_dot_grid.size())
      {
        const std::array<double, 2> up{theta1_grid[i], theta1_dot_grid[j + 1]};
        locate(here, up, true);
        locate(here, up, false);
      }
    }
  }
  return map;
}

double manifold_p(double z_t, const RobotParams& params, Elbow elbow)
{
  const JointAngles q = inverse_kinematics(z_t, -params.H, elbow, params);
  const State x{q.theta1, 0.0, q.theta2, 0.0};
  return painleve_pb(eval_terms(x, params), ControlTorques{}, params.mu, 1).p;
}

AdmissibleInterval admissible_range(const RobotParams& params, Elbow elbow)
{
  if (!(params.mu > 0.0))
  {
    throw Error(ErrorKind::InvalidArgument, "admissible range requires mu > 0");
  }
  const double reach = std::sqrt(4.0 * params.l * params.l - params.H * params.H);
  constexpr int samples = 4000;
  std::vector<double> z(samples + 1);
  std::vector<double> p(samples + 1);
  for (int i = 0; i <= samples; ++i)
  {
    z[i] = -reach + 2.0 * reach * static_cast<double>(i) / samples;
    p[i] = manifold_p(z[i], params, elbow);
  }

  // Longest run of consecutive samples with p > 0.
  int best_begin = -1;
  int best_end = -1;
  for (int i = 0; i <= samples;)
  {
    if (!(p[i] > 0.0))
    {
      ++i;
      continue;
    }
    int j = i;
    while (j + 1 <= samples && p[j + 1] > 0.0) ++j;
    if (best_begin < 0 || j - i > best_end - best_begin)
    {
      best_begin = i;
      best_end = j;
    }
    i = j + 1;
  }

  AdmissibleInterval out;
  out.reach = reach;
  if (best_begin < 0)
  {
    out.lower = out.upper = 0.0;
    out.lower_closed = out.upper_closed = false;
    return out;
  }

  auto root = [&](double a, double b) {
    auto f = [&](double zt) { return manifold_p(zt, params, elbow); };
    auto tol = [](double lo, double hi) { return std::abs(hi - lo) < 1e-10; };
    std::uintmax_t iters = 200;
    const auto bracket = boost::math::tools::toms748_solve(f, a, b, tol, iters);
    return 0.5 * (bracket.first + bracket.second);
  };

  if (best_begin == 0)
  {
    out.lower = -reach;
    out.lower_closed = true;
  }
  else
  {
    out.lower = root(z[best_begin - 1], z[best_begin]);
    out.lower_closed = false;
  }
  if (best_end == samples)
  {
    out.upper = reach;
    out.upper_closed = true;
  }
  else
  {
    out.upper = root(z[best_end], z[best_end + 1]);
    out.upper_closed = false;
  }
  return out;
}

}  // namespace painleve
