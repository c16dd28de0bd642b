#include "painleve/bifurcation.hpp"

#include <algorithm>
#include <atomic>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <mutex>
#include <random>
#include <thread>

#include "painleve/contact.hpp"
#include "painleve/error.hpp"

namespace painleve
{

std::optional<InitialCondition> preset(std::string_view name, const RobotParams& params)
{
  State x;
  if (name == "x0_a")
    x = {deg_to_rad(32.0), 0.0, deg_to_rad(18.27), 0.0};
  else if (name == "x0_d")
    x = {deg_to_rad(-11.4), 0.0, deg_to_rad(-35.1), 0.0};
  else if (name == "x0_u")
    x = {deg_to_rad(-35.1), 0.0, deg_to_rad(-11.4), 0.0};
  else
    return std::nullopt;
  // The printed angles are rounded to 0.01 deg; snap them onto the belt.
  return InitialCondition{std::string(name), project_onto_contact(x, params, true)};
}

std::vector<std::string> preset_names() { return {"x0_a", "x0_d", "x0_u"}; }

std::vector<InitialCondition> random_initial_conditions(std::size_t count, std::uint64_t seed,
                                                        const RobotParams& params)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(deg_to_rad(-40.0), deg_to_rad(40.0));
  std::bernoulli_distribution up(0.5);
  std::vector<InitialCondition> out;
  out.reserve(count);
  std::size_t attempts = 0;
  while (out.size() < count)
  {
    if (++attempts > 1000 * (count + 1))
    {
      throw Error(ErrorKind::NoContactSolution, "no reachable contact posture in the sampling range");
    }
    const double theta1 = angle(rng);
    const Elbow elbow = up(rng) ? Elbow::Up : Elbow::Down;
    try
    {
      const State x = contact_closure(theta1, 0.0, params, elbow);
      out.push_back({"rand" + std::to_string(out.size()), x});
    }
    catch (const Error&)
    {
      // theta1 outside the reachable band; redraw
    }
  }
  return out;
}

std::vector<double> grid_values(double min, double max, double step)
{
  if (!(step > 0.0) || !(max >= min))
  {
    throw Error(ErrorKind::InvalidArgument, "grid needs step > 0 and max >= min");
  }
  const auto n = static_cast<std::size_t>(std::floor((max - min) / step + 1e-6)) + 1;
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = min + static_cast<double>(i) * step;
  return v;
}

void SweepSpec::validate() const
{
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorKind::InvalidArgument, std::string("sweep spec violates ") + what);
  };
  require(mu_step > 0.0 && v_step > 0.0, "steps > 0");
  require(mu_max >= mu_min && v_max >= v_min, "max >= min");
  require(mu_min > 0.0, "mu > 0");
  require(transient > 0.0 && record > 0.0, "transient, record > 0");
  require(!initial.empty() || random_count > 0, "at least one initial condition");
  require(random_count == 0 || seed.has_value(), "seed set when random initial conditions are used");
  require(bounce_threshold > 0.0, "bounce_threshold > 0");
  require(reference_rate > 0.0, "reference_rate > 0");
  controller.validate();
}

std::string_view to_string(Classification::Kind kind)
{
  switch (kind)
  {
    case Classification::Kind::NoBounce: return "no-bounce";
    case Classification::Kind::Periodic: return "periodic";
    case Classification::Kind::Chaotic: return "chaotic";
    case Classification::Kind::InsufficientData: return "insufficient-data";
  }
  return "unknown";
}

namespace
{

struct Knot
{
  double t;
  double theta1;
  double rate;
  double accel;
};

/// Samples and pre-jump event states merged in time order. At an event time
/// the pre state comes first, then the post state.
std::vector<Knot> knots_of(const Trajectory& tr, double t_from)
{
  std::vector<Knot> knots;
  knots.reserve(tr.samples.size() + 2 * tr.events.size());
  std::size_t e = 0;
  for (const Sample& s : tr.samples)
  {
    while (e < tr.events.size() && tr.events[e].t <= s.t)
    {
      const Event& ev = tr.events[e++];
      if (ev.t >= t_from) knots.push_back({ev.t, ev.pre.theta1, ev.pre.theta1_dot, ev.pre_accel.x()});
    }
    if (s.t >= t_from) knots.push_back({s.t, s.x.theta1, s.x.theta1_dot, s.accel.x()});
  }
  return knots;
}

}  // namespace

std::vector<SectionPoint> poincare_section(const Trajectory& trajectory, double t_from, double event_tol)
{
  std::vector<SectionPoint> out;
  const std::vector<Knot> knots = knots_of(trajectory, t_from);
  for (std::size_t k = 1; k < knots.size(); ++k)
  {
    const Knot& a = knots[k - 1];
    const Knot& b = knots[k];
    if (!(a.rate < 0.0 && b.rate >= 0.0)) continue;
    const double h = b.t - a.t;
    if (h <= 0.0)
    {
      out.push_back({b.t, b.theta1});
      continue;
    }
    // Cubic Hermite of theta1_dot on [a, b]; its integral gives theta1.
    auto rate_at = [&](double s) {
      const double s2 = s * s;
      const double s3 = s2 * s;
      return (2 * s3 - 3 * s2 + 1) * a.rate + (s3 - 2 * s2 + s) * h * a.accel + (-2 * s3 + 3 * s2) * b.rate +
             (s3 - s2) * h * b.accel;
    };
    auto theta_at = [&](double s) {
      const double s2 = s * s;
      const double s3 = s2 * s;
      const double s4 = s3 * s;
      return a.theta1 + h * ((s4 / 2 - s3 + s) * a.rate + (s4 / 4 - 2 * s3 / 3 + s2 / 2) * h * a.accel +
                             (-s4 / 2 + s3) * b.rate + (s4 / 4 - s3 / 3) * h * b.accel);
    };
    double s_root = 1.0;
    if (rate_at(1.0) > 0.0)
    {
      std::uintmax_t iters = 100;
      const auto tol = [&](double lo, double hi) { return (hi - lo) * h <= event_tol; };
      try
      {
        const auto br = boost::math::tools::toms748_solve(rate_at, 0.0, 1.0, tol, iters);
        s_root = 0.5 * (br.first + br.second);
      }
      catch (const std::exception&)
      {
        s_root = 1.0;
      }
    }
    out.push_back({a.t + s_root * h, theta_at(s_root)});
  }
  return out;
}

double max_theta1_dot(const Trajectory& trajectory, double t_from)
{
  double peak = -std::numeric_limits<double>::infinity();
  for (const Sample& s : trajectory.samples)
  {
    if (s.t >= t_from) peak = std::max(peak, s.x.theta1_dot);
  }
  for (const Event& e : trajectory.events)
  {
    if (e.t >= t_from) peak = std::max({peak, e.pre.theta1_dot, e.post.theta1_dot});
  }
  return peak;
}

Classification classify_attractor(const std::vector<double>& points, double tol, int n_max)
{
  const std::size_t size = points.size();
  if (size < 8) return {Classification::Kind::InsufficientData, 0};
  for (int n = 1; n <= n_max; ++n)
  {
    const auto un = static_cast<std::size_t>(n);
    if (size < 4 * un) break;
    bool periodic = true;
    for (std::size_t i = size - 3 * un; i < size && periodic; ++i)
    {
      periodic = std::abs(points[i] - points[i - un]) <= tol;
    }
    if (periodic) return {Classification::Kind::Periodic, n};
  }
  return {Classification::Kind::Chaotic, 0};
}

SweepPoint run_point(const SweepSpec& spec, const RobotParams& params, const SimConfig& config,
                     const InitialCondition& ic)
{
  SweepPoint pt;
  pt.mu = params.mu;
  pt.v_belt = params.v_belt;
  pt.ic_label = ic.label;

  SimConfig cfg = config;
  cfg.t_end = spec.transient + spec.record;
  cfg.record_start = spec.transient;
  cfg.output_dt = 0.0;
  try
  {
    const double z0 = forward_kinematics(ic.x, params).z_t;
    ReferenceProfile profile = ReferenceProfile::hold(z0);
    if (spec.reference_target)
    {
      profile.kind = ProfileKind::Ramp;
      profile.end = *spec.reference_target;
      profile.duration = std::max(std::abs(profile.end - z0) / spec.reference_rate, 1e-3);
    }
    const auto controller = make_controller(spec.controller, profile, elbow_of(ic.x), params);
    const Trajectory tr = simulate(ic.x, *controller, params, cfg);
    pt.max_theta1_dot = max_theta1_dot(tr, spec.transient);
    pt.bounce = pt.max_theta1_dot > spec.bounce_threshold;
    for (const SectionPoint& s : poincare_section(tr, spec.transient, cfg.event_tol))
    {
      pt.poincare.push_back(s.theta1);
    }
    pt.classification = pt.bounce ? classify_attractor(pt.poincare) : Classification{};
  }
  catch (const Error& e)
  {
    pt.error = std::string(to_string(e.kind())) + ": " + e.what();
  }
  return pt;
}

SweepResult sweep(const SweepSpec& spec, const RobotParams& base, const SimConfig& config, std::size_t jobs)
{
  spec.validate();
  base.validate();
  config.validate();
  std::vector<InitialCondition> ics = spec.initial;
  if (spec.random_count > 0)
  {
    for (auto& ic : random_initial_conditions(spec.random_count, *spec.seed, base)) ics.push_back(ic);
  }
  const std::vector<double> mus = grid_values(spec.mu_min, spec.mu_max, spec.mu_step);
  const std::vector<double> vs = grid_values(spec.v_min, spec.v_max, spec.v_step);

  struct Task
  {
    double mu;
    double v;
    std::size_t ic;
  };
  std::vector<Task> tasks;
  for (double mu : mus)
    for (double v : vs)
      for (std::size_t i = 0; i < ics.size(); ++i) tasks.push_back({mu, v, i});

  SweepResult result;
  result.points.resize(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < tasks.size(); k = next++)
    {
      RobotParams p = base;
      p.mu = tasks[k].mu;
      p.v_belt = tasks[k].v;
      // Presets were projected with the base parameters; geometry does not
      // depend on mu or v_belt, so they stay on the manifold.
      result.points[k] = run_point(spec, p, config, ics[tasks[k].ic]);
    }
  };
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, tasks.size());
  if (jobs <= 1)
  {
    worker();
  }
  else
  {
    std::vector<std::jthread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  return result;
}

SweepResult closed_loop_sweep(const SweepSpec& spec, const RobotParams& base, const SimConfig& config,
                              std::size_t jobs)
{
  return sweep(spec, base, config, jobs);
}

}  // namespace painleve
