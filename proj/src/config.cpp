#include "painleve/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "painleve/contact.hpp"
#include "painleve/error.hpp"

namespace painleve
{

using nlohmann::json;

namespace
{

[[noreturn]] void fail(const std::string& field, const std::string& what)
{
  throw Error(ErrorKind::Validation, field + ": " + what);
}

/// Typed access with field-path context in every error.
class Block
{
public:
  Block(const json& node, std::string path) : node_(node), path_(std::move(path))
  {
    if (!node_.is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string field(std::string_view key) const
  {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

  bool has(std::string_view key) const { return node_.contains(std::string(key)); }

  const json& at(std::string_view key) const
  {
    if (!has(key)) fail(field(key), "required field is missing");
    return node_.at(std::string(key));
  }

  double number(std::string_view key) const
  {
    const json& v = at(key);
    if (!v.is_number()) fail(field(key), "expected a number");
    return v.get<double>();
  }

  double number(std::string_view key, double fallback) const { return has(key) ? number(key) : fallback; }

  std::size_t count(std::string_view key, std::size_t fallback) const
  {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
    {
      fail(field(key), "expected a non-negative integer");
    }
    return v.get<std::size_t>();
  }

  bool flag(std::string_view key, bool fallback) const
  {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_boolean()) fail(field(key), "expected true or false");
    return v.get<bool>();
  }

  std::string text(std::string_view key, std::string fallback) const
  {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_string()) fail(field(key), "expected a string");
    return v.get<std::string>();
  }

  std::array<double, 3> triple(std::string_view key) const
  {
    const json& v = at(key);
    if (!v.is_array() || v.size() != 3) fail(field(key), "expected [min, max, step]");
    std::array<double, 3> out{};
    for (std::size_t i = 0; i < 3; ++i)
    {
      if (!v[i].is_number()) fail(field(key), "expected numbers");
      out[i] = v[i].get<double>();
    }
    return out;
  }

  Block child(std::string_view key) const { return Block(at(key), field(key)); }

  void reject_unknown(std::initializer_list<std::string_view> known) const
  {
    for (const auto& [key, value] : node_.items())
    {
      bool ok = false;
      for (std::string_view k : known) ok = ok || k == key;
      if (!ok) fail(field(key), "unknown field");
    }
  }

private:
  const json& node_;
  std::string path_;
};

template <typename Fn>
void checked(const std::string& field, Fn&& fn)
{
  try
  {
    fn();
  }
  catch (const Error& e)
  {
    if (e.kind() == ErrorKind::Validation) throw;
    fail(field, e.what());
  }
}

Elbow parse_elbow(const Block& b, std::string_view key, Elbow fallback)
{
  const std::string v = b.text(key, fallback == Elbow::Up ? "up" : "down");
  if (v == "up") return Elbow::Up;
  if (v == "down") return Elbow::Down;
  fail(b.field(key), "expected \"up\" or \"down\"");
}

}  // namespace

double angle_from_config(double value, Units units)
{
  return units == Units::Degrees ? deg_to_rad(value) : value;
}

double angle_to_config(double radians, Units units)
{
  return units == Units::Degrees ? rad_to_deg(radians) : radians;
}

json load_config_file(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in) fail(path.string(), "cannot open config file");
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  try
  {
    return json::parse(text);
  }
  catch (const json::parse_error& e)
  {
    const std::size_t pos = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    std::size_t line = 1;
    std::size_t column = 1;
    for (std::size_t i = 0; i < pos; ++i)
    {
      if (text[i] == '\n')
      {
        ++line;
        column = 1;
      }
      else
      {
        ++column;
      }
    }
    fail(path.string() + ":" + std::to_string(line) + ":" + std::to_string(column), "JSON parse error");
  }
}

void apply_override(json& doc, std::string_view assignment)
{
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0)
  {
    fail(std::string(assignment), "override must look like key.path=value");
  }
  const std::string path(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  json value;
  try
  {
    value = json::parse(raw);
  }
  catch (const json::parse_error&)
  {
    value = raw;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true)
  {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) fail(path, "empty path component");
    if (!node->is_object()) fail(path, "override descends into a non-object");
    if (dot == std::string::npos)
    {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

std::string config_hash(const json& doc)
{
  const std::string canonical = doc.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical)
  {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunConfig parse_config(const json& doc)
{
  RunConfig cfg;
  cfg.source = doc;
  const Block root(doc, "");
  root.reject_unknown({"units", "seed", "robot", "sim", "controller", "reference", "scenario", "sweep", "regions",
                       "ztmax", "output"});

  const std::string units = root.text("units", "degrees");
  if (units == "degrees")
    cfg.units = Units::Degrees;
  else if (units == "radians")
    cfg.units = Units::Radians;
  else
    fail("units", "expected \"degrees\" or \"radians\"");

  if (root.has("seed"))
  {
    const json& s = root.at("seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0))
    {
      fail("seed", "expected a non-negative integer");
    }
    cfg.seed = s.get<std::uint64_t>();
  }

  {
    const Block r = root.child("robot");
    r.reject_unknown({"m", "l", "sigma", "k", "H", "alpha0", "mu", "v_belt", "g"});
    cfg.robot.m = r.number("m");
    cfg.robot.l = r.number("l");
    cfg.robot.sigma = r.number("sigma");
    cfg.robot.k = r.number("k");
    cfg.robot.H = r.number("H");
    cfg.robot.alpha0 = angle_from_config(r.number("alpha0"), cfg.units);
    cfg.robot.mu = r.number("mu");
    cfg.robot.v_belt = r.number("v_belt");
    cfg.robot.g = r.number("g", cfg.robot.g);
    checked("robot", [&] { cfg.robot.validate(); });
  }

  if (root.has("sim"))
  {
    const Block s = root.child("sim");
    s.reject_unknown({"t_end", "rel_tol", "abs_tol", "event_tol", "restitution", "output_dt", "stick_enabled",
                      "max_step", "record_start", "impulse_cap", "zeno_speed", "max_events"});
    SimConfig& c = cfg.sim;
    c.t_end = s.number("t_end", c.t_end);
    c.rel_tol = s.number("rel_tol", c.rel_tol);
    c.abs_tol = s.number("abs_tol", c.abs_tol);
    c.event_tol = s.number("event_tol", c.event_tol);
    c.restitution = s.number("restitution", c.restitution);
    c.output_dt = s.number("output_dt", c.output_dt);
    c.stick_enabled = s.flag("stick_enabled", c.stick_enabled);
    c.max_step = s.number("max_step", c.max_step);
    c.record_start = s.number("record_start", c.record_start);
    c.impulse_cap = s.number("impulse_cap", c.impulse_cap);
    c.zeno_speed = s.number("zeno_speed", c.zeno_speed);
    c.max_events = s.count("max_events", c.max_events);
  }
  checked("sim", [&] { cfg.sim.validate(); });

  if (root.has("controller"))
  {
    const Block c = root.child("controller");
    c.reject_unknown({"type", "pid", "hybrid"});
    const std::string type = c.text("type", "open-loop");
    const auto kind = controller_kind_from_string(type);
    if (!kind) fail(c.field("type"), "expected open-loop, pid or hybrid");
    cfg.controller.kind = *kind;
    if (c.has("pid"))
    {
      const Block p = c.child("pid");
      p.reject_unknown({"kp", "ki", "kd"});
      auto pair = [&](std::string_view key, std::array<double, 2>& out) {
        if (!p.has(key)) return;
        const json& v = p.at(key);
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        {
          fail(p.field(key), "expected [loop1, loop2]");
        }
        out = {v[0].get<double>(), v[1].get<double>()};
      };
      pair("kp", cfg.controller.pid.kp);
      pair("ki", cfg.controller.pid.ki);
      pair("kd", cfg.controller.pid.kd);
    }
    if (c.has("hybrid"))
    {
      const Block h = c.child("hybrid");
      h.reject_unknown({"kp", "kd", "ki", "f_n_ref"});
      HybridGains& g = cfg.controller.hybrid;
      g.kp = h.number("kp", g.kp);
      g.kd = h.number("kd", g.kd);
      g.ki = h.number("ki", g.ki);
      g.f_n_ref = h.number("f_n_ref", g.f_n_ref);
    }
    checked("controller", [&] { cfg.controller.validate(); });
  }

  if (root.has("reference"))
  {
    const Block r = root.child("reference");
    r.reject_unknown({"profile", "target", "rate", "duration", "t0"});
    const auto kind = profile_kind_from_string(r.text("profile", "ramp"));
    if (!kind) fail(r.field("profile"), "expected step, ramp or smoothstep");
    cfg.reference.profile = *kind;
    if (r.has("target")) cfg.reference.target = r.number("target");
    cfg.reference.rate = r.number("rate", cfg.reference.rate);
    if (r.has("duration")) cfg.reference.duration = r.number("duration");
    cfg.reference.t0 = r.number("t0", cfg.reference.t0);
    if (!(cfg.reference.rate > 0.0)) fail(r.field("rate"), "must be > 0");
    if (cfg.reference.duration && !(*cfg.reference.duration > 0.0)) fail(r.field("duration"), "must be > 0");
  }

  if (root.has("scenario"))
  {
    const Block s = root.child("scenario");
    s.reject_unknown({"preset", "state", "project"});
    if (s.has("preset") && s.has("state")) fail("scenario", "give either preset or state, not both");
    cfg.scenario.project = s.flag("project", true);
    if (s.has("state"))
    {
      const json& v = s.at("state");
      if (!v.is_array() || v.size() != 4) fail(s.field("state"), "expected [theta1, theta1_dot, theta2, theta2_dot]");
      for (const json& e : v)
      {
        if (!e.is_number()) fail(s.field("state"), "expected numbers");
      }
      cfg.scenario.preset.clear();
      cfg.scenario.state = State{angle_from_config(v[0].get<double>(), cfg.units),
                                 angle_from_config(v[1].get<double>(), cfg.units),
                                 angle_from_config(v[2].get<double>(), cfg.units),
                                 angle_from_config(v[3].get<double>(), cfg.units)};
    }
    else
    {
      cfg.scenario.preset = s.text("preset", cfg.scenario.preset);
    }
  }
  if (cfg.scenario.preset.size() && !preset(cfg.scenario.preset, cfg.robot))
  {
    fail("scenario.preset", "unknown preset \"" + cfg.scenario.preset + "\"");
  }

  if (root.has("sweep"))
  {
    const Block s = root.child("sweep");
    s.reject_unknown({"mu", "v_belt", "presets", "random", "transient", "record", "threshold", "reference"});
    SweepSpec spec;
    const auto mu = s.triple("mu");
    const auto v = s.triple("v_belt");
    spec.mu_min = mu[0];
    spec.mu_max = mu[1];
    spec.mu_step = mu[2];
    spec.v_min = v[0];
    spec.v_max = v[1];
    spec.v_step = v[2];
    spec.transient = s.number("transient", spec.transient);
    spec.record = s.number("record", spec.record);
    spec.bounce_threshold = s.number("threshold", spec.bounce_threshold);
    spec.random_count = s.count("random", 0);
    if (s.has("presets"))
    {
      const json& p = s.at("presets");
      if (!p.is_array()) fail(s.field("presets"), "expected a list of preset names");
      for (const json& name : p)
      {
        if (!name.is_string()) fail(s.field("presets"), "expected preset names");
        const std::string n = name.get<std::string>();
        const auto ic = preset(n, cfg.robot);
        if (!ic) fail(s.field("presets"), "unknown preset \"" + n + "\"");
        cfg.sweep_presets.push_back(n);
        spec.initial.push_back(*ic);
      }
    }
    spec.controller = cfg.controller;
    // Closed-loop sweeps ramp the reference like a single run does.
    if (cfg.controller.kind != ControllerKind::OpenLoop)
    {
      spec.reference_target = cfg.reference.target;
      spec.reference_rate = cfg.reference.rate;
    }
    if (spec.random_count > 0) spec.seed = cfg.seed;
    checked("sweep", [&] { spec.validate(); });
    cfg.sweep = spec;
  }

  if (root.has("regions"))
  {
    const Block r = root.child("regions");
    r.reject_unknown({"theta1", "theta1_dot", "points", "elbow"});
    RegionsConfig& g = cfg.regions;
    if (r.has("theta1"))
    {
      const auto t = r.triple("theta1");
      g.theta1_min = t[0];
      g.theta1_max = t[1];
      g.theta1_points = static_cast<std::size_t>(t[2]);
    }
    if (r.has("theta1_dot"))
    {
      const auto t = r.triple("theta1_dot");
      g.theta1_dot_min = t[0];
      g.theta1_dot_max = t[1];
      g.theta1_dot_points = static_cast<std::size_t>(t[2]);
    }
    g.elbow = parse_elbow(r, "elbow", g.elbow);
    if (g.theta1_points < 2 || g.theta1_dot_points < 2) fail("regions", "grids need at least 2 points");
    if (!(g.theta1_max > g.theta1_min) || !(g.theta1_dot_max > g.theta1_dot_min))
    {
      fail("regions", "grid max must exceed min");
    }
  }

  if (root.has("ztmax"))
  {
    const Block z = root.child("ztmax");
    z.reject_unknown({"ramp_rate", "hold", "tolerance", "upper"});
    cfg.ztmax.ramp_rate = z.number("ramp_rate", cfg.ztmax.ramp_rate);
    cfg.ztmax.hold = z.number("hold", cfg.ztmax.hold);
    cfg.ztmax.tolerance = z.number("tolerance", cfg.ztmax.tolerance);
    cfg.ztmax.upper = z.number("upper", cfg.ztmax.upper);
    if (!(cfg.ztmax.ramp_rate > 0.0)) fail("ztmax.ramp_rate", "must be > 0");
    if (!(cfg.ztmax.tolerance > 0.0)) fail("ztmax.tolerance", "must be > 0");
    if (!(cfg.ztmax.hold >= 0.0)) fail("ztmax.hold", "must be >= 0");
  }
  cfg.ztmax.sim = cfg.sim;

  if (root.has("output"))
  {
    const Block o = root.child("output");
    o.reject_unknown({"dir"});
    cfg.out_dir = o.text("dir", cfg.out_dir);
  }
  return cfg;
}

InitialCondition initial_condition(const RunConfig& config)
{
  if (!config.scenario.state)
  {
    return *preset(config.scenario.preset, config.robot);
  }
  State x = *config.scenario.state;
  if (config.scenario.project)
  {
    const EndEffector ee = forward_kinematics(x, config.robot);
    // Within a millimetre of the belt counts as intended contact.
    if (std::abs(ee.gap) < 1e-3) x = project_onto_contact(x, config.robot, true);
  }
  return {"state", x};
}

ReferenceProfile reference_for(const ReferenceConfig& ref, double z0)
{
  if (!ref.target) return ReferenceProfile::hold(z0);
  ReferenceProfile p;
  p.kind = ref.profile;
  p.start = z0;
  p.end = *ref.target;
  p.t0 = ref.t0;
  p.duration = ref.duration ? *ref.duration : std::max(std::abs(p.end - z0) / ref.rate, 1e-3);
  return p;
}

}  // namespace painleve
