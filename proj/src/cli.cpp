#include "painleve/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "painleve/bifurcation.hpp"
#include "painleve/config.hpp"
#include "painleve/contact.hpp"
#include "painleve/error.hpp"

namespace painleve
{

using nlohmann::json;
namespace fs = std::filesystem;

json default_config()
{
  return json{
    {"units", "degrees"},
    {"seed", 0},
    {"robot",
     {{"m", 0.12}, {"l", 0.21}, {"sigma", 0.005}, {"k", 1.3}, {"H", 0.3775}, {"alpha0", 13.72}, {"mu", 0.6},
      {"v_belt", -0.4}}},
    {"scenario", {{"preset", "x0_d"}}},
  };
}

std::string format_number(double value)
{
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.16e", value);
  return buf;
}

void write_atomic(const std::string& path, const std::string& content)
{
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorKind::InvalidArgument, "cannot write " + tmp.string());
    f << content;
    if (!f.flush()) throw Error(ErrorKind::InvalidArgument, "cannot write " + tmp.string());
  }
  fs::rename(tmp, target);
}

namespace
{

struct Options
{
  std::string config_path;
  std::vector<std::string> overrides;
  std::size_t jobs = 1;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

std::string header(const RunConfig& cfg)
{
  return "# config_hash=" + config_hash(cfg.source) + " seed=" + std::to_string(cfg.seed) + "\n";
}

json provenance(const RunConfig& cfg)
{
  return {{"config_hash", config_hash(cfg.source)}, {"seed", cfg.seed}};
}

std::string out_path(const RunConfig& cfg, const std::string& name) { return (fs::path(cfg.out_dir) / name).string(); }

std::string join(std::initializer_list<std::string> cells)
{
  std::string line;
  for (const std::string& c : cells)
  {
    if (!line.empty()) line += ',';
    line += c;
  }
  return line + "\n";
}

json state_json(const State& x, Units units)
{
  return json::array({angle_to_config(x.theta1, units), angle_to_config(x.theta1_dot, units),
                      angle_to_config(x.theta2, units), angle_to_config(x.theta2_dot, units)});
}

std::unique_ptr<Controller> controller_for(const RunConfig& cfg, const InitialCondition& ic)
{
  const double z0 = forward_kinematics(ic.x, cfg.robot).z_t;
  return make_controller(cfg.controller, reference_for(cfg.reference, z0), elbow_of(ic.x), cfg.robot);
}

int cmd_simulate(const RunConfig& cfg, std::ostream& out)
{
  const InitialCondition ic = initial_condition(cfg);
  const auto controller = controller_for(cfg, ic);
  const Trajectory tr = simulate(ic.x, *controller, cfg.robot, cfg.sim);

  std::string csv = header(cfg);
  csv += "t,theta1,theta1_dot,theta2,theta2_dot,z_t,z_n,z_t_dot,z_n_dot,gap,mode,p,b,f_n,f_t,z_r_dot,u1,u2\n";
  if (cfg.sim.t_end > 0.0)
  {
    for (const Sample& s : tr.samples)
    {
      const Units u = cfg.units;
      csv += join({format_number(s.t), format_number(angle_to_config(s.x.theta1, u)),
                   format_number(angle_to_config(s.x.theta1_dot, u)), format_number(angle_to_config(s.x.theta2, u)),
                   format_number(angle_to_config(s.x.theta2_dot, u)), format_number(s.ee.z_t), format_number(s.ee.z_n),
                   format_number(s.ee.z_t_dot), format_number(s.ee.z_n_dot), format_number(s.ee.gap),
                   std::string(to_string(s.contact.mode)), format_number(s.contact.p), format_number(s.contact.b),
                   format_number(s.contact.f_n), format_number(s.contact.f_t), format_number(s.contact.z_r_dot),
                   format_number(s.u.u1), format_number(s.u.u2)});
    }
  }
  std::string events = json{{"header", provenance(cfg)}}.dump() + "\n";
  for (const Event& e : tr.events)
  {
    events += json{{"t", e.t},
                   {"kind", to_string(e.kind)},
                   {"pre", state_json(e.pre, cfg.units)},
                   {"post", state_json(e.post, cfg.units)}}
                .dump() +
              "\n";
  }
  const std::string traj_path = out_path(cfg, "trajectory.csv");
  const std::string event_path = out_path(cfg, "events.jsonl");
  write_atomic(traj_path, csv);
  write_atomic(event_path, events);
  out << json{{"trajectory", traj_path},
              {"events", event_path},
              {"samples", cfg.sim.t_end > 0.0 ? tr.samples.size() : 0},
              {"event_count", tr.events.size()},
              {"provenance", provenance(cfg)}}
           .dump(2)
      << "\n";
  return kExitOk;
}

const SweepSpec& sweep_spec(const RunConfig& cfg)
{
  if (!cfg.sweep) throw Error(ErrorKind::Validation, "sweep: block is required for this subcommand");
  return *cfg.sweep;
}

int cmd_sweep(const RunConfig& cfg, std::size_t jobs, bool poincare, std::ostream& out)
{
  const SweepResult result = closed_loop_sweep(sweep_spec(cfg), cfg.robot, cfg.sim, jobs);
  std::string csv = header(cfg);
  std::size_t failures = 0;
  if (poincare)
  {
    csv += "v_belt,theta1_deg\n";
    for (const SweepPoint& p : result.points)
    {
      for (double th : p.poincare) csv += join({format_number(p.v_belt), format_number(rad_to_deg(th))});
    }
  }
  else
  {
    csv += "mu,v_belt,ic_label,max_theta1_dot,bounce,classification,period\n";
    for (const SweepPoint& p : result.points)
    {
      const std::string cls = p.error ? "error" : std::string(to_string(p.classification.kind));
      csv += join({format_number(p.mu), format_number(p.v_belt), p.ic_label, format_number(p.max_theta1_dot),
                   p.bounce ? "1" : "0", cls, std::to_string(p.classification.period)});
    }
  }
  json errors = json::array();
  for (const SweepPoint& p : result.points)
  {
    if (p.error)
    {
      ++failures;
      errors.push_back({{"mu", p.mu}, {"v_belt", p.v_belt}, {"ic_label", p.ic_label}, {"error", *p.error}});
    }
  }
  const std::string path = out_path(cfg, poincare ? "poincare.csv" : "sweep.csv");
  write_atomic(path, csv);
  out << json{{"output", path}, {"points", result.points.size()}, {"failed_points", errors},
              {"provenance", provenance(cfg)}}
           .dump(2)
      << "\n";
  return kExitOk;
}

int cmd_regions(const RunConfig& cfg, std::ostream& out)
{
  const RegionsConfig& g = cfg.regions;
  std::vector<double> th(g.theta1_points);
  std::vector<double> thd(g.theta1_dot_points);
  for (std::size_t i = 0; i < th.size(); ++i)
  {
    const double f = static_cast<double>(i) / static_cast<double>(th.size() - 1);
    th[i] = angle_from_config(g.theta1_min + f * (g.theta1_max - g.theta1_min), cfg.units);
  }
  for (std::size_t j = 0; j < thd.size(); ++j)
  {
    const double f = static_cast<double>(j) / static_cast<double>(thd.size() - 1);
    thd[j] = angle_from_config(g.theta1_dot_min + f * (g.theta1_dot_max - g.theta1_dot_min), cfg.units);
  }
  const RegionMap map = region_map(th, thd, cfg.robot, ControlTorques{}, g.elbow);
  std::string csv = header(cfg) + "theta1,theta1_dot,mode\n";
  for (std::size_t i = 0; i < th.size(); ++i)
  {
    for (std::size_t j = 0; j < thd.size(); ++j)
    {
      const auto& m = map.at(i, j);
      csv += join({format_number(angle_to_config(th[i], cfg.units)), format_number(angle_to_config(thd[j], cfg.units)),
                   m ? std::string(to_string(*m)) : "unreachable"});
    }
  }
  std::string bounds = header(cfg) + "curve,theta1,theta1_dot\n";
  auto emit = [&](const char* name, const std::vector<std::array<double, 2>>& pts) {
    for (const auto& p : pts)
    {
      bounds += join({name, format_number(angle_to_config(p[0], cfg.units)),
                      format_number(angle_to_config(p[1], cfg.units))});
    }
  };
  emit("p_zero", map.p_zero);
  emit("b_zero", map.b_zero);
  const std::string path = out_path(cfg, "regions.csv");
  const std::string bpath = out_path(cfg, "regions_boundaries.csv");
  write_atomic(path, csv);
  write_atomic(bpath, bounds);
  out << json{{"output", path}, {"boundaries", bpath}, {"provenance", provenance(cfg)}}.dump(2) << "\n";
  return kExitOk;
}

json interval_json(const AdmissibleInterval& a)
{
  return {{"lower", a.lower}, {"upper", a.upper}, {"lower_closed", a.lower_closed},
          {"upper_closed", a.upper_closed}, {"reach", a.reach}};
}

int cmd_admissible(const RunConfig& cfg, std::ostream& out)
{
  out << json{{"mu", cfg.robot.mu},
              {"elbow_up", interval_json(admissible_range(cfg.robot, Elbow::Up))},
              {"elbow_down", interval_json(admissible_range(cfg.robot, Elbow::Down))},
              {"provenance", provenance(cfg)}}
           .dump(2)
      << "\n";
  return kExitOk;
}

int cmd_ztmax(const RunConfig& cfg, std::ostream& out)
{
  const InitialCondition ic = initial_condition(cfg);
  const ZtResult r = find_zt_sliding(cfg.controller, ic.x, cfg.robot, cfg.ztmax);
  json trials = json::array();
  for (const ZtTrial& t : r.trials)
  {
    trials.push_back({{"target", t.target}, {"lift_off", t.lift_off}, {"t_lift_off", t.t_lift_off}});
  }
  out << json{{"z_t_sliding", r.z_t_sliding},
              {"controller", to_string(cfg.controller.kind)},
              {"initial", ic.label},
              {"ramp_rate", cfg.ztmax.ramp_rate},
              {"hold", cfg.ztmax.hold},
              {"trials", trials},
              {"provenance", provenance(cfg)}}
           .dump(2)
      << "\n";
  return kExitOk;
}

int cmd_validate(const RunConfig& cfg, std::ostream& out)
{
  const InitialCondition ic = initial_condition(cfg);
  const EndEffector ee = forward_kinematics(ic.x, cfg.robot);
  const auto controller = controller_for(cfg, ic);
  const DynamicsTerms terms = eval_terms(ic.x, cfg.robot);
  const std::array<double, kMaxIntegralStates> zero{};
  const ControlTorques u = controller->torques(
    ControlContext{0.0, ic.x, terms, cfg.robot, SensedForce{}, std::span<const double>(zero.data(), controller->integral_size())});
  const ContactState cs = classify_mode(ic.x, u, cfg.robot, cfg.sim.stick_enabled);

  json warnings = json::array();
  const Elbow elbow = elbow_of(ic.x);
  if (on_contact_manifold(ee))
  {
    const AdmissibleInterval a = admissible_range(cfg.robot, elbow);
    const bool inside = ee.z_t >= a.lower && (a.upper_closed ? ee.z_t <= a.upper : ee.z_t < a.upper);
    if (!inside)
    {
      warnings.push_back("initial z_t " + format_number(ee.z_t) + " m is outside the admissible range [" +
                         format_number(a.lower) + ", " + format_number(a.upper) + ") for this elbow branch");
    }
  }
  if (cfg.controller.kind == ControllerKind::Pid && elbow == Elbow::Up)
  {
    warnings.push_back("PID from an elbow-up posture is known to lose contact: f_n decays to zero (lift-off)");
  }
  if (cfg.sim.restitution == 0.0)
  {
    warnings.push_back("restitution 0: impacts without collision end at z_n_dot = 0");
  }

  out << json{{"valid", true},
              {"units", cfg.units == Units::Degrees ? "degrees" : "radians"},
              {"alpha0_rad", cfg.robot.alpha0},
              {"initial",
               {{"label", ic.label},
                {"state", state_json(ic.x, cfg.units)},
                {"state_rad", state_json(ic.x, Units::Radians)},
                {"z_t", ee.z_t},
                {"z_n", ee.z_n},
                {"gap", ee.gap},
                {"elbow", elbow == Elbow::Up ? "up" : "down"},
                {"mode", to_string(cs.mode)},
                {"p", cs.p},
                {"b", cs.b},
                {"f_n", cs.f_n}}},
              {"controller", to_string(cfg.controller.kind)},
              {"warnings", warnings},
              {"provenance", provenance(cfg)}}
           .dump(2)
      << "\n";
  return kExitOk;
}

void emit_error(std::ostream& err, std::string_view kind, const std::string& message)
{
  err << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
  CLI::App app{"Painleve paradox simulator for a two-link arm on a moving belt"};
  app.require_subcommand(1);
  Options opt;
  const std::vector<std::pair<std::string, std::string>> commands = {
    {"simulate", "integrate one run; writes trajectory.csv and events.jsonl"},
    {"sweep", "bifurcation sweep over mu and v_belt; writes sweep.csv"},
    {"poincare", "Poincare sections of the sweep; writes poincare.csv"},
    {"regions", "solution-mode map over (theta1, theta1_dot) on the manifold"},
    {"admissible", "z_t intervals with p > 0 for both elbow branches"},
    {"ztmax", "largest reachable tangential target without lift-off"},
    {"validate", "check a config and report derived quantities"},
  };
  for (const auto& [name, help] : commands)
  {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config_path, "JSON run config")->check(CLI::ExistingFile);
    sub->add_option("--set", opt.overrides, "override key.path=value");
    sub->add_option("--jobs", opt.jobs, "worker threads for sweeps (0: all cores)");
    sub->add_option("--out", opt.out_dir, "output directory");
    sub->add_option("--seed", opt.seed, "random seed");
  }

  try
  {
    app.parse(argc, argv);
  }
  catch (const CLI::CallForHelp& e)
  {
    out << app.help();
    return kExitOk;
  }
  catch (const CLI::ParseError& e)
  {
    emit_error(err, "Usage", e.what());
    return kExitValidation;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try
  {
    if (command == "validate" && opt.config_path.empty())
    {
      throw Error(ErrorKind::Validation, "--config: validate needs a config file");
    }
    json doc = opt.config_path.empty() ? default_config() : load_config_file(opt.config_path);
    for (const std::string& o : opt.overrides) apply_override(doc, o);
    if (opt.seed) doc["seed"] = *opt.seed;
    if (!opt.out_dir.empty()) doc["output"]["dir"] = opt.out_dir;
    const RunConfig cfg = parse_config(doc);

    if (command == "simulate") return cmd_simulate(cfg, out);
    if (command == "sweep") return cmd_sweep(cfg, opt.jobs, false, out);
    if (command == "poincare") return cmd_sweep(cfg, opt.jobs, true, out);
    if (command == "regions") return cmd_regions(cfg, out);
    if (command == "admissible") return cmd_admissible(cfg, out);
    if (command == "ztmax") return cmd_ztmax(cfg, out);
    return cmd_validate(cfg, out);
  }
  catch (const Error& e)
  {
    emit_error(err, to_string(e.kind()), e.what());
    const bool validation = e.kind() == ErrorKind::Validation || e.kind() == ErrorKind::InvalidArgument;
    return validation ? kExitValidation : kExitSimulation;
  }
  catch (const std::exception& e)
  {
    emit_error(err, "Internal", e.what());
    return kExitSimulation;
  }
}

}  // namespace painleve
