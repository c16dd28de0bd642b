#pragma once

// Run configuration: a JSON document with robot, sim, controller, scenario,
// sweep, regions and ztmax blocks. Angles are in degrees unless the top-level
// "units" key says "radians".

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "painleve/bifurcation.hpp"
#include "painleve/control.hpp"
#include "painleve/model.hpp"
#include "painleve/sim.hpp"

namespace painleve
{

enum class Units
{
  Degrees,
  Radians,
};

struct ReferenceConfig
{
  ProfileKind profile = ProfileKind::Ramp;
  std::optional<double> target;    // none: hold the initial z_t
  double rate = 0.01;              // [m/s], used when duration is unset
  std::optional<double> duration;  // [s]
  double t0 = 0.0;                 // [s]
};

struct ScenarioConfig
{
  std::string preset = "x0_d";  // empty when an explicit state is given
  std::optional<State> state;   // radians after parsing
  bool project = true;          // snap the state onto the manifold if in contact
};

struct RegionsConfig
{
  double theta1_min = -40.0;  // config units
  double theta1_max = 40.0;
  std::size_t theta1_points = 81;
  double theta1_dot_min = -300.0;  // config units per second
  double theta1_dot_max = 300.0;
  std::size_t theta1_dot_points = 81;
  Elbow elbow = Elbow::Down;
};

struct RunConfig
{
  Units units = Units::Degrees;
  RobotParams robot;
  SimConfig sim;
  ControllerSpec controller;
  ReferenceConfig reference;
  ScenarioConfig scenario;
  std::optional<SweepSpec> sweep;
  std::vector<std::string> sweep_presets;
  RegionsConfig regions;
  ZtSearch ztmax;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  nlohmann::json source;  // the document this was parsed from, after overrides
};

/// Reads a JSON file; parse errors report line and column.
nlohmann::json load_config_file(const std::filesystem::path& path);

/// Applies "a.b.c=value"; value is parsed as JSON, or taken as a string.
void apply_override(nlohmann::json& doc, std::string_view assignment);

/// Throws Error{Validation} naming the offending field.
RunConfig parse_config(const nlohmann::json& doc);

/// FNV-1a 64 of the canonical (sorted-key) serialization, as 16 hex digits.
std::string config_hash(const nlohmann::json& doc);

InitialCondition initial_condition(const RunConfig& config);

/// Reference profile starting at z0 as described by the config.
ReferenceProfile reference_for(const ReferenceConfig& ref, double z0);

double angle_from_config(double value, Units units);
double angle_to_config(double radians, Units units);

}  // namespace painleve
