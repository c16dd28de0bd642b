#pragma once

#include <iosfwd>
#include <string>

#include <json.hpp>

namespace painleve
{

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitSimulation = 3;

/// Nominal robot, default simulator settings and preset x0_d.
nlohmann::json default_config();

/// Entry point of the painleve tool; results go to out, error JSON to err.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// 17 significant digits, scientific notation.
std::string format_number(double value);

/// Writes through a temporary file in the same directory and renames it.
void write_atomic(const std::string& path, const std::string& content);

}  // namespace painleve
