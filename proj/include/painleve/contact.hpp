#pragma once

// Unilateral contact of the arm tip with the belt under Coulomb friction:
// the Painleve decomposition z_n_ddot = b + p f_n, solution-mode
// classification, and the contact-manifold geometry.

#include <array>
#include <optional>
#include <string_view>
#include <vector>

#include "painleve/model.hpp"

namespace painleve
{

namespace tolerance
{
inline constexpr double contact = 1e-8;       // |gap| [m]
inline constexpr double contact_rate = 1e-8;  // |z_n_dot| [m/s]
inline constexpr double slip = 1e-6;          // |z_r_dot| [m/s]
inline constexpr double sign = 1e-9;          // |p|, |b|
}  // namespace tolerance

enum class ContactMode
{
  Sliding,
  Flight,
  Indeterminate,
  Inconsistent,
  Stick,  // zero slip with friction inside the cone
};

std::string_view to_string(ContactMode mode);
std::optional<ContactMode> contact_mode_from_string(std::string_view name);

struct PainleveCoefficients
{
  double p = 0.0;  // normal force gain [1/kg]
  double b = 0.0;  // free normal acceleration [m/s^2]
};

struct ContactState
{
  ContactMode mode = ContactMode::Flight;
  double p = 0.0;
  double b = 0.0;
  double f_n = 0.0;
  double f_t = 0.0;
  double z_r_dot = 0.0;
  int slip_sign = 0;        // +1/-1 while slipping, 0 in stick or unknown
  bool degenerate = false;  // p or b inside the sign tolerance band
};

double slip_velocity(const EndEffector& ee, const RobotParams& params);

/// Tip acceleration with no contact force, -J M^-1 (w + c - u) + s.
Vec2 free_tip_acceleration(const DynamicsTerms& terms, const ControlTorques& u);

/// p and b for a given slip direction (+1: z_r_dot > 0).
PainleveCoefficients painleve_pb(const DynamicsTerms& terms, const ControlTorques& u, double mu,
                                 int slip_sign);

/// Throws Error{AmbiguousSlip} when |z_r_dot| <= tolerance::slip.
PainleveCoefficients painleve_pb(const State& state, const ControlTorques& u,
                                 const RobotParams& params);

/// Sign table of the four Painleve modes with the boundary tie-break: inside
/// the p band the sign of b decides between Sliding and Flight; |b| inside its
/// band counts as zero, i.e. no pressing force.
ContactMode mode_from_signs(double p, double b, bool* degenerate = nullptr);

struct StickForces
{
  Vec2 f = Vec2::Zero();  // [f_t, f_n]
  bool solvable = false;   // Q invertible
  bool sustainable = false;
};

/// Bilateral solve holding the tip fixed relative to the belt (z_ddot = 0).
StickForces stick_forces(const DynamicsTerms& terms, const ControlTorques& u, double mu);

bool on_contact_manifold(const EndEffector& ee);

/// Mode of a state. Off the manifold (or separating) this is Flight; at zero
/// slip a sustainable stick yields Stick, otherwise slip starts opposite to
/// the required friction and the sign table applies.
ContactState classify_mode(const State& state, const ControlTorques& u, const RobotParams& params,
                           bool stick_enabled = true);

/// Contact-manifold state from theta1: theta2 solves l(cos th1 + cos th2) = H,
/// taking the root with the larger theta2 - theta1 for Elbow::Up and the
/// smaller one for Elbow::Down; theta2_dot makes z_n_dot vanish.
State contact_closure(double theta1, double theta1_dot, const RobotParams& params, Elbow elbow);

/// Minimal-norm correction of the angles onto gap = 0 (Newton along grad gap),
/// optionally followed by the mass-weighted removal of z_n_dot.
State project_onto_contact(const State& state, const RobotParams& params, bool zero_normal_rate);

struct RegionMap
{
  std::vector<double> theta1;                         // grid [rad]
  std::vector<double> theta1_dot;                     // grid [rad/s]
  std::vector<std::optional<ContactMode>> modes;      // row-major, theta1 major; nullopt = unreachable
  std::vector<std::array<double, 2>> p_zero;          // (theta1, theta1_dot) points on p = 0
  std::vector<std::array<double, 2>> b_zero;          // points on b = 0

  const std::optional<ContactMode>& at(std::size_t i, std::size_t j) const
  {
    return modes[i * theta1_dot.size() + j];
  }
};

RegionMap region_map(const std::vector<double>& theta1_grid, const std::vector<double>& theta1_dot_grid,
                     const RobotParams& params, const ControlTorques& u, Elbow elbow);

struct AdmissibleInterval
{
  double lower = 0.0;
  double upper = 0.0;
  bool lower_closed = true;   // endpoint at the reach limit, p > 0 there
  bool upper_closed = true;
  double reach = 0.0;         // |z_t| limit on the manifold
};

/// Maximal z_t interval on the manifold where p > 0 for z_r_dot > 0.
AdmissibleInterval admissible_range(const RobotParams& params, Elbow elbow);

/// p along the manifold at tangential position z_t (z_r_dot > 0 convention).
double manifold_p(double z_t, const RobotParams& params, Elbow elbow);

}  // namespace painleve
