#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cdp/errors.hpp"

namespace cdp {

/// Jaw-style gripper geometry and width limits. All lengths in meters.
struct GripperConfig {
  std::string id;
  double w_max = 0.0;    ///< fully open jaw width
  double h = 0.0;        ///< overall height, mount flange to fingertip
  double g_grasp = 0.0;  ///< jaw width when holding the reference object
  double g_min = 0.0;    ///< fully closed jaw width

  /// Throws ConfigError unless 0 <= g_min <= g_grasp <= w_max and h > 0.
  void validate() const;
};

/// One arm + gripper pairing calibrated against a shared tabletop.
struct ManipulatorConfig {
  std::string robot_id;
  GripperConfig gripper;
  double z_base = 0.0;  ///< flange height above the table at tool-tip contact
  double d = 0.0;       ///< flange-to-tool-tip lever arm for tilts

  /// Throws ConfigError unless z_base >= 0, d > 0 and the gripper validates.
  void validate() const;
};

/// Constants that retarget states between two manipulator configs.
struct AdaptationParams {
  double delta_d = 0.0;  ///< base.z_base - novel.z_base, added to novel heights
  double alpha = 0.0;    ///< width-range ratio (base open-to-grasp / novel open-to-grasp)
  double d_ratio = 1.0;  ///< base.d / novel.d, the trained->executing tilt ratio
};

/// Flange pose + jaw width as reported by a manipulator. Rotations are XYZ
/// Euler components in radians, kept in (-pi, pi].
struct RobotState {
  double x = 0, y = 0, z = 0;
  double theta_x = 0, theta_y = 0, theta_z = 0;
  double g = 0;
};

/// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

/// Computes the retargeting constants for running a policy trained on `base`
/// on the `novel` hardware. Throws ZeroWidthRange when novel.w_max equals
/// novel.g_grasp.
AdaptationParams derive_adaptation(const ManipulatorConfig& base, const ManipulatorConfig& novel);

/// Tilt with the same lateral tool-tip sweep on an arm scaled by d_ratio:
/// asin(d_ratio * sin(theta)). With d_ratio = d_base/d_novel this maps a
/// trained-frame tilt onto the executing arm; the reciprocal ratio maps back.
/// Throws RotationDomain when |d_ratio * sin(theta)| > 1.
double adapt_rotation(double theta, double d_ratio);

/// Maps a state measured on the novel hardware into the trained (base) frame:
/// height shifted by delta_d, jaw width through the width-range ratio, tilts
/// through adapt_rotation with the novel->base ratio; x, y and yaw unchanged.
RobotState adapt_state(const RobotState& s, const AdaptationParams& p,
                       const ManipulatorConfig& base, const ManipulatorConfig& novel);

/// Inverse of the width retarget: the novel jaw width whose adapted value
/// equals the trained-frame command g_cmd.
double invert_width_command(double g_cmd, const AdaptationParams& p,
                            const ManipulatorConfig& base, const ManipulatorConfig& novel);

/// One closed-loop retargeting step for tilts. Maps the executing arm's
/// current tilt theta_new into the trained frame, asks the policy for a tilt
/// increment there, and returns the increment the executing arm must apply so
/// both tool tips sweep the same lateral arc:
///   theta_base      = asin(d_new * sin(theta_new) / d_base)
///   delta_base      = policy_delta(theta_base)
///   returned delta  = asin(d_base * sin(theta_base + delta_base) / d_new) - theta_new
/// Throws RotationDomain when either asin argument leaves [-1, 1].
double rotational_execution_step(double theta_new,
                                 const std::function<double(double)>& policy_delta,
                                 double d_base, double d_new);

/// Loads a manipulator catalog (JSON, format_version 1, units "m" or "cm";
/// centimeter files are converted to meters). Throws ConfigError on malformed
/// content or unknown units.
std::vector<ManipulatorConfig> load_catalog(const std::filesystem::path& path);

/// Writes a catalog in meters.
void save_catalog(const std::vector<ManipulatorConfig>& configs, const std::filesystem::path& path);

/// Returns the entry whose gripper id matches, or throws ConfigError.
const ManipulatorConfig& find_config(const std::vector<ManipulatorConfig>& catalog, const std::string& gripper_id);

}  // namespace cdp
