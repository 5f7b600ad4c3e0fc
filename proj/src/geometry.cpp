#include "cdp/geometry.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace cdp {

using nlohmann::json;

void GripperConfig::validate() const {
  if (!(h > 0)) throw ConfigError("gripper '" + id + "': h must be > 0");
  if (!(g_min >= 0)) throw ConfigError("gripper '" + id + "': g_min must be >= 0");
  if (!(g_min <= g_grasp)) throw ConfigError("gripper '" + id + "': g_min > g_grasp");
  if (!(g_grasp <= w_max)) throw ConfigError("gripper '" + id + "': g_grasp > w_max");
}

void ManipulatorConfig::validate() const {
  gripper.validate();
  if (!(z_base >= 0)) throw ConfigError("config '" + gripper.id + "': z_base must be >= 0");
  if (!(d > 0)) throw ConfigError("config '" + gripper.id + "': d must be > 0");
}

double wrap_angle(double a) {
  constexpr double kTwoPi = 2.0 * M_PI;
  a = std::fmod(a, kTwoPi);
  if (a <= -M_PI) a += kTwoPi;
  if (a > M_PI) a -= kTwoPi;
  return a;
}

AdaptationParams derive_adaptation(const ManipulatorConfig& base, const ManipulatorConfig& novel) {
  base.validate();
  novel.validate();
  const double novel_span = novel.gripper.w_max - novel.gripper.g_grasp;
  if (novel_span <= 0.0) {
    throw ZeroWidthRange("gripper '" + novel.gripper.id + "': w_max == g_grasp, width ratio undefined");
  }
  AdaptationParams p;
  p.delta_d = base.z_base - novel.z_base;
  p.alpha = (base.gripper.w_max - base.gripper.g_grasp) / novel_span;
  p.d_ratio = base.d / novel.d;
  return p;
}

double adapt_rotation(double theta, double d_ratio) {
  const double arg = d_ratio * std::sin(theta);
  if (std::abs(arg) > 1.0) {
    throw RotationDomain("tilt " + std::to_string(theta) + " with arm ratio " +
                         std::to_string(d_ratio) + " has no equivalent (|arg| = " +
                         std::to_string(std::abs(arg)) + ")");
  }
  return std::asin(arg);
}

RobotState adapt_state(const RobotState& s, const AdaptationParams& p,
                       const ManipulatorConfig& base, const ManipulatorConfig& novel) {
  RobotState out = s;
  out.z = s.z + p.delta_d;
  out.g = base.gripper.w_max - p.alpha * (novel.gripper.w_max - s.g);
  // Readings move novel -> trained frame, so tilts use the reciprocal ratio
  // (executing arm over trained arm).
  const double inv_ratio = 1.0 / p.d_ratio;
  out.theta_x = adapt_rotation(s.theta_x, inv_ratio);
  out.theta_y = adapt_rotation(s.theta_y, inv_ratio);
  out.theta_z = s.theta_z;
  return out;
}

double invert_width_command(double g_cmd, const AdaptationParams& p,
                            const ManipulatorConfig& base, const ManipulatorConfig& novel) {
  return novel.gripper.w_max - (base.gripper.w_max - g_cmd) / p.alpha;
}

double rotational_execution_step(double theta_new,
                                 const std::function<double(double)>& policy_delta,
                                 double d_base, double d_new) {
  if (!(d_base > 0) || !(d_new > 0)) throw ConfigError("arm lengths must be > 0");
  const double theta_base = adapt_rotation(theta_new, d_new / d_base);
  const double delta_base = policy_delta(theta_base);
  const double theta_base_next = theta_base + delta_base;
  return adapt_rotation(theta_base_next, d_base / d_new) - theta_new;
}

static GripperConfig gripper_from_json(const json& j, double unit) {
  GripperConfig g;
  g.id = j.at("id").get<std::string>();
  g.w_max = j.at("w_max").get<double>() * unit;
  g.h = j.at("h").get<double>() * unit;
  g.g_grasp = j.at("g_grasp").get<double>() * unit;
  g.g_min = j.at("g_min").get<double>() * unit;
  return g;
}

std::vector<ManipulatorConfig> load_catalog(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open catalog: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("catalog " + path.string() + ": " + e.what());
  }
  try {
    if (j.at("format_version").get<int>() != 1) {
      throw ConfigError("catalog " + path.string() + ": unsupported format_version");
    }
    const std::string units = j.at("units").get<std::string>();
    double unit = 0;
    if (units == "m") unit = 1.0;
    else if (units == "cm") unit = 0.01;
    else throw ConfigError("catalog " + path.string() + ": unknown units '" + units + "'");

    std::vector<ManipulatorConfig> out;
    for (const auto& cj : j.at("configs")) {
      ManipulatorConfig c;
      c.robot_id = cj.at("robot_id").get<std::string>();
      c.z_base = cj.at("z_base").get<double>() * unit;
      c.d = cj.at("d").get<double>() * unit;
      c.gripper = gripper_from_json(cj.at("gripper"), unit);
      c.validate();
      out.push_back(std::move(c));
    }
    if (out.empty()) throw ConfigError("catalog " + path.string() + ": no configs");
    return out;
  } catch (const json::exception& e) {
    throw ConfigError("catalog " + path.string() + ": " + e.what());
  }
}

void save_catalog(const std::vector<ManipulatorConfig>& configs, const std::filesystem::path& path) {
  json out;
  out["format_version"] = 1;
  out["units"] = "m";
  out["configs"] = json::array();
  for (const auto& c : configs) {
    json cj;
    cj["robot_id"] = c.robot_id;
    cj["z_base"] = c.z_base;
    cj["d"] = c.d;
    cj["gripper"] = {{"id", c.gripper.id},     {"w_max", c.gripper.w_max},
                     {"h", c.gripper.h},       {"g_grasp", c.gripper.g_grasp},
                     {"g_min", c.gripper.g_min}};
    out["configs"].push_back(cj);
  }
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write catalog: " + path.string());
  f << out.dump(2) << "\n";
}

const ManipulatorConfig& find_config(const std::vector<ManipulatorConfig>& catalog,
                                     const std::string& gripper_id) {
  for (const auto& c : catalog) {
    if (c.gripper.id == gripper_id) return c;
  }
  throw ConfigError("no catalog entry with gripper id '" + gripper_id + "'");
}

}  // namespace cdp
