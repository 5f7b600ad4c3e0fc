#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cdp/dataset.hpp"
#include "cdp/percept.hpp"
#include "cdp/pipeline.hpp"

namespace cdp {

enum class Task { kPush, kPickPlace, kPourTilt };

Task parse_task(const std::string& name);           // "push" | "pick_place" | "pour_tilt"
std::string task_name(Task t);

enum class FailureMode {
  kNone,
  kLiftDuringPush,
  kFloorViolation,
  kMissedGrasp,
  kTimeout,
  kInfeasible,  ///< the episode requested a retargeting outside the hardware's reach
};

std::string failure_name(FailureMode f);

/// Scene parameters of the toy tabletop. Lengths in meters, table top at 0.
struct WorldConfig {
  Task task = Task::kPush;
  ManipulatorConfig manip;        ///< hardware actually driving the scene
  double object_width = 0.04;
  double object_height = 0.04;
  double platform_height = 0.09;  ///< pick_place target platform
  double platform_x = 0.25;
  double platform_y = 0.0;
  double tilt_target = 0.5;       ///< pour_tilt trained-frame tilt [rad]
  double pour_target_l = 0;       ///< lateral sweep goal [m]; 0 -> manip.d * sin(tilt_target)
  double push_goal = 0.15;        ///< required displacement along +x
  double noise_level = 0.0;       ///< actuation jitter std [m]
  int max_steps = 60;
  double control_rate_hz = 2.0;
};

/// Kinematic world. The tool tip moves exactly as commanded (plus jitter);
/// a held object follows the tip rigidly. Heights are checked against the
/// table and never driven below it without recording a violation.
class World {
 public:
  World(const WorldConfig& cfg, std::uint64_t seed);

  /// Flange-frame state as the hardware would report it.
  RobotState observe() const;

  /// Applies one action row (dx, dy, dz, drx, dry, drz, jaw width command in
  /// executing-hardware units). Returns false once the episode is dead.
  bool apply(const Eigen::VectorXd& action);

  /// Top-down synthetic grasp-probability map of the scene (pick_place).
  GraspProbMap render_grasp_map(int size = 64) const;
  GraspSummary grasp_summary() const;

  // Scene queries (world frame, meters).
  double tip_clearance() const { return tip_z_; }
  double tip_x() const { return tip_x_; }
  double tip_y() const { return tip_y_; }
  double tilt_x() const { return tilt_x_; }
  double jaw() const { return jaw_; }
  bool holding() const { return holding_; }
  double object_x() const { return obj_x_; }
  double object_z() const { return obj_z_; }
  double object_displacement() const { return obj_x_ - obj_x0_; }
  double object_rest_z() const { return obj_rest_z_; }
  double min_clearance_seen() const { return min_clearance_; }
  double max_object_dev() const { return max_obj_dev_; }

  FailureMode failure() const { return failure_; }
  bool failed() const { return failure_ != FailureMode::kNone; }
  int ticks() const { return ticks_; }

  /// True when the task's success condition currently holds.
  bool success() const;

  const WorldConfig& config() const { return cfg_; }

 private:
  void check_failures();
  double support_under_object() const;

  WorldConfig cfg_;
  std::mt19937_64 rng_;
  double tip_x_ = 0, tip_y_ = 0, tip_z_ = 0;  // tool tip, clearance above table
  double tilt_x_ = 0, tilt_y_ = 0, yaw_ = 0;
  double jaw_ = 0;
  bool holding_ = false;
  double obj_x_ = 0, obj_y_ = 0, obj_z_ = 0;  // object center
  double obj_rest_z_ = 0, obj_x0_ = 0;
  bool released_on_platform_ = false;
  double min_clearance_ = 1e9, max_obj_dev_ = 0;
  FailureMode failure_ = FailureMode::kNone;
  int ticks_ = 0;
};

/// Demo generation: a scripted expert drives the base hardware closed-loop
/// (it corrects jitter back toward its nominal profile, so feedback is present
/// in the data). Deterministic in seed.
struct DemoConfig {
  Task task = Task::kPush;
  ManipulatorConfig manip;  ///< base hardware the demos are collected on
  int n = 60;
  double noise_level = 0.002;
  std::uint64_t seed = 0;
  WorldConfig world;  ///< task/manip fields are overwritten from the above
};

DemoDataset generate_demos(const DemoConfig& cfg);

/// Feature layout of the policy observation per task:
/// push/pour: [x, y, z, rx, ry, rz, g] (7); pick_place: + [cu, cv, area] (10).
int observation_dim(Task t);

struct EpisodeOptions {
  bool with_adaptation = true;
  bool with_projection = true;
  std::uint64_t seed = 0;
  int exec_steps = 1;  ///< actions executed per replan; 0 -> horizon/2 (chunked)
  bool record_trace = false;
  SessionOptions session;  ///< adaptation/projection flags are overwritten
};

struct EpisodeResult {
  bool success = false;
  FailureMode failure = FailureMode::kNone;
  int steps = 0;
  double displacement = 0;     ///< push: object travel along +x
  double max_height_dev = 0;   ///< push: object height deviation seen
  double min_clearance = 0;
  double terminal_l = 0;       ///< pour: executing-arm lateral sweep at the end
  double target_l = 0;         ///< pour: trained-frame lateral sweep target
  std::vector<TrajectoryStep> trace;
  std::vector<TiltStep> tilt_rows;  ///< pour: closed-loop retargeting log
};

/// Runs one policy episode on `world_cfg` hardware with the policy trained on
/// `base`. Without adaptation the raw state is fed and projection is skipped.
EpisodeResult run_episode(const PolicyModel& model, const ManipulatorConfig& base,
                          const WorldConfig& world_cfg, const EpisodeOptions& opt);

struct EvalSummary {
  int episodes = 0;
  int successes = 0;
  double success_rate = 0;
  std::map<std::string, int> failures;  ///< failure name -> count
  std::vector<EpisodeResult> results;
};

EvalSummary evaluate(const PolicyModel& model, const ManipulatorConfig& base,
                     const WorldConfig& world_cfg, int episodes, const EpisodeOptions& opt);

struct SweepRow {
  std::string gripper_id;
  double with_ap = 0;     ///< success rate
  double without_ap = 0;  ///< success rate
};

/// Evaluates every catalog entry with and without adaptation-projection.
std::vector<SweepRow> sweep_configs(const PolicyModel& model, const ManipulatorConfig& base,
                                    const std::vector<ManipulatorConfig>& novels, Task task,
                                    int episodes, std::uint64_t seed);

/// CSV: gripper_id, with_ap, without_ap (rates in [0,1]).
void save_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);
void save_eval_csv(const EvalSummary& s, const std::string& label, const std::filesystem::path& path);

}  // namespace cdp
