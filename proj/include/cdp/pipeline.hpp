#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "cdp/geometry.hpp"
#include "cdp/mlp.hpp"
#include "cdp/projection.hpp"

namespace cdp {

/// Fixed-length summary of a stabilized grasp map fed to the policy:
/// normalized centroid and support area.
struct GraspSummary {
  double cu = 0, cv = 0;  ///< centroid / image size, in [0, 1]
  double area = 0;        ///< support pixels / total pixels
  bool valid = false;
};

struct SessionOptions {
  bool use_adaptation = true;
  bool use_projection = true;
  int projection_window = 5;  ///< project while remaining updates <= window
  int substeps = 16;          ///< deterministic sampler steps
  double eps_safe = 0.01;
  double eps_task = 0.05;
  CumulativeMode mode = CumulativeMode::kCorrectedPrefix;
};

/// Everything needed to run one trained policy against one (base, novel)
/// hardware pairing. Immutable after construction.
struct PolicySession {
  std::shared_ptr<const NoisePredictor> predictor;
  NoiseSchedule schedule;
  NormStats action_stats, obs_stats;
  int horizon = 8, action_dim = 0, obs_dim = 0, history = 1;

  ManipulatorConfig base, novel;
  AdaptationParams params;
  ConstraintSet constraints;
  std::vector<int> plan;
  SessionOptions opt;

  /// Subtracted from the adapted height to get the floor coordinate (tool-tip
  /// clearance); defaults to base.z_base.
  double floor_reference = 0;

  /// Control ticks per second; sets the time stamps on decoded trajectories.
  double control_rate_hz = 2.0;
};

PolicySession make_session(const PolicyModel& model, const ManipulatorConfig& base,
                           const ManipulatorConfig& novel, const SessionOptions& opt = {});

/// Session around an arbitrary predictor (used by tests and tools).
PolicySession make_session_raw(std::shared_ptr<const NoisePredictor> predictor,
                               NoiseSchedule schedule, NormStats action_stats, NormStats obs_stats,
                               int horizon, int action_dim, int obs_dim,
                               const ManipulatorConfig& base, const ManipulatorConfig& novel,
                               const SessionOptions& opt = {});

/// Retargets the raw hardware state into the trained frame (unless adaptation
/// is off). Exposed separately because the executor also needs it.
RobotState session_adapted_state(const PolicySession& s, const RobotState& raw);

/// Builds normalized policy features from the (adapted) state and optional
/// vision summary. History > 1 repeats the current features (the caller may
/// maintain a real history buffer by stacking upstream).
Observation assemble_observation(const PolicySession& s, const RobotState& raw,
                                 const GraspSummary* vision = nullptr);

struct TrajectoryStep {
  double t = 0;  ///< seconds from now at the session control rate
  Eigen::Vector3d position{0, 0, 0};
  Eigen::Vector3d rotation{0, 0, 0};
  double gripper_width = 0;
  bool corrected = false;
  Eigen::VectorXd nu;  ///< correction slots (x,y,z,rx,ry,rz)
};

struct GenerationResult {
  ActionChunk chunk;                    ///< normalized, post-projection
  Eigen::MatrixXd actions;              ///< de-normalized rows, horizon x action_dim
  std::vector<TrajectoryStep> decoded;  ///< absolute poses integrated in the trained frame
  CorrectionVector corrections;         ///< from the final denoising update
};

/// Full single-shot generation: observe -> denoise (projecting inside the last
/// projection_window+1 updates) -> decode. The emitted chunk is itself the
/// output of a projection pass, so the decoded heights respect the floor by
/// construction. Deterministic given (session, raw, rng state).
GenerationResult generate_trajectory(const PolicySession& s, const RobotState& raw,
                                     std::mt19937_64& rng, const GraspSummary* vision = nullptr);

struct TiltStep {
  double theta_base = 0;   ///< trained-frame tilt fed to the policy
  double dtheta_base = 0;  ///< policy increment in the trained frame
  double theta_new = 0;    ///< executing-arm tilt before the step
  double dtheta_new = 0;   ///< increment executed on the arm
};

struct TiltLoopResult {
  std::vector<TiltStep> rows;
  bool reached = false;
  double theta_new_final = 0;
};

/// Closed-loop tilt retargeting toward theta_target_new on the executing arm:
/// repeat { map current tilt to the trained frame, ask the policy for an
/// increment, map the incremented tilt back, execute } until within tol or
/// max_steps. `apply_new_delta` performs the motion and returns the measured
/// tilt. Both tool tips sweep the same lateral arc at every step.
TiltLoopResult execute_rotational_adaptation(const std::function<double(double)>& policy_tilt_delta,
                                             const std::function<double(double)>& apply_new_delta,
                                             double theta_new0, double theta_target_new,
                                             double d_base, double d_new, int max_steps,
                                             double tol = 0.01);

/// Trajectory trace I/O: one JSON object per line
/// {"t","position","rotation","gripper_width","corrected","nu"}, preceded by a
/// header line {"format_version":1,...}.
void save_trace_jsonl(const std::vector<TrajectoryStep>& steps, const std::filesystem::path& path);
std::vector<TrajectoryStep> load_trace_jsonl(const std::filesystem::path& path);

}  // namespace cdp
