#include "cdp/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "cdp/log.hpp"

namespace cdp {

namespace {

constexpr double kGraspHeight = 0.02;   ///< nominal tool-tip clearance while holding
constexpr double kDevLimit = 0.01;      ///< held-object height deviation that fails an episode
constexpr double kGraspReach = 0.01;    ///< max tip/object offset for a grasp to latch
constexpr double kReleaseSlack = 0.005; ///< jaw opening beyond object width that releases
constexpr double kLateralTol = 0.005;   ///< pour: lateral-sweep success tolerance [m]

// Top-down camera window for the synthetic grasp map.
constexpr double kViewX0 = -0.1, kViewY0 = -0.25, kViewSpan = 0.5;

}  // namespace

Task parse_task(const std::string& name) {
  if (name == "push") return Task::kPush;
  if (name == "pick_place") return Task::kPickPlace;
  if (name == "pour_tilt") return Task::kPourTilt;
  throw ConfigError("unknown task '" + name + "' (push | pick_place | pour_tilt)");
}

std::string task_name(Task t) {
  switch (t) {
    case Task::kPush: return "push";
    case Task::kPickPlace: return "pick_place";
    case Task::kPourTilt: return "pour_tilt";
  }
  throw ConfigError("unknown task enum value");
}

std::string failure_name(FailureMode f) {
  switch (f) {
    case FailureMode::kNone: return "none";
    case FailureMode::kLiftDuringPush: return "lift_during_push";
    case FailureMode::kFloorViolation: return "floor_violation";
    case FailureMode::kMissedGrasp: return "missed_grasp";
    case FailureMode::kTimeout: return "timeout";
    case FailureMode::kInfeasible: return "infeasible";
  }
  throw ConfigError("unknown failure enum value");
}

int observation_dim(Task t) { return t == Task::kPickPlace ? 10 : 7; }

World::World(const WorldConfig& cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {
  cfg_.manip.validate();
  if (cfg_.object_width <= 0 || cfg_.object_height <= 0) {
    throw ConfigError("world: object dimensions must be > 0");
  }
  obj_rest_z_ = cfg_.object_height / 2.0;
  switch (cfg_.task) {
    case Task::kPush: {
      // Start already holding the object, at a per-seed height offset the
      // demos' expert has to work away; this is where the height feedback in
      // the data comes from.
      std::uniform_real_distribution<double> off(-0.008, 0.008);
      tip_x_ = 0;
      tip_y_ = 0;
      tip_z_ = kGraspHeight + off(rng_);
      jaw_ = cfg_.object_width;
      holding_ = true;
      obj_x_ = tip_x_;
      obj_y_ = tip_y_;
      obj_z_ = std::max(tip_z_, obj_rest_z_);
      break;
    }
    case Task::kPickPlace: {
      tip_x_ = 0;
      tip_y_ = 0;
      tip_z_ = 0.12;
      jaw_ = cfg_.manip.gripper.w_max;
      holding_ = false;
      obj_x_ = 0.15;
      obj_y_ = 0;
      obj_z_ = obj_rest_z_;
      break;
    }
    case Task::kPourTilt: {
      tip_x_ = 0;
      tip_y_ = 0;
      tip_z_ = 0.15;
      jaw_ = cfg_.object_width;
      holding_ = true;
      obj_x_ = tip_x_;
      obj_y_ = tip_y_;
      obj_z_ = tip_z_;
      break;
    }
  }
  obj_x0_ = obj_x_;
  if (cfg_.pour_target_l == 0) {
    cfg_.pour_target_l = cfg_.manip.d * std::sin(cfg_.tilt_target);
  }
  min_clearance_ = tip_z_;
}

RobotState World::observe() const {
  RobotState s;
  s.x = tip_x_;
  s.y = tip_y_;
  s.z = tip_z_ + cfg_.manip.z_base;  // flange height as the hardware reports it
  s.theta_x = tilt_x_;
  s.theta_y = tilt_y_;
  s.theta_z = yaw_;
  s.g = jaw_;
  return s;
}

double World::support_under_object() const {
  const bool over_platform = cfg_.task == Task::kPickPlace &&
                             std::abs(obj_x_ - cfg_.platform_x) <= 0.05 &&
                             std::abs(obj_y_ - cfg_.platform_y) <= 0.05;
  return over_platform ? cfg_.platform_height : 0.0;
}

bool World::apply(const Eigen::VectorXd& action) {
  if (failed() || ticks_ >= cfg_.max_steps) return false;
  if (action.size() < 7) throw ShapeMismatch("world: action row needs 7 entries");
  ++ticks_;

  std::normal_distribution<double> jitter(0.0, cfg_.noise_level);
  tip_x_ += action(0) + (cfg_.noise_level > 0 ? jitter(rng_) : 0.0);
  tip_y_ += action(1) + (cfg_.noise_level > 0 ? jitter(rng_) : 0.0);
  tip_z_ += action(2) + (cfg_.noise_level > 0 ? jitter(rng_) : 0.0);
  tilt_x_ += action(3);
  tilt_y_ += action(4);
  yaw_ += action(5);

  const double jaw_prev = jaw_;
  jaw_ = std::clamp(action(6), cfg_.manip.gripper.g_min, cfg_.manip.gripper.w_max);

  // Grasp latch / release.
  if (!holding_ && jaw_ <= cfg_.object_width + 0.002 && std::abs(tip_x_ - obj_x_) <= kGraspReach &&
      std::abs(tip_y_ - obj_y_) <= kGraspReach && std::abs(tip_z_ - obj_z_) <= kGraspReach) {
    holding_ = true;
  } else if (!holding_ && cfg_.task == Task::kPickPlace &&
             jaw_prev >= cfg_.object_width - kReleaseSlack &&
             jaw_ < cfg_.object_width - kReleaseSlack) {
    failure_ = FailureMode::kMissedGrasp;  // closed the jaws on air
  }
  if (holding_ && jaw_ > cfg_.object_width + kReleaseSlack) {
    holding_ = false;
    const double support = support_under_object();
    released_on_platform_ = support > 0;
    obj_z_ = support + obj_rest_z_;
  }

  // A held object follows the tip rigidly; the surface below blocks it.
  if (holding_) {
    obj_x_ = tip_x_;
    obj_y_ = tip_y_;
    const double floor_center = support_under_object() + obj_rest_z_;
    obj_z_ = std::max(tip_z_, floor_center);
  }

  min_clearance_ = std::min(min_clearance_, tip_z_);
  if (cfg_.task == Task::kPush) {
    const double pen = holding_ ? std::max(0.0, obj_rest_z_ - tip_z_) : 0.0;
    max_obj_dev_ = std::max({max_obj_dev_, std::abs(obj_z_ - obj_rest_z_), pen});
  }

  check_failures();
  return !failed() && ticks_ < cfg_.max_steps;
}

void World::check_failures() {
  if (failure_ != FailureMode::kNone) return;
  if (tip_z_ < 0) {
    failure_ = FailureMode::kFloorViolation;  // tool below the table top
    return;
  }
  if (holding_) {
    const double floor_center = support_under_object() + obj_rest_z_;
    if (floor_center - tip_z_ > kDevLimit) {
      failure_ = FailureMode::kFloorViolation;  // pressing the object into the surface
      return;
    }
    if (cfg_.task == Task::kPush && obj_z_ - obj_rest_z_ > kDevLimit) {
      failure_ = FailureMode::kLiftDuringPush;
      return;
    }
  }
}

bool World::success() const {
  if (failure_ != FailureMode::kNone) return false;
  switch (cfg_.task) {
    case Task::kPush:
      return (obj_x_ - obj_x0_) >= cfg_.push_goal && max_obj_dev_ < kDevLimit;
    case Task::kPickPlace:
      return released_on_platform_ && !holding_;
    case Task::kPourTilt:
      return holding_ &&
             std::abs(cfg_.manip.d * std::sin(tilt_x_) - cfg_.pour_target_l) <= kLateralTol;
  }
  return false;
}

GraspProbMap World::render_grasp_map(int size) const {
  GraspProbMap m = GraspProbMap::zeros(size, size);
  const double sigma = 0.045 * size;
  const double cu = (obj_x_ - kViewX0) / kViewSpan * size;
  const double cv = (obj_y_ - kViewY0) / kViewSpan * size;
  for (int v = 0; v < size; ++v) {
    for (int u = 0; u < size; ++u) {
      const double du = u - cu, dv = v - cv;
      m.at(u, v) = static_cast<float>(0.95 * std::exp(-(du * du + dv * dv) / (2 * sigma * sigma)));
    }
  }
  return m;
}

GraspSummary World::grasp_summary() const {
  const GraspProbMap map = render_grasp_map(64);
  const StabilizeResult st = stabilize(map);
  GraspSummary g;
  if (st.low_confidence) return g;
  g.cu = st.center.u / map.width;
  g.cv = st.center.v / map.height;
  g.area = static_cast<double>(st.center.count) / (static_cast<double>(map.width) * map.height);
  g.valid = true;
  return g;
}

// ---------------------------------------------------------------------------
// Scripted experts (run on the hardware named in the config, closed loop).
// ---------------------------------------------------------------------------

namespace {

Eigen::VectorXd obs_row(const World& w, Task task) {
  const RobotState s = w.observe();
  Eigen::VectorXd o(observation_dim(task));
  o.head(7) << s.x, s.y, s.z, s.theta_x, s.theta_y, s.theta_z, s.g;
  if (task == Task::kPickPlace) {
    const GraspSummary g = w.grasp_summary();
    o(7) = g.cu;
    o(8) = g.cv;
    o(9) = g.area;
  }
  return o;
}

Eigen::VectorXd action_row(double dx, double dy, double dz, double drx, double jaw) {
  Eigen::VectorXd a(7);
  a << dx, dy, dz, 0.0, 0.0, 0.0, jaw;
  a(3) = drx;
  return a;
}

/// Pushes the held object along +x while steering the tip back to the grasp
/// height; the height corrections are the feedback signal the policy learns.
DemoTrajectory expert_push(World& w) {
  DemoTrajectory t;
  const int T = 12;
  t.obs.resize(T, observation_dim(Task::kPush));
  t.actions.resize(T, 7);
  for (int i = 0; i < T; ++i) {
    t.obs.row(i) = obs_row(w, Task::kPush).transpose();
    const double dz = std::clamp(kGraspHeight - w.tip_clearance(), -0.004, 0.004);
    const Eigen::VectorXd a = action_row(0.02, 0, dz, 0, w.config().object_width);
    t.actions.row(i) = a.transpose();
    w.apply(a);
  }
  return t;
}

DemoTrajectory expert_pick_place(World& w) {
  DemoTrajectory t;
  std::vector<Eigen::VectorXd> obs, act;
  const WorldConfig& cfg = w.config();
  const double carry_z = cfg.platform_height + cfg.object_height / 2.0 + 0.03;
  const double drop_z = cfg.platform_height + cfg.object_height / 2.0 + 0.002;
  int settle = 0;
  for (int i = 0; i < cfg.max_steps && settle < 2; ++i) {
    obs.push_back(obs_row(w, Task::kPickPlace));
    double dx = 0, dz = 0, jaw = cfg.manip.gripper.w_max;
    if (!w.holding() && !w.success()) {
      if (std::abs(w.tip_x() - w.object_x()) > 0.005) {
        dx = std::clamp(w.object_x() - w.tip_x(), -0.05, 0.05);  // line up above the object
      } else if (w.tip_clearance() - w.object_z() > 0.005) {
        dz = std::clamp(w.object_z() - w.tip_clearance(), -0.04, 0.04);  // descend
      } else {
        jaw = cfg.object_width;  // close on the object
      }
    } else if (w.holding()) {
      jaw = cfg.object_width;
      if (std::abs(w.tip_x() - cfg.platform_x) > 0.005 && w.tip_clearance() < carry_z - 0.005) {
        dz = std::clamp(carry_z - w.tip_clearance(), -0.04, 0.04);  // lift clear
      } else if (std::abs(w.tip_x() - cfg.platform_x) > 0.005) {
        dx = std::clamp(cfg.platform_x - w.tip_x(), -0.05, 0.05);  // carry over
      } else if (w.tip_clearance() - drop_z > 0.003) {
        dz = std::clamp(drop_z - w.tip_clearance(), -0.04, 0.04);  // lower
      } else {
        jaw = cfg.manip.gripper.w_max;  // release onto the platform
      }
    } else {
      ++settle;  // released; a couple of quiet rows close the trajectory
    }
    const Eigen::VectorXd a = action_row(dx, 0, dz, 0, jaw);
    act.push_back(a);
    w.apply(a);
  }
  t.obs.resize(static_cast<Eigen::Index>(obs.size()), observation_dim(Task::kPickPlace));
  t.actions.resize(static_cast<Eigen::Index>(act.size()), 7);
  for (size_t i = 0; i < obs.size(); ++i) {
    t.obs.row(static_cast<Eigen::Index>(i)) = obs[i].transpose();
    t.actions.row(static_cast<Eigen::Index>(i)) = act[i].transpose();
  }
  return t;
}

DemoTrajectory expert_pour(World& w) {
  DemoTrajectory t;
  std::vector<Eigen::VectorXd> obs, act;
  const WorldConfig& cfg = w.config();
  int settle = 0;
  for (int i = 0; i < cfg.max_steps && settle < 2; ++i) {
    obs.push_back(obs_row(w, Task::kPourTilt));
    const double remaining = cfg.tilt_target - w.tilt_x();
    if (std::abs(remaining) <= 0.005) ++settle;
    const double drx = std::clamp(remaining, -0.05, 0.05);
    const double dz = std::clamp(0.15 - w.tip_clearance(), -0.004, 0.004);
    const Eigen::VectorXd a = action_row(0, 0, dz, drx, cfg.object_width);
    act.push_back(a);
    w.apply(a);
  }
  t.obs.resize(static_cast<Eigen::Index>(obs.size()), observation_dim(Task::kPourTilt));
  t.actions.resize(static_cast<Eigen::Index>(act.size()), 7);
  for (size_t i = 0; i < obs.size(); ++i) {
    t.obs.row(static_cast<Eigen::Index>(i)) = obs[i].transpose();
    t.actions.row(static_cast<Eigen::Index>(i)) = act[i].transpose();
  }
  return t;
}

}  // namespace

DemoDataset generate_demos(const DemoConfig& cfg) {
  if (cfg.n < 1) throw ConfigError("demo generation: n must be >= 1");
  WorldConfig wc = cfg.world;
  wc.task = cfg.task;
  wc.manip = cfg.manip;
  wc.noise_level = cfg.noise_level;

  DemoDataset ds;
  ds.task = task_name(cfg.task);
  ds.control_rate_hz = wc.control_rate_hz;
  int failures = 0;
  for (int i = 0; i < cfg.n; ++i) {
    World w(wc, cfg.seed + 1000003ULL * static_cast<std::uint64_t>(i));
    DemoTrajectory t;
    switch (cfg.task) {
      case Task::kPush: t = expert_push(w); break;
      case Task::kPickPlace: t = expert_pick_place(w); break;
      case Task::kPourTilt: t = expert_pour(w); break;
    }
    if (!w.success()) {
      ++failures;
      log_warn("demo " + std::to_string(i) + " did not reach the success state (" +
               failure_name(w.failure()) + ")");
    }
    ds.trajectories.push_back(std::move(t));
  }
  if (failures > 0) log_warn(std::to_string(failures) + " of " + std::to_string(cfg.n) + " demos failed");
  ds.validate();
  log_info("generated " + std::to_string(cfg.n) + " " + ds.task + " demos, " +
           std::to_string(ds.total_steps()) + " steps total");
  return ds;
}

// ---------------------------------------------------------------------------
// Policy rollouts
// ---------------------------------------------------------------------------

namespace {

/// Maps one trained-frame action row onto the executing hardware: tilt deltas
/// through the equal-sweep retarget around the arm's current tilt, the jaw
/// command through the width-range inverse. Translation deltas carry over
/// (the height offset cancels in differences).
Eigen::VectorXd retarget_action(const Eigen::VectorXd& row, const RobotState& cur,
                                const PolicySession& s) {
  Eigen::VectorXd out = row;
  const auto constant = [](double v) { return [v](double) { return v; }; };
  out(3) = rotational_execution_step(cur.theta_x, constant(row(3)), s.base.d, s.novel.d);
  out(4) = rotational_execution_step(cur.theta_y, constant(row(4)), s.base.d, s.novel.d);
  if (row.size() >= 7) out(6) = invert_width_command(row(6), s.params, s.base, s.novel);
  return out;
}

}  // namespace

EpisodeResult run_episode(const PolicyModel& model, const ManipulatorConfig& base,
                          const WorldConfig& world_cfg, const EpisodeOptions& opt) {
  SessionOptions so = opt.session;
  so.use_adaptation = opt.with_adaptation;
  so.use_projection = opt.with_projection;
  PolicySession session = make_session(model, base, world_cfg.manip, so);
  session.control_rate_hz = world_cfg.control_rate_hz;

  WorldConfig wc = world_cfg;
  wc.pour_target_l = base.d * std::sin(wc.tilt_target);
  World w(wc, opt.seed);
  std::mt19937_64 rng(opt.seed ^ 0x9e3779b97f4a7c15ULL);

  EpisodeResult res;
  res.target_l = wc.pour_target_l;

  if (wc.task == Task::kPourTilt && opt.with_adaptation) {
    // Closed-loop tilt retargeting: the policy is consulted in the trained
    // frame, the arm executes the equal-sweep increment.
    const double arg = wc.pour_target_l / wc.manip.d;
    if (std::abs(arg) > 1) throw RotationDomain("pour target beyond the executing arm's reach");
    const double theta_target_new = std::asin(arg);
    const auto policy_delta = [&](double) -> double {
      const GenerationResult gen = generate_trajectory(session, w.observe(), rng);
      return gen.actions(0, 3);
    };
    const auto apply_delta = [&](double d) -> double {
      Eigen::VectorXd a = Eigen::VectorXd::Zero(7);
      a(3) = d;
      a(6) = w.jaw();
      w.apply(a);
      return w.tilt_x();
    };
    const TiltLoopResult tl =
        execute_rotational_adaptation(policy_delta, apply_delta, w.tilt_x(), theta_target_new,
                                      base.d, wc.manip.d, wc.max_steps, 0.01);
    res.tilt_rows = tl.rows;
  } else {
    const int exec = opt.exec_steps > 0 ? std::min(opt.exec_steps, model.horizon)
                                        : std::max(1, model.horizon / 2);
    while (!w.failed() && !w.success() && w.ticks() < wc.max_steps) {
      const RobotState raw = w.observe();
      GraspSummary gs;
      const GraspSummary* vp = nullptr;
      if (model.obs_dim > 7) {
        gs = w.grasp_summary();
        vp = &gs;
      }
      const GenerationResult gen = generate_trajectory(session, raw, rng, vp);
      for (int t = 0; t < exec; ++t) {
        Eigen::VectorXd row = gen.actions.row(t).transpose();
        if (opt.with_adaptation) row = retarget_action(row, w.observe(), session);
        const bool alive = w.apply(row);
        if (opt.record_trace) {
          TrajectoryStep st = gen.decoded[static_cast<size_t>(t)];
          st.t = static_cast<double>(w.ticks()) / wc.control_rate_hz;
          res.trace.push_back(std::move(st));
        }
        if (!alive || w.success()) break;
      }
    }
  }

  res.success = w.success();
  res.failure = w.failure();
  if (!res.success && res.failure == FailureMode::kNone) res.failure = FailureMode::kTimeout;
  if (res.success) res.failure = FailureMode::kNone;
  res.steps = w.ticks();
  res.displacement = w.object_displacement();
  res.max_height_dev = w.max_object_dev();
  res.min_clearance = w.min_clearance_seen();
  res.terminal_l = wc.manip.d * std::sin(w.tilt_x());
  return res;
}

EvalSummary evaluate(const PolicyModel& model, const ManipulatorConfig& base,
                     const WorldConfig& world_cfg, int episodes, const EpisodeOptions& opt) {
  if (episodes < 1) throw ConfigError("evaluation: episodes must be >= 1");
  EvalSummary s;
  s.episodes = episodes;
  for (int e = 0; e < episodes; ++e) {
    EpisodeOptions eo = opt;
    eo.seed = opt.seed + 9973ULL * static_cast<std::uint64_t>(e) + 1;
    EpisodeResult r;
    try {
      r = run_episode(model, base, world_cfg, eo);
    } catch (const ComputeError& ex) {
      // A retargeting that leaves the hardware's reachable set fails this
      // episode; the remaining episodes still run.
      log_warn("episode " + std::to_string(e) + " infeasible: " + ex.what());
      r.success = false;
      r.failure = FailureMode::kInfeasible;
    }
    if (r.success) {
      ++s.successes;
    } else {
      ++s.failures[failure_name(r.failure)];
    }
    s.results.push_back(std::move(r));
  }
  s.success_rate = static_cast<double>(s.successes) / episodes;
  log_info("evaluated " + std::to_string(episodes) + " episodes: success rate " +
           std::to_string(s.success_rate));
  return s;
}

std::vector<SweepRow> sweep_configs(const PolicyModel& model, const ManipulatorConfig& base,
                                    const std::vector<ManipulatorConfig>& novels, Task task,
                                    int episodes, std::uint64_t seed) {
  std::vector<SweepRow> rows;
  for (const auto& novel : novels) {
    WorldConfig wc;
    wc.task = task;
    wc.manip = novel;
    wc.noise_level = 0.002;
    EpisodeOptions opt;
    opt.seed = seed;
    SweepRow row;
    row.gripper_id = novel.gripper.id;
    opt.with_adaptation = true;
    opt.with_projection = true;
    row.with_ap = evaluate(model, base, wc, episodes, opt).success_rate;
    opt.with_adaptation = false;
    opt.with_projection = false;
    row.without_ap = evaluate(model, base, wc, episodes, opt).success_rate;
    log_info("sweep " + row.gripper_id + ": with " + std::to_string(row.with_ap) + ", without " +
             std::to_string(row.without_ap));
    rows.push_back(std::move(row));
  }
  return rows;
}

void save_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open " + path.string() + " for writing");
  f << "gripper_id,with_ap,without_ap\n";
  for (const auto& r : rows) f << r.gripper_id << "," << r.with_ap << "," << r.without_ap << "\n";
  if (!f) throw ConfigError("failed writing " + path.string());
}

void save_eval_csv(const EvalSummary& s, const std::string& label, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open " + path.string() + " for writing");
  f << "label,episodes,successes,success_rate,failures\n";
  f << label << "," << s.episodes << "," << s.successes << "," << s.success_rate << ",";
  bool first = true;
  for (const auto& [name, count] : s.failures) {
    if (!first) f << ";";
    f << name << ":" << count;
    first = false;
  }
  f << "\n";
  if (!f) throw ConfigError("failed writing " + path.string());
}

}  // namespace cdp
