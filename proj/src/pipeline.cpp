#include "cdp/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "cdp/log.hpp"
#include "json_io.hpp"

namespace cdp {

using detail::json;

namespace {

void validate_session(const PolicySession& s) {
  if (s.predictor == nullptr) throw ConfigError("session: missing predictor");
  if (s.horizon < 1 || s.action_dim < 1 || s.obs_dim < 1 || s.history < 1) {
    throw ConfigError("session: dims must be >= 1");
  }
  s.schedule.validate();
  s.action_stats.validate();
  s.obs_stats.validate();
  if (s.action_stats.dims() != s.action_dim) throw ShapeMismatch("session: action stats width differs");
  if (s.obs_stats.dims() != s.obs_dim) throw ShapeMismatch("session: observation stats width differs");
  s.base.validate();
  s.novel.validate();
  s.constraints.validate();
  if (s.plan.empty() || s.plan.front() != s.schedule.num_steps()) {
    throw ConfigError("session: sampling plan must start at the schedule's last step");
  }
  if (s.opt.projection_window < 0) throw ConfigError("session: projection window must be >= 0");
}

}  // namespace

PolicySession make_session_raw(std::shared_ptr<const NoisePredictor> predictor,
                               NoiseSchedule schedule, NormStats action_stats, NormStats obs_stats,
                               int horizon, int action_dim, int obs_dim,
                               const ManipulatorConfig& base, const ManipulatorConfig& novel,
                               const SessionOptions& opt) {
  PolicySession s;
  s.predictor = std::move(predictor);
  s.schedule = std::move(schedule);
  s.action_stats = std::move(action_stats);
  s.obs_stats = std::move(obs_stats);
  s.horizon = horizon;
  s.action_dim = action_dim;
  s.obs_dim = obs_dim;
  s.base = base;
  s.novel = novel;
  s.params = derive_adaptation(base, novel);
  s.constraints = compile_constraints(base, novel, opt.eps_safe, opt.eps_task, horizon);
  s.constraints.mode = opt.mode;
  s.plan = substep_plan(s.schedule.num_steps(), opt.substeps);
  s.opt = opt;
  s.floor_reference = base.z_base;
  validate_session(s);
  return s;
}

PolicySession make_session(const PolicyModel& model, const ManipulatorConfig& base,
                           const ManipulatorConfig& novel, const SessionOptions& opt) {
  model.validate();
  PolicySession s = make_session_raw(std::make_shared<MlpPredictor>(model.net), model.schedule,
                                     model.action_stats, model.obs_stats, model.horizon,
                                     model.action_dim, model.obs_dim, base, novel, opt);
  s.history = model.history;
  return s;
}

RobotState session_adapted_state(const PolicySession& s, const RobotState& raw) {
  if (!s.opt.use_adaptation) return raw;
  return adapt_state(raw, s.params, s.base, s.novel);
}

Observation assemble_observation(const PolicySession& s, const RobotState& raw,
                                 const GraspSummary* vision) {
  const RobotState st = session_adapted_state(s, raw);
  const double pose[7] = {st.x, st.y, st.z, st.theta_x, st.theta_y, st.theta_z, st.g};
  Eigen::VectorXd phys = Eigen::VectorXd::Zero(s.obs_dim);
  const int npose = std::min(s.obs_dim, 7);
  for (int i = 0; i < npose; ++i) phys(i) = pose[i];
  if (s.obs_dim > 7) {
    double extra[3] = {0, 0, 0};
    if (vision != nullptr && vision->valid) {
      extra[0] = vision->cu;
      extra[1] = vision->cv;
      extra[2] = vision->area;
    } else {
      log_debug("observation requested vision features without a valid grasp summary");
    }
    const int nextra = std::min(s.obs_dim - 7, 3);
    for (int i = 0; i < nextra; ++i) phys(7 + i) = extra[i];
  }
  const Eigen::VectorXd one = s.obs_stats.normalize(phys);
  Observation obs;
  obs.features.resize(static_cast<Eigen::Index>(s.history) * s.obs_dim);
  for (int h = 0; h < s.history; ++h) {
    obs.features.segment(static_cast<Eigen::Index>(h) * s.obs_dim, s.obs_dim) = one;
  }
  return obs;
}

GenerationResult generate_trajectory(const PolicySession& s, const RobotState& raw,
                                     std::mt19937_64& rng, const GraspSummary* vision) {
  validate_session(s);
  const RobotState adapted = session_adapted_state(s, raw);
  const Observation obs = assemble_observation(s, raw, vision);
  const double clearance0 = adapted.z - s.floor_reference;
  const Eigen::Vector2d anchor(adapted.theta_x, adapted.theta_y);

  GenerationResult out;
  out.corrections.nu = Eigen::MatrixXd::Zero(s.horizon, s.constraints.correction_dim);

  std::function<void(int, ActionChunk&)> hook;
  if (s.opt.use_projection) {
    hook = [&](int remaining, ActionChunk& chunk) {
      if (remaining > s.opt.projection_window) return;
      ProjectionResult pr = project_horizon(clearance0, anchor, chunk, s.action_stats, s.constraints);
      chunk = std::move(pr.chunk);
      if (remaining == 0) out.corrections = std::move(pr.corrections);
    };
  }
  out.chunk = sample_chunk(obs, s.horizon, s.action_dim, *s.predictor, s.schedule, s.plan, rng, hook);
  out.actions = s.action_stats.denormalize_rows(out.chunk.latent);

  // Integrate absolute poses in the trained frame.
  Eigen::Vector3d pos(adapted.x, adapted.y, adapted.z);
  Eigen::Vector3d rot(adapted.theta_x, adapted.theta_y, adapted.theta_z);
  out.decoded.reserve(static_cast<size_t>(s.horizon));
  for (int t = 0; t < s.horizon; ++t) {
    const Eigen::VectorXd row = out.actions.row(t).transpose();
    TrajectoryStep step;
    step.t = static_cast<double>(t + 1) / s.control_rate_hz;
    pos += row.head(3);
    if (s.action_dim >= 6) rot += row.segment(3, 3);
    step.position = pos;
    step.rotation = rot;
    step.gripper_width = (s.action_dim >= 7) ? row(6) : adapted.g;
    step.nu = out.corrections.nu.row(t).transpose();
    step.corrected = step.nu.size() > 0 && step.nu.array().abs().maxCoeff() > 0.0;
    out.decoded.push_back(std::move(step));
  }
  return out;
}

TiltLoopResult execute_rotational_adaptation(const std::function<double(double)>& policy_tilt_delta,
                                             const std::function<double(double)>& apply_new_delta,
                                             double theta_new0, double theta_target_new,
                                             double d_base, double d_new, int max_steps,
                                             double tol) {
  if (max_steps < 1) throw ConfigError("tilt loop: max_steps must be >= 1");
  if (!(tol > 0)) throw ConfigError("tilt loop: tol must be > 0");
  TiltLoopResult r;
  double th = theta_new0;
  for (int step = 0; step < max_steps; ++step) {
    if (std::abs(th - theta_target_new) <= tol) break;
    TiltStep row;
    row.theta_new = th;
    const auto observe = [&](double theta_base) {
      row.theta_base = theta_base;
      row.dtheta_base = policy_tilt_delta(theta_base);
      return row.dtheta_base;
    };
    row.dtheta_new = rotational_execution_step(th, observe, d_base, d_new);
    th = apply_new_delta(row.dtheta_new);
    r.rows.push_back(row);
  }
  r.theta_new_final = th;
  r.reached = std::abs(th - theta_target_new) <= tol;
  if (!r.reached) {
    log_warn("tilt loop stopped " + std::to_string(std::abs(th - theta_target_new)) +
             " rad from the target after " + std::to_string(r.rows.size()) + " steps");
  }
  return r;
}

void save_trace_jsonl(const std::vector<TrajectoryStep>& steps, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open " + path.string() + " for writing");
  json header;
  header["format_version"] = 1;
  header["kind"] = "trajectory_trace";
  header["steps"] = steps.size();
  f << header.dump() << "\n";
  for (const auto& st : steps) {
    json j;
    j["t"] = st.t;
    j["position"] = {st.position.x(), st.position.y(), st.position.z()};
    j["rotation"] = {st.rotation.x(), st.rotation.y(), st.rotation.z()};
    j["gripper_width"] = st.gripper_width;
    j["corrected"] = st.corrected;
    j["nu"] = detail::vector_to_json(st.nu);
    f << j.dump() << "\n";
  }
  if (!f) throw ConfigError("failed writing " + path.string());
}

std::vector<TrajectoryStep> load_trace_jsonl(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line)) throw ConfigError(path.string() + ": empty trace");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": malformed header: " + e.what());
  }
  if (!header.contains("format_version") || header["format_version"].get<int>() != 1) {
    throw ConfigError(path.string() + ": unsupported trace format_version");
  }
  std::vector<TrajectoryStep> steps;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ConfigError(path.string() + ": malformed row: " + e.what());
    }
    TrajectoryStep st;
    st.t = j.at("t").get<double>();
    const auto& p = j.at("position");
    const auto& r = j.at("rotation");
    if (p.size() != 3 || r.size() != 3) throw ConfigError(path.string() + ": bad pose row");
    st.position = Eigen::Vector3d(p[0].get<double>(), p[1].get<double>(), p[2].get<double>());
    st.rotation = Eigen::Vector3d(r[0].get<double>(), r[1].get<double>(), r[2].get<double>());
    st.gripper_width = j.at("gripper_width").get<double>();
    st.corrected = j.value("corrected", false);
    st.nu = detail::vector_from_json(j.value("nu", json::array()), "nu");
    steps.push_back(std::move(st));
  }
  return steps;
}

}  // namespace cdp
