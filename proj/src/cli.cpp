#include "cdp/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "cdp/dataset.hpp"
#include "cdp/geometry.hpp"
#include "cdp/log.hpp"
#include "cdp/mlp.hpp"
#include "cdp/pipeline.hpp"
#include "cdp/projection.hpp"
#include "cdp/sim.hpp"
#include "json_io.hpp"

namespace cdp {

using detail::json;

namespace {

RobotState parse_state(const std::string& csv) {
  std::stringstream ss(csv);
  std::vector<double> vals;
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      size_t used = 0;
      vals.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError("state: bad number '" + tok + "'");
    }
  }
  if (vals.size() != 7) throw ConfigError("state: expected 7 comma-separated values x,y,z,rx,ry,rz,g");
  RobotState s;
  s.x = vals[0];
  s.y = vals[1];
  s.z = vals[2];
  s.theta_x = vals[3];
  s.theta_y = vals[4];
  s.theta_z = vals[5];
  s.g = vals[6];
  return s;
}

json state_to_json(const RobotState& s) {
  return json{{"x", s.x},         {"y", s.y},         {"z", s.z},       {"theta_x", s.theta_x},
              {"theta_y", s.theta_y}, {"theta_z", s.theta_z}, {"g", s.g}};
}

CumulativeMode parse_cumulative(const std::string& name) {
  if (name == "corrected-prefix") return CumulativeMode::kCorrectedPrefix;
  if (name == "raw-prefix") return CumulativeMode::kRawPrefix;
  throw ConfigError("unknown cumulative mode '" + name + "' (corrected-prefix | raw-prefix)");
}

void parse_mode(const std::string& mode, EpisodeOptions& opt) {
  if (mode == "with_ap") {
    opt.with_adaptation = true;
    opt.with_projection = true;
  } else if (mode == "without_ap") {
    opt.with_adaptation = false;
    opt.with_projection = false;
  } else {
    throw ConfigError("unknown mode '" + mode + "' (with_ap | without_ap)");
  }
}

int cmd_gen_demos(const RunConfig& rc) {
  const auto catalog = load_catalog(rc.catalog);
  DemoConfig dc;
  dc.task = parse_task(rc.task);
  dc.manip = find_config(catalog, rc.base_id);
  dc.n = rc.n;
  dc.noise_level = rc.noise;
  dc.seed = static_cast<std::uint64_t>(rc.seed);
  const DemoDataset ds = generate_demos(dc);
  save_dataset(ds, rc.out);
  std::cout << "wrote " << ds.trajectories.size() << " " << ds.task << " demos ("
            << ds.total_steps() << " steps) to " << rc.out.string() << "\n";
  return 0;
}

int cmd_train(const RunConfig& rc) {
  const DemoDataset ds = load_dataset(rc.demos);
  TrainConfig tc;
  tc.steps = rc.steps;
  tc.batch = rc.batch;
  tc.hidden = rc.hidden;
  tc.horizon = rc.horizon;
  tc.k_steps = rc.k_steps;
  tc.seed = static_cast<std::uint64_t>(rc.seed);
  TrainReport report;
  const PolicyModel m = train_policy(ds, tc, &report);
  save_model(m, rc.out);
  std::cout << "trained " << m.task << " policy for " << tc.steps << " steps, final loss "
            << report.final_loss << ", saved to " << rc.out.string() << "\n";
  return 0;
}

int cmd_eval(const RunConfig& rc) {
  const PolicyModel m = load_model(rc.model);
  const auto catalog = load_catalog(rc.catalog);
  const ManipulatorConfig& base = find_config(catalog, rc.base_id);
  const Task task = parse_task(m.task);

  EpisodeOptions opt;
  parse_mode(rc.mode, opt);
  opt.seed = static_cast<std::uint64_t>(rc.seed);
  opt.exec_steps = rc.exec_steps;
  opt.session.substeps = rc.substeps;
  opt.session.projection_window = rc.projection_window;
  opt.session.eps_safe = rc.eps_safe;
  opt.session.eps_task = rc.eps_task;
  opt.record_trace = !rc.traces.empty();

  if (rc.novel_id == "all") {
    const auto rows = sweep_configs(m, base, catalog, task, rc.episodes,
                                    static_cast<std::uint64_t>(rc.seed));
    if (!rc.out.empty()) save_sweep_csv(rows, rc.out);
    for (const auto& r : rows) {
      std::cout << r.gripper_id << ": with_ap " << r.with_ap << ", without_ap " << r.without_ap
                << "\n";
    }
    return 0;
  }

  WorldConfig wc;
  wc.task = task;
  wc.manip = find_config(catalog, rc.novel_id.empty() ? rc.base_id : rc.novel_id);
  wc.noise_level = rc.noise;
  const EvalSummary s = evaluate(m, base, wc, rc.episodes, opt);
  if (!rc.out.empty()) save_eval_csv(s, rc.mode, rc.out);
  if (!rc.traces.empty() && !s.results.empty()) {
    save_trace_jsonl(s.results.front().trace, rc.traces);
  }
  std::cout << "success rate " << s.success_rate << " (" << s.successes << "/" << s.episodes
            << ")";
  for (const auto& [name, count] : s.failures) std::cout << " " << name << "=" << count;
  std::cout << "\n";
  return 0;
}

int cmd_adapt(const RunConfig& rc) {
  const auto catalog = load_catalog(rc.catalog);
  const ManipulatorConfig& base = find_config(catalog, rc.base_id);
  const ManipulatorConfig& novel = find_config(catalog, rc.novel_id);
  const AdaptationParams p = derive_adaptation(base, novel);
  const RobotState raw = parse_state(rc.state_csv);
  const RobotState adapted = adapt_state(raw, p, base, novel);
  json j;
  j["format_version"] = 1;
  j["params"] = {{"delta_d", p.delta_d}, {"alpha", p.alpha}, {"d_ratio", p.d_ratio}};
  j["state"] = state_to_json(raw);
  j["adapted"] = state_to_json(adapted);
  if (!rc.out.empty()) detail::write_json_file(j, rc.out);
  std::cout << j.dump(1, '\t') << "\n";
  return 0;
}

int cmd_project(const RunConfig& rc) {
  const json in = detail::parse_json_file(rc.chunk);
  if (!in.contains("format_version") || in["format_version"].get<int>() != 1) {
    throw ConfigError(rc.chunk.string() + ": unsupported chunk format_version");
  }
  const Eigen::MatrixXd actions = detail::matrix_from_json(in.at("actions"), "actions");
  if (actions.rows() < 1) throw ConfigError(rc.chunk.string() + ": no action rows");
  const double z0 = in.at("z0").get<double>();
  Eigen::Vector2d anchor(0, 0);
  if (in.contains("theta_anchor")) {
    const Eigen::VectorXd a = detail::vector_from_json(in["theta_anchor"], "theta_anchor");
    if (a.size() != 2) throw ConfigError("theta_anchor must have 2 entries");
    anchor = a.head<2>();
  }

  const auto catalog = load_catalog(rc.catalog);
  const ManipulatorConfig& base = find_config(catalog, rc.base_id);
  const ManipulatorConfig& novel = find_config(catalog, rc.novel_id.empty() ? rc.base_id : rc.novel_id);
  ConstraintSet cs = compile_constraints(base, novel, rc.eps_safe, rc.eps_task,
                                         static_cast<int>(actions.rows()));
  cs.mode = parse_cumulative(rc.cumulative);

  // The file carries physical rows, so project through the identity map.
  NormStats identity;
  identity.center = Eigen::VectorXd::Zero(actions.cols());
  identity.half_range = Eigen::VectorXd::Ones(actions.cols());
  ActionChunk chunk;
  chunk.latent = actions;
  const ProjectionResult res = project_horizon(z0, anchor, chunk, identity, cs);

  json out;
  out["format_version"] = 1;
  out["z0"] = z0;
  out["theta_anchor"] = {anchor(0), anchor(1)};
  out["actions"] = detail::matrix_to_json(res.chunk.latent);
  out["nu"] = detail::matrix_to_json(res.corrections.nu);
  out["corrected"] = res.corrections.any();
  out["max_correction"] = res.corrections.max_abs();
  if (!rc.out.empty()) detail::write_json_file(out, rc.out);
  std::cout << (res.corrections.any() ? "corrected, max |nu| = " + std::to_string(res.corrections.max_abs())
                                      : std::string("no correction needed"))
            << "\n";
  return 0;
}

void append_trace_csv(std::ostream& f, const std::string& label,
                      const std::vector<TrajectoryStep>& steps) {
  for (const auto& st : steps) {
    double max_nu = 0;
    for (Eigen::Index i = 0; i < st.nu.size(); ++i) max_nu = std::max(max_nu, std::abs(st.nu(i)));
    f << label << "," << st.t << "," << st.position.x() << "," << st.position.y() << ","
      << st.position.z() << "," << st.rotation.x() << "," << st.rotation.y() << ","
      << st.rotation.z() << "," << st.gripper_width << "," << (st.corrected ? 1 : 0) << ","
      << max_nu << "\n";
  }
}

int cmd_plot_export(const RunConfig& rc) {
  const auto steps = load_trace_jsonl(rc.traces);
  std::ofstream f(rc.out);
  if (!f) throw ConfigError("cannot open " + rc.out.string() + " for writing");
  f << "label,t,x,y,z,rx,ry,rz,gripper_width,corrected,max_nu\n";
  append_trace_csv(f, "main", steps);
  if (!rc.compare.empty()) append_trace_csv(f, "compare", load_trace_jsonl(rc.compare));
  if (!f) throw ConfigError("failed writing " + rc.out.string());
  std::cout << "wrote " << rc.out.string() << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  RunConfig rc;
  CLI::App app{"Trajectory generation with hardware retargeting and constraint projection"};
  app.require_subcommand(1);

  auto add_catalog = [&](CLI::App* c, bool need_novel) {
    c->add_option("--catalog", rc.catalog, "manipulator catalog JSON")->required();
    c->add_option("--base", rc.base_id, "gripper id the policy was trained with")->required();
    auto* n = c->add_option("--novel", rc.novel_id, "gripper id executing the policy");
    if (need_novel) n->required();
  };

  auto* gen = app.add_subcommand("gen-demos", "script expert demonstrations");
  gen->add_option("--task", rc.task, "push | pick_place | pour_tilt");
  add_catalog(gen, false);
  gen->add_option("-n,--demos", rc.n, "number of demonstrations");
  gen->add_option("--noise", rc.noise, "actuation jitter std [m]");
  gen->add_option("--seed", rc.seed, "RNG seed")->required();
  gen->add_option("--out", rc.out, "dataset path")->required();

  auto* train = app.add_subcommand("train", "fit the noise predictor on a demo dataset");
  train->add_option("--demos", rc.demos, "dataset path")->required();
  train->add_option("--out", rc.out, "model path")->required();
  train->add_option("--steps", rc.steps, "optimizer steps");
  train->add_option("--batch", rc.batch, "minibatch size");
  train->add_option("--hidden", rc.hidden, "hidden layer width");
  train->add_option("--horizon", rc.horizon, "action chunk length");
  train->add_option("--k-steps", rc.k_steps, "training schedule length");
  train->add_option("--seed", rc.seed, "RNG seed")->required();

  auto* eval = app.add_subcommand("eval", "roll the policy out in the simulator");
  eval->add_option("--model", rc.model, "model path")->required();
  add_catalog(eval, false);
  eval->add_option("--episodes", rc.episodes, "episodes per configuration");
  eval->add_option("--mode", rc.mode, "with_ap | without_ap");
  eval->add_option("--noise", rc.noise, "actuation jitter std [m]");
  eval->add_option("--substeps", rc.substeps, "sampler updates per generation");
  eval->add_option("--exec-steps", rc.exec_steps, "actions executed per replan (0: horizon/2)");
  eval->add_option("--projection-window", rc.projection_window, "updates projected at the end");
  eval->add_option("--eps-safe", rc.eps_safe, "height floor margin [m]");
  eval->add_option("--eps-task", rc.eps_task, "tilt drift bound [rad]");
  eval->add_option("--seed", rc.seed, "RNG seed")->required();
  eval->add_option("--out", rc.out, "summary CSV path");
  eval->add_option("--traces", rc.traces, "trace JSONL path (first episode)");

  auto* adapt = app.add_subcommand("adapt", "retarget one state between configurations");
  add_catalog(adapt, true);
  adapt->add_option("--state", rc.state_csv, "x,y,z,rx,ry,rz,g")->required();
  adapt->add_option("--out", rc.out, "result JSON path");

  auto* project = app.add_subcommand("project", "apply the constraint projection to a chunk file");
  project->add_option("--chunk", rc.chunk, "chunk JSON (z0, theta_anchor, actions)")->required();
  add_catalog(project, false);
  project->add_option("--eps-safe", rc.eps_safe, "height floor margin [m]");
  project->add_option("--eps-task", rc.eps_task, "tilt drift bound [rad]");
  project->add_option("--cumulative", rc.cumulative, "corrected-prefix | raw-prefix");
  project->add_option("--out", rc.out, "corrected chunk JSON path");

  auto* plot = app.add_subcommand("plot-export", "flatten trace JSONL into plottable CSV");
  plot->add_option("--traces", rc.traces, "trace JSONL path")->required();
  plot->add_option("--compare", rc.compare, "second trace to export alongside");
  plot->add_option("--out", rc.out, "CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_demos(rc);
    if (train->parsed()) return cmd_train(rc);
    if (eval->parsed()) return cmd_eval(rc);
    if (adapt->parsed()) return cmd_adapt(rc);
    if (project->parsed()) return cmd_project(rc);
    if (plot->parsed()) return cmd_plot_export(rc);
    throw ConfigError("no subcommand selected");
  } catch (const ConfigError& e) {
    log_error(e.what());
    return 2;
  } catch (const ComputeError& e) {
    log_error(e.what());
    return 1;
  } catch (const std::exception& e) {
    log_error(std::string("unexpected: ") + e.what());
    return 1;
  }
}

}  // namespace cdp
