#include "cdp/dataset.hpp"

#include "json_io.hpp"

namespace cdp {

using detail::json;

int DemoDataset::obs_dim() const {
  return trajectories.empty() ? 0 : static_cast<int>(trajectories.front().obs.cols());
}

int DemoDataset::action_dim() const {
  return trajectories.empty() ? 0 : static_cast<int>(trajectories.front().actions.cols());
}

int DemoDataset::total_steps() const {
  int n = 0;
  for (const auto& t : trajectories) n += static_cast<int>(t.actions.rows());
  return n;
}

void DemoDataset::validate() const {
  if (trajectories.empty()) throw EmptyDataset("dataset has no trajectories");
  const auto od = trajectories.front().obs.cols();
  const auto ad = trajectories.front().actions.cols();
  for (const auto& t : trajectories) {
    if (t.obs.rows() != t.actions.rows()) {
      throw ShapeMismatch("dataset: obs/action row counts differ within a trajectory");
    }
    if (t.obs.rows() == 0) throw EmptyDataset("dataset contains an empty trajectory");
    if (t.obs.cols() != od || t.actions.cols() != ad) {
      throw ShapeMismatch("dataset: feature widths differ across trajectories");
    }
  }
  if (ad < 1 || od < 1) throw ShapeMismatch("dataset: zero-width features");
}

void save_dataset(const DemoDataset& ds, const std::filesystem::path& path) {
  ds.validate();
  json j;
  j["format_version"] = 1;
  j["task"] = ds.task;
  j["control_rate_hz"] = ds.control_rate_hz;
  json trajs = json::array();
  for (const auto& t : ds.trajectories) {
    json jt;
    jt["obs"] = detail::matrix_to_json(t.obs);
    jt["actions"] = detail::matrix_to_json(t.actions);
    trajs.push_back(std::move(jt));
  }
  j["trajectories"] = std::move(trajs);
  detail::write_json_file(j, path);
}

DemoDataset load_dataset(const std::filesystem::path& path) {
  const json j = detail::parse_json_file(path);
  if (!j.contains("format_version") || j["format_version"].get<int>() != 1) {
    throw ConfigError(path.string() + ": unsupported dataset format_version");
  }
  DemoDataset ds;
  ds.task = j.value("task", std::string{});
  ds.control_rate_hz = j.value("control_rate_hz", 2.0);
  if (!j.contains("trajectories")) throw ConfigError(path.string() + ": missing trajectories");
  for (const auto& jt : j["trajectories"]) {
    DemoTrajectory t;
    t.obs = detail::matrix_from_json(jt.at("obs"), "obs");
    t.actions = detail::matrix_from_json(jt.at("actions"), "actions");
    ds.trajectories.push_back(std::move(t));
  }
  ds.validate();
  return ds;
}

namespace {

Eigen::MatrixXd stack_rows(const DemoDataset& ds, bool actions) {
  ds.validate();
  const int cols = actions ? ds.action_dim() : ds.obs_dim();
  Eigen::MatrixXd all(ds.total_steps(), cols);
  Eigen::Index at = 0;
  for (const auto& t : ds.trajectories) {
    const Eigen::MatrixXd& src = actions ? t.actions : t.obs;
    all.middleRows(at, src.rows()) = src;
    at += src.rows();
  }
  return all;
}

}  // namespace

NormStats dataset_action_stats(const DemoDataset& ds) { return compute_norm_stats(stack_rows(ds, true)); }

NormStats dataset_obs_stats(const DemoDataset& ds) { return compute_norm_stats(stack_rows(ds, false)); }

void save_norm_stats(const NormStats& action, const NormStats& obs, const std::filesystem::path& path) {
  action.validate();
  obs.validate();
  json j;
  j["format_version"] = 1;
  j["action"] = {{"center", detail::vector_to_json(action.center)},
                 {"half_range", detail::vector_to_json(action.half_range)}};
  j["obs"] = {{"center", detail::vector_to_json(obs.center)},
              {"half_range", detail::vector_to_json(obs.half_range)}};
  detail::write_json_file(j, path);
}

void load_norm_stats(const std::filesystem::path& path, NormStats& action, NormStats& obs) {
  const json j = detail::parse_json_file(path);
  if (!j.contains("format_version") || j["format_version"].get<int>() != 1) {
    throw ConfigError(path.string() + ": unsupported stats format_version");
  }
  action.center = detail::vector_from_json(j.at("action").at("center"), "action center");
  action.half_range = detail::vector_from_json(j.at("action").at("half_range"), "action half_range");
  obs.center = detail::vector_from_json(j.at("obs").at("center"), "obs center");
  obs.half_range = detail::vector_from_json(j.at("obs").at("half_range"), "obs half_range");
  action.validate();
  obs.validate();
}

}  // namespace cdp
