#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

#include "cdp/norm.hpp"

namespace cdp {

/// One demonstrated trajectory: per-step observation features and actions in
/// physical units. Rows are control ticks.
struct DemoTrajectory {
  Eigen::MatrixXd obs;      ///< T x obs_dim
  Eigen::MatrixXd actions;  ///< T x action_dim
};

struct DemoDataset {
  std::string task;
  double control_rate_hz = 2.0;
  std::vector<DemoTrajectory> trajectories;

  int obs_dim() const;
  int action_dim() const;
  int total_steps() const;

  /// Throws EmptyDataset when there are no trajectories or steps, ShapeMismatch
  /// when dimensions disagree across trajectories.
  void validate() const;
};

void save_dataset(const DemoDataset& ds, const std::filesystem::path& path);
DemoDataset load_dataset(const std::filesystem::path& path);

/// Min-max normalization statistics over every step of every trajectory.
NormStats dataset_action_stats(const DemoDataset& ds);
NormStats dataset_obs_stats(const DemoDataset& ds);

/// Sidecar with both stats blocks (format_version 1).
void save_norm_stats(const NormStats& action, const NormStats& obs, const std::filesystem::path& path);
void load_norm_stats(const std::filesystem::path& path, NormStats& action, NormStats& obs);

}  // namespace cdp
