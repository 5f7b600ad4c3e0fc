#pragma once

#include <stdexcept>

namespace cdp {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid configuration, arguments, or file contents. The CLI maps these to
/// exit code 2 (usage error).
struct ConfigError : Error {
  using Error::Error;
};

/// Tensor/vector dimensions do not agree.
struct ShapeMismatch : ConfigError {
  using ConfigError::ConfigError;
};

/// A gripper's open width equals its grasp width; the width ratio is undefined.
struct ZeroWidthRange : ConfigError {
  using ConfigError::ConfigError;
};

/// Dataset contains no usable trajectories or windows.
struct EmptyDataset : ConfigError {
  using ConfigError::ConfigError;
};

/// Diffusion step index outside [1, K] (or not on the active substep plan).
struct StepOutOfRange : ConfigError {
  using ConfigError::ConfigError;
};

/// Numerical failure at run time. The CLI maps these to exit code 1.
struct ComputeError : Error {
  using Error::Error;
};

/// |d_ratio * sin(theta)| > 1: the requested tilt has no equivalent on the
/// target arm.
struct RotationDomain : ComputeError {
  using ComputeError::ComputeError;
};

/// Constraint interval is empty (lower > upper); no correction exists.
struct Infeasible : ComputeError {
  using ComputeError::ComputeError;
};

/// Iterative solve exceeded its iteration budget.
struct NonConvergence : ComputeError {
  using ComputeError::ComputeError;
};

/// NaN or Inf encountered where finite values are required.
struct NonFinite : ComputeError {
  using ComputeError::ComputeError;
};

/// Operation on an empty pixel/support set.
struct EmptySet : ComputeError {
  using ComputeError::ComputeError;
};

}  // namespace cdp
