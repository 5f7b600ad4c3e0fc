#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <vector>

#include "cdp/diffusion.hpp"
#include "cdp/geometry.hpp"
#include "cdp/norm.hpp"

namespace cdp {

enum class CumulativeMode {
  /// Each step's constraint sees the already-corrected prefix; the accumulated
  /// height equals the floor exactly once it binds (minimal total correction).
  kCorrectedPrefix,
  /// Constraints are formed on raw prefix sums and the correction is added
  /// verbatim to the action (the literal printed update). Overshoots the
  /// floor when drops persist; kept for comparison runs.
  kRawPrefix,
};

/// Hard requirements on the de-normalized action horizon.
struct ConstraintSet {
  double eps_safe = 0.01;  ///< min accumulated height [m]
  double eps_task = 0.05;  ///< max per-horizon retargeted tilt drift [rad]
  double d_ratio = 1.0;    ///< base arm / novel arm
  int horizon = 8;
  std::vector<int> floor_dims = {2};   ///< action columns accumulating height
  std::vector<int> rot_dims = {3, 4};  ///< action columns accumulating tilt
  int correction_dim = 6;              ///< reported correction width (x,y,z,rx,ry,rz)
  CumulativeMode mode = CumulativeMode::kCorrectedPrefix;

  /// Throws ConfigError on non-positive margins/horizon or out-of-range dims.
  void validate() const;
};

/// Builds the default constraint set for a (base, novel) pairing.
ConstraintSet compile_constraints(const ManipulatorConfig& base, const ManipulatorConfig& novel,
                                  double eps_safe = 0.01, double eps_task = 0.05, int horizon = 8);

/// Minimum-norm point of the box [lower, upper] measured from q, i.e.
/// argmin ||v - q||^2 s.t. lower <= v <= upper: the element-wise clamp of q.
/// Entries of lower/upper may be +-infinity. Throws Infeasible when
/// lower > upper anywhere, ShapeMismatch on size disagreement.
Eigen::VectorXd qp_solve_box_halfspace(const Eigen::VectorXd& q, const Eigen::VectorXd& lower,
                                       const Eigen::VectorXd& upper);

/// Same optimum through a working-set iteration on the KKT system; exists to
/// cross-check the closed form and as the seat for future coupled constraints.
/// Throws NonConvergence if the working set cycles past its budget.
Eigen::VectorXd qp_solve_box_halfspace_active_set(const Eigen::VectorXd& q, const Eigen::VectorXd& lower,
                                                  const Eigen::VectorXd& upper);

struct StepProjection {
  Eigen::VectorXd nu;               ///< minimal correction per slot (x,y,z,rx,ry,rz)
  double corrected_z = 0;           ///< accumulated height after correction
  Eigen::Vector2d corrected_drift;  ///< tilt drift clamped into [-eps_task, eps_task]
};

/// Single-step minimum-norm correction:
///   (i)  z + dz + nu_z >= eps_safe                       (height floor)
///   (ii) |f(theta_anchor + dtheta) - f(theta_anchor) - nu_t| <= eps_task,
///        f(x) = asin(d_ratio * sin(x)), per tilt axis     (drift bound)
/// `action` is one de-normalized action row; dz is read from floor_dims and
/// dtheta from rot_dims (the caller passes deltas relative to theta_anchor).
/// Slots without constraints stay exactly 0.
StepProjection project_step(double z, const Eigen::Vector2d& theta_anchor,
                            const Eigen::VectorXd& action, const ConstraintSet& cs);

struct CorrectionVector {
  Eigen::MatrixXd nu;  ///< horizon x correction_dim; zero rows where untouched

  bool any() const;
  double max_abs() const;
};

struct ProjectionResult {
  ActionChunk chunk;  ///< corrected, normalized
  CorrectionVector corrections;
};

/// Applies the per-step correction across the horizon of a normalized chunk.
/// Height constraints accumulate with the corrected prefix (kCorrectedPrefix),
/// so the accumulated height is >= eps_safe at every step; tilt drift around
/// the anchor is clamped to eps_task and mapped back through the exact inverse
/// f^{-1}(u) = asin(sin(u)/d_ratio), so the drift recomputed on corrected
/// actions also satisfies the bound. Rows needing no correction are passed
/// through bit-identically. z0 is the accumulated-height origin in the same
/// frame as the floor (callers typically pass tool-tip clearance).
ProjectionResult project_horizon(double z0, const Eigen::Vector2d& theta_anchor,
                                 const ActionChunk& chunk, const NormStats& stats,
                                 const ConstraintSet& cs);

/// Writes corrections as CSV: step, nu_x, nu_y, nu_z, nu_rx, nu_ry, nu_rz.
void save_corrections_csv(const CorrectionVector& cv, const std::filesystem::path& path);

}  // namespace cdp
