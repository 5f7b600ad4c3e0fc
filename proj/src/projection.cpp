#include "cdp/projection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "cdp/log.hpp"

namespace cdp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// asin with a guard for arguments pushed past +-1 by roundoff alone.
double safe_asin(double arg) {
  if (std::abs(arg) > 1.0) {
    if (std::abs(arg) - 1.0 > 1e-9) {
      throw RotationDomain("tilt inverse: |argument| = " + std::to_string(std::abs(arg)));
    }
    arg = (arg > 0) ? 1.0 : -1.0;
  }
  return std::asin(arg);
}

/// Executing-frame tilt with the same lateral sweep as trained-frame tilt x.
double retarget_tilt(double x, double d_ratio) { return adapt_rotation(x, d_ratio); }

/// Trained-frame tilt whose retargeted value is u.
double retarget_tilt_inverse(double u, double d_ratio) {
  return safe_asin(std::sin(u) / d_ratio);
}

}  // namespace

void ConstraintSet::validate() const {
  if (!(eps_safe > 0)) throw ConfigError("constraints: eps_safe must be > 0");
  if (!(eps_task > 0)) throw ConfigError("constraints: eps_task must be > 0");
  if (!(d_ratio > 0)) throw ConfigError("constraints: d_ratio must be > 0");
  if (horizon < 1) throw ConfigError("constraints: horizon must be >= 1");
  if (correction_dim < 1) throw ConfigError("constraints: correction_dim must be >= 1");
  for (int d : floor_dims) {
    if (d < 0 || d >= correction_dim) throw ConfigError("constraints: floor dim outside correction slots");
  }
  if (rot_dims.size() > 2) throw ConfigError("constraints: at most two tilt dims");
  for (int d : rot_dims) {
    if (d < 0 || d >= correction_dim) throw ConfigError("constraints: tilt dim outside correction slots");
  }
}

ConstraintSet compile_constraints(const ManipulatorConfig& base, const ManipulatorConfig& novel,
                                  double eps_safe, double eps_task, int horizon) {
  base.validate();
  novel.validate();
  ConstraintSet cs;
  cs.eps_safe = eps_safe;
  cs.eps_task = eps_task;
  cs.horizon = horizon;
  cs.d_ratio = base.d / novel.d;
  cs.validate();
  return cs;
}

Eigen::VectorXd qp_solve_box_halfspace(const Eigen::VectorXd& q, const Eigen::VectorXd& lower,
                                       const Eigen::VectorXd& upper) {
  if (q.size() != lower.size() || q.size() != upper.size()) {
    throw ShapeMismatch("box projection: q/lower/upper sizes differ");
  }
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (lower(i) > upper(i)) {
      throw Infeasible("box projection: empty box at slot " + std::to_string(i));
    }
  }
  return q.cwiseMax(lower).cwiseMin(upper);
}

Eigen::VectorXd qp_solve_box_halfspace_active_set(const Eigen::VectorXd& q, const Eigen::VectorXd& lower,
                                                  const Eigen::VectorXd& upper) {
  if (q.size() != lower.size() || q.size() != upper.size()) {
    throw ShapeMismatch("box projection: q/lower/upper sizes differ");
  }
  const Eigen::Index n = q.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (lower(i) > upper(i)) {
      throw Infeasible("box projection: empty box at slot " + std::to_string(i));
    }
  }
  // Working set per slot: 0 free, -1 pinned at lower, +1 pinned at upper.
  std::vector<int> state(static_cast<size_t>(n), 0);
  Eigen::VectorXd v = q;
  const int budget = static_cast<int>(4 * n + 8);
  for (int iter = 0; iter < budget; ++iter) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto s = state[static_cast<size_t>(i)];
      v(i) = (s == 0) ? q(i) : (s < 0 ? lower(i) : upper(i));
    }
    // Add the most violated primal bound to the working set.
    Eigen::Index worst = -1;
    int worst_side = 0;
    double worst_viol = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (state[static_cast<size_t>(i)] != 0) continue;
      if (lower(i) - v(i) > worst_viol) {
        worst_viol = lower(i) - v(i);
        worst = i;
        worst_side = -1;
      }
      if (v(i) - upper(i) > worst_viol) {
        worst_viol = v(i) - upper(i);
        worst = i;
        worst_side = +1;
      }
    }
    if (worst >= 0) {
      state[static_cast<size_t>(worst)] = worst_side;
      continue;
    }
    // Drop one pinned slot whose multiplier went negative.
    Eigen::Index drop = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto s = state[static_cast<size_t>(i)];
      if (s < 0 && lower(i) - q(i) < 0) drop = i;
      if (s > 0 && q(i) - upper(i) < 0) drop = i;
      if (drop >= 0) break;
    }
    if (drop >= 0) {
      state[static_cast<size_t>(drop)] = 0;
      continue;
    }
    return v;  // primal feasible, duals nonnegative
  }
  throw NonConvergence("box projection: working set exceeded its budget");
}

StepProjection project_step(double z, const Eigen::Vector2d& theta_anchor,
                            const Eigen::VectorXd& action, const ConstraintSet& cs) {
  cs.validate();
  if (action.size() < cs.correction_dim) {
    throw ShapeMismatch("project_step: action narrower than correction slots");
  }
  const Eigen::VectorXd q = Eigen::VectorXd::Zero(cs.correction_dim);
  Eigen::VectorXd lower = Eigen::VectorXd::Zero(cs.correction_dim);
  Eigen::VectorXd upper = Eigen::VectorXd::Zero(cs.correction_dim);
  for (int fd : cs.floor_dims) {
    lower(fd) = cs.eps_safe - (z + action(fd));
    upper(fd) = kInf;
  }
  Eigen::Vector2d drift = Eigen::Vector2d::Zero();
  for (size_t j = 0; j < cs.rot_dims.size(); ++j) {
    const int rd = cs.rot_dims[j];
    const double anchor = theta_anchor(static_cast<Eigen::Index>(j));
    drift(static_cast<Eigen::Index>(j)) =
        retarget_tilt(anchor + action(rd), cs.d_ratio) - retarget_tilt(anchor, cs.d_ratio);
    lower(rd) = drift(static_cast<Eigen::Index>(j)) - cs.eps_task;
    upper(rd) = drift(static_cast<Eigen::Index>(j)) + cs.eps_task;
  }
  StepProjection sp;
  sp.nu = qp_solve_box_halfspace(q, lower, upper);
  sp.corrected_z = z;
  for (int fd : cs.floor_dims) sp.corrected_z += action(fd) + sp.nu(fd);
  sp.corrected_drift = drift;
  for (size_t j = 0; j < cs.rot_dims.size(); ++j) {
    sp.corrected_drift(static_cast<Eigen::Index>(j)) -= sp.nu(cs.rot_dims[j]);
  }
  return sp;
}

bool CorrectionVector::any() const { return nu.size() > 0 && nu.array().abs().maxCoeff() > 0.0; }

double CorrectionVector::max_abs() const {
  return nu.size() > 0 ? nu.array().abs().maxCoeff() : 0.0;
}

ProjectionResult project_horizon(double z0, const Eigen::Vector2d& theta_anchor,
                                 const ActionChunk& chunk, const NormStats& stats,
                                 const ConstraintSet& cs) {
  cs.validate();
  stats.validate();
  if (chunk.dims() != stats.dims()) {
    throw ShapeMismatch("project_horizon: chunk dims differ from normalization stats");
  }
  if (chunk.dims() < cs.correction_dim) {
    throw ShapeMismatch("project_horizon: chunk narrower than correction slots");
  }
  const int rows = chunk.horizon();
  const bool corrected_prefix = (cs.mode == CumulativeMode::kCorrectedPrefix);

  ProjectionResult out;
  out.chunk = chunk;  // untouched rows stay bit-identical to the input
  out.corrections.nu = Eigen::MatrixXd::Zero(rows, cs.correction_dim);

  double z = z0;                                        // accumulated height actually executed
  double z_raw = z0;                                    // raw prefix sums (kRawPrefix only)
  Eigen::Vector2d cum = Eigen::Vector2d::Zero();        // corrected tilt deltas, trained frame
  Eigen::Vector2d cum_raw = Eigen::Vector2d::Zero();    // raw tilt deltas
  Eigen::Vector2d anchor_ret = Eigen::Vector2d::Zero(); // retargeted anchor tilt per axis
  for (size_t j = 0; j < cs.rot_dims.size(); ++j) {
    anchor_ret(static_cast<Eigen::Index>(j)) =
        retarget_tilt(theta_anchor(static_cast<Eigen::Index>(j)), cs.d_ratio);
  }

  for (int t = 0; t < rows; ++t) {
    const Eigen::VectorXd phys = stats.denormalize(chunk.latent.row(t).transpose());
    Eigen::VectorXd nu = Eigen::VectorXd::Zero(cs.correction_dim);

    // Height floor on the accumulated sum (corrected or raw prefix).
    double dz_sum = 0.0;
    for (int fd : cs.floor_dims) dz_sum += phys(fd);
    const double z_before = corrected_prefix ? z : z_raw;
    double nu_z_total = std::max(0.0, cs.eps_safe - (z_before + dz_sum));
    if (!cs.floor_dims.empty()) {
      nu(cs.floor_dims.front()) = nu_z_total;
    } else {
      nu_z_total = 0.0;
    }
    z_raw += dz_sum;
    z += dz_sum + nu_z_total;

    // Tilt drift around the horizon anchor, measured after retargeting.
    Eigen::Vector2d dth_corrected = Eigen::Vector2d::Zero();
    for (size_t j = 0; j < cs.rot_dims.size(); ++j) {
      const Eigen::Index jj = static_cast<Eigen::Index>(j);
      const int rd = cs.rot_dims[j];
      const double anchor = theta_anchor(jj);
      const double prefix = corrected_prefix ? cum(jj) : cum_raw(jj);
      const double drift =
          retarget_tilt(anchor + prefix + phys(rd), cs.d_ratio) - anchor_ret(jj);
      const double clamped = std::clamp(drift, -cs.eps_task, cs.eps_task);
      nu(rd) = drift - clamped;
      cum_raw(jj) += phys(rd);
      if (corrected_prefix) {
        if (nu(rd) != 0.0) {
          // Exact inverse so the drift recomputed on the corrected action
          // lands on the bound instead of merely near it.
          const double theta_alt =
              retarget_tilt_inverse(anchor_ret(jj) + clamped, cs.d_ratio);
          dth_corrected(jj) = theta_alt - anchor - prefix;
        } else {
          dth_corrected(jj) = phys(rd);
        }
        cum(jj) += dth_corrected(jj);
      } else {
        dth_corrected(jj) = phys(rd) + nu(rd);  // the literal printed update
        cum(jj) += dth_corrected(jj);
      }
    }

    out.corrections.nu.row(t) = nu.transpose();
    if (nu.array().abs().maxCoeff() == 0.0) continue;  // keep the row bit-identical

    // Rewrite only the touched columns; the rest of the row keeps its bits.
    if (nu_z_total != 0.0 && !cs.floor_dims.empty()) {
      const int fd = cs.floor_dims.front();
      const double corrected = phys(fd) + nu_z_total;
      out.chunk.latent(t, fd) = (corrected - stats.center(fd)) / stats.half_range(fd);
    }
    for (size_t j = 0; j < cs.rot_dims.size(); ++j) {
      const Eigen::Index jj = static_cast<Eigen::Index>(j);
      const int rd = cs.rot_dims[j];
      if (nu(rd) == 0.0) continue;
      out.chunk.latent(t, rd) = (dth_corrected(jj) - stats.center(rd)) / stats.half_range(rd);
    }
  }

  if (out.corrections.any()) {
    log_debug("projection corrected horizon, max |nu| = " + std::to_string(out.corrections.max_abs()));
  }
  return out;
}

void save_corrections_csv(const CorrectionVector& cv, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open " + path.string() + " for writing");
  if (cv.nu.cols() == 6) {
    f << "step,nu_x,nu_y,nu_z,nu_rx,nu_ry,nu_rz\n";
  } else {
    f << "step";
    for (Eigen::Index c = 0; c < cv.nu.cols(); ++c) f << ",nu_" << c;
    f << "\n";
  }
  f.precision(17);
  for (Eigen::Index r = 0; r < cv.nu.rows(); ++r) {
    f << r;
    for (Eigen::Index c = 0; c < cv.nu.cols(); ++c) f << "," << cv.nu(r, c);
    f << "\n";
  }
  if (!f) throw ConfigError("failed writing " + path.string());
}

}  // namespace cdp
