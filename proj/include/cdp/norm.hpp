#pragma once

#include <Eigen/Dense>

#include "cdp/errors.hpp"

namespace cdp {

/// Per-dimension affine map between physical units and the [-1, 1] band the
/// policy operates in: denormalize(u) = center + half_range .* u.
struct NormStats {
  Eigen::VectorXd center;
  Eigen::VectorXd half_range;  ///< strictly positive

  int dims() const { return static_cast<int>(center.size()); }

  /// Throws ConfigError on size mismatch or non-positive half_range.
  void validate() const;

  Eigen::VectorXd normalize(const Eigen::VectorXd& physical) const;
  Eigen::VectorXd denormalize(const Eigen::VectorXd& latent) const;

  /// Row-wise variants; each row is one sample.
  Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& physical) const;
  Eigen::MatrixXd denormalize_rows(const Eigen::MatrixXd& latent) const;
};

/// Min-max statistics over the rows of `samples`: center = (max+min)/2,
/// half_range = max((max-min)/2, min_half_range). The floor keeps the map
/// invertible for dimensions that are constant in the data, and keeps it
/// *contractive* there: residual sampler noise on a constant dimension
/// decodes to at most ~min_half_range of physical wobble instead of being
/// passed through at unit scale. Throws EmptyDataset when `samples` has no
/// rows.
NormStats compute_norm_stats(const Eigen::MatrixXd& samples,
                             double min_half_range = 1e-3);

}  // namespace cdp
