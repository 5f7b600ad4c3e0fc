#include "cdp/norm.hpp"

namespace cdp {

void NormStats::validate() const {
  if (center.size() != half_range.size()) throw ShapeMismatch("norm stats: center/half_range size differ");
  if (center.size() == 0) throw ConfigError("norm stats: empty");
  if ((half_range.array() <= 0).any()) throw ConfigError("norm stats: half_range must be > 0");
}

Eigen::VectorXd NormStats::normalize(const Eigen::VectorXd& physical) const {
  if (physical.size() != center.size()) throw ShapeMismatch("normalize: dimension mismatch");
  return ((physical - center).array() / half_range.array()).matrix();
}

Eigen::VectorXd NormStats::denormalize(const Eigen::VectorXd& latent) const {
  if (latent.size() != center.size()) throw ShapeMismatch("denormalize: dimension mismatch");
  return center + (latent.array() * half_range.array()).matrix();
}

Eigen::MatrixXd NormStats::normalize_rows(const Eigen::MatrixXd& physical) const {
  if (physical.cols() != center.size()) throw ShapeMismatch("normalize_rows: dimension mismatch");
  return (physical.rowwise() - center.transpose()).array().rowwise() /
         half_range.transpose().array();
}

Eigen::MatrixXd NormStats::denormalize_rows(const Eigen::MatrixXd& latent) const {
  if (latent.cols() != center.size()) throw ShapeMismatch("denormalize_rows: dimension mismatch");
  return (latent.array().rowwise() * half_range.transpose().array()).matrix().rowwise() +
         center.transpose();
}

NormStats compute_norm_stats(const Eigen::MatrixXd& samples, double min_half_range) {
  if (samples.rows() == 0 || samples.cols() == 0) throw EmptyDataset("norm stats: no samples");
  NormStats s;
  const Eigen::VectorXd lo = samples.colwise().minCoeff();
  const Eigen::VectorXd hi = samples.colwise().maxCoeff();
  s.center = 0.5 * (hi + lo);
  s.half_range = (0.5 * (hi - lo)).cwiseMax(min_half_range);
  s.validate();
  return s;
}

}  // namespace cdp
