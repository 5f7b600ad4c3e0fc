#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "cdp/schedule.hpp"

namespace cdp {

/// A horizon of future actions in normalized units; rows are horizon steps,
/// columns action dimensions.
struct ActionChunk {
  Eigen::MatrixXd latent;

  int horizon() const { return static_cast<int>(latent.rows()); }
  int dims() const { return static_cast<int>(latent.cols()); }
};

/// Conditioning features (already normalized) seen by the noise predictor.
struct Observation {
  Eigen::VectorXd features;
};

/// Noise estimator interface: eps_hat(noisy chunk, observation, step k).
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;
  virtual Eigen::MatrixXd predict(const Eigen::MatrixXd& noisy, const Observation& obs, int k) const = 0;
};

/// Mixes clean data with unit noise at step k:
///   sqrt(alpha_bar[k]) * x0 + sqrt(1 - alpha_bar[k]) * noise.
/// Throws StepOutOfRange unless 1 <= k <= K, ShapeMismatch when the matrices
/// differ in shape.
Eigen::MatrixXd forward_noise(const Eigen::MatrixXd& x0, const Eigen::MatrixXd& noise,
                              int k, const NoiseSchedule& sched);

/// One deterministic reverse update k_hi -> k_lo (no fresh noise):
///   x0_hat = (x - sqrt(1-abar_hi) * eps_hat) / sqrt(abar_hi)
///   result = sqrt(abar_lo) * x0_hat + sqrt(1-abar_lo) * eps_hat.
/// Requires K >= k_hi > k_lo >= 0.
Eigen::MatrixXd ddim_step_between(const Eigen::MatrixXd& chunk, const Observation& obs,
                                  int k_hi, int k_lo, const NoisePredictor& pred,
                                  const NoiseSchedule& sched);

/// Adjacent-step convenience: k -> k-1.
Eigen::MatrixXd ddim_step(const Eigen::MatrixXd& chunk, const Observation& obs, int k,
                          const NoisePredictor& pred, const NoiseSchedule& sched);

/// Runs the deterministic reverse sweep from pure noise along `plan` (see
/// substep_plan), finishing at step 0. After each update `post_update(p, chunk)`
/// may rewrite the chunk in place; p counts remaining updates (0 == final
/// chunk). The trajectory projection hooks in here during the last few steps.
/// RNG is consumed only for the initial noise draw, in row-major entry order.
ActionChunk sample_chunk(const Observation& obs, int horizon, int dims,
                         const NoisePredictor& pred, const NoiseSchedule& sched,
                         const std::vector<int>& plan, std::mt19937_64& rng,
                         const std::function<void(int, ActionChunk&)>& post_update = {});

/// Closed-form predictor for per-entry Gaussian data N(mean, diag(cov_diag)),
/// bound to one (schedule, plan) pair. With it the deterministic sweep maps
/// N(0, I) exactly onto the target distribution, which makes it the reference
/// oracle for the sampler's update coefficients: any miswiring breaks the
/// transported moments. predict() accepts only step indices on the plan.
std::unique_ptr<NoisePredictor> analytic_gaussian_predictor(const Eigen::MatrixXd& mean,
                                                            const Eigen::MatrixXd& cov_diag,
                                                            const NoiseSchedule& sched,
                                                            const std::vector<int>& plan);

}  // namespace cdp
