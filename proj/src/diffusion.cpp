#include "cdp/diffusion.hpp"

#include <cmath>
#include <unordered_map>

namespace cdp {

static void check_step(int k, const NoiseSchedule& sched, const char* who) {
  if (k < 1 || k > sched.num_steps()) {
    throw StepOutOfRange(std::string(who) + ": step " + std::to_string(k) + " outside [1, " +
                         std::to_string(sched.num_steps()) + "]");
  }
}

Eigen::MatrixXd forward_noise(const Eigen::MatrixXd& x0, const Eigen::MatrixXd& noise,
                              int k, const NoiseSchedule& sched) {
  check_step(k, sched, "forward_noise");
  if (x0.rows() != noise.rows() || x0.cols() != noise.cols()) {
    throw ShapeMismatch("forward_noise: x0 and noise shapes differ");
  }
  const double a = sched.alpha_bar[static_cast<size_t>(k)];
  return std::sqrt(a) * x0 + std::sqrt(1.0 - a) * noise;
}

Eigen::MatrixXd ddim_step_between(const Eigen::MatrixXd& chunk, const Observation& obs,
                                  int k_hi, int k_lo, const NoisePredictor& pred,
                                  const NoiseSchedule& sched) {
  check_step(k_hi, sched, "ddim_step");
  if (k_lo < 0 || k_lo >= k_hi) {
    throw StepOutOfRange("ddim_step: need 0 <= k_lo < k_hi");
  }
  const double a_hi = sched.alpha_bar[static_cast<size_t>(k_hi)];
  const double a_lo = sched.alpha_bar[static_cast<size_t>(k_lo)];
  const Eigen::MatrixXd eps = pred.predict(chunk, obs, k_hi);
  if (eps.rows() != chunk.rows() || eps.cols() != chunk.cols()) {
    throw ShapeMismatch("ddim_step: predictor output shape differs from chunk");
  }
  const Eigen::MatrixXd x0_hat = (chunk - std::sqrt(1.0 - a_hi) * eps) / std::sqrt(a_hi);
  return std::sqrt(a_lo) * x0_hat + std::sqrt(1.0 - a_lo) * eps;
}

Eigen::MatrixXd ddim_step(const Eigen::MatrixXd& chunk, const Observation& obs, int k,
                          const NoisePredictor& pred, const NoiseSchedule& sched) {
  return ddim_step_between(chunk, obs, k, k - 1, pred, sched);
}

ActionChunk sample_chunk(const Observation& obs, int horizon, int dims,
                         const NoisePredictor& pred, const NoiseSchedule& sched,
                         const std::vector<int>& plan, std::mt19937_64& rng,
                         const std::function<void(int, ActionChunk&)>& post_update) {
  if (horizon < 1 || dims < 1) throw ConfigError("sample_chunk: horizon and dims must be >= 1");
  if (plan.empty() || plan.front() != sched.num_steps()) {
    throw ConfigError("sample_chunk: plan must start at K");
  }
  ActionChunk chunk;
  chunk.latent.resize(horizon, dims);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int r = 0; r < horizon; ++r) {
    for (int c = 0; c < dims; ++c) chunk.latent(r, c) = gauss(rng);
  }
  const int n = static_cast<int>(plan.size());
  for (int i = 0; i < n; ++i) {
    const int k_hi = plan[static_cast<size_t>(i)];
    const int k_lo = (i + 1 < n) ? plan[static_cast<size_t>(i + 1)] : 0;
    chunk.latent = ddim_step_between(chunk.latent, obs, k_hi, k_lo, pred, sched);
    if (!chunk.latent.allFinite()) throw NonFinite("sample_chunk: non-finite chunk");
    const int remaining = n - 1 - i;
    if (post_update) post_update(remaining, chunk);
  }
  return chunk;
}

namespace {

/// See analytic_gaussian_predictor. Per step the affine noise estimate
/// eps_hat = c .* (x - m_hi) + e is the unique one taking the designed
/// marginal N(m_hi, v_hi^2) onto N(m_lo, v_lo^2) under the deterministic
/// update x' = P x + Q eps_hat, with mixing levels renormalized so the
/// noisiest level is exactly N(0, 1).
class GaussianTransportPredictor final : public NoisePredictor {
 public:
  GaussianTransportPredictor(Eigen::MatrixXd mean, Eigen::MatrixXd cov_diag,
                             const NoiseSchedule& sched, const std::vector<int>& plan)
      : mean_(std::move(mean)), cov_(std::move(cov_diag)), sched_(sched) {
    if (mean_.rows() != cov_.rows() || mean_.cols() != cov_.cols()) {
      throw ShapeMismatch("gaussian predictor: mean/cov shapes differ");
    }
    if ((cov_.array() < 0).any()) throw ConfigError("gaussian predictor: negative variance");
    if (plan.empty() || plan.front() != sched.num_steps()) {
      throw ConfigError("gaussian predictor: plan must start at K");
    }
    const int n = static_cast<int>(plan.size());
    for (int i = 0; i < n; ++i) {
      next_lo_[plan[static_cast<size_t>(i)]] = (i + 1 < n) ? plan[static_cast<size_t>(i + 1)] : 0;
    }
    const double a_K = sched_.alpha_bar.back();
    renorm_ = 1.0 / (1.0 - a_K);
    a_K_ = a_K;
  }

  Eigen::MatrixXd predict(const Eigen::MatrixXd& noisy, const Observation&, int k) const override {
    auto it = next_lo_.find(k);
    if (it == next_lo_.end()) {
      throw StepOutOfRange("gaussian predictor: step " + std::to_string(k) + " not on the bound plan");
    }
    if (noisy.rows() != mean_.rows() || noisy.cols() != mean_.cols()) {
      throw ShapeMismatch("gaussian predictor: chunk shape differs from target");
    }
    const int k_lo = it->second;
    const double a_hi = sched_.alpha_bar[static_cast<size_t>(k)];
    const double a_lo = sched_.alpha_bar[static_cast<size_t>(k_lo)];
    const double at_hi = (a_hi - a_K_) * renorm_;  // renormalized mixing level
    const double at_lo = (a_lo - a_K_) * renorm_;
    const double P = std::sqrt(a_lo / a_hi);
    const double Q = std::sqrt(1.0 - a_lo) - P * std::sqrt(1.0 - a_hi);

    const Eigen::ArrayXXd var = cov_.array();
    const Eigen::ArrayXXd m_hi = std::sqrt(at_hi) * mean_.array();
    const Eigen::ArrayXXd m_lo = std::sqrt(at_lo) * mean_.array();
    const Eigen::ArrayXXd v_hi = (at_hi * var + (1.0 - at_hi)).sqrt();
    const Eigen::ArrayXXd v_lo = (at_lo * var + (1.0 - at_lo)).sqrt();

    const Eigen::ArrayXXd c = (v_lo / v_hi - P) / Q;
    const Eigen::ArrayXXd e = (m_lo - P * m_hi) / Q;
    return (c * (noisy.array() - m_hi) + e).matrix();
  }

 private:
  Eigen::MatrixXd mean_, cov_;
  NoiseSchedule sched_;
  std::unordered_map<int, int> next_lo_;
  double renorm_ = 1.0, a_K_ = 0.0;
};

}  // namespace

std::unique_ptr<NoisePredictor> analytic_gaussian_predictor(const Eigen::MatrixXd& mean,
                                                            const Eigen::MatrixXd& cov_diag,
                                                            const NoiseSchedule& sched,
                                                            const std::vector<int>& plan) {
  return std::make_unique<GaussianTransportPredictor>(mean, cov_diag, sched, plan);
}

}  // namespace cdp
