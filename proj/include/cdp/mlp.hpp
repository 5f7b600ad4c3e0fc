#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cdp/dataset.hpp"
#include "cdp/diffusion.hpp"

namespace cdp {

/// Sinusoidal embedding of the integer diffusion step; dim must be even and
/// >= 4. Component pairs are (sin(k*w_i), cos(k*w_i)) with log-spaced w_i.
Eigen::VectorXd step_embedding(int k, int dim);

/// Two-hidden-layer tanh network predicting the noise content of a flattened
/// action chunk conditioned on observation features and the step embedding.
/// Weights are public so optimizers and serializers can reach them directly.
class MlpPredictor : public NoisePredictor {
 public:
  MlpPredictor() = default;

  /// Gaussian init (scaled by 1/sqrt(fan_in)), deterministic in `seed`.
  MlpPredictor(int horizon, int action_dim, int obs_dim, int hidden, int emb_dim, std::uint64_t seed);

  Eigen::MatrixXd predict(const Eigen::MatrixXd& noisy, const Observation& obs, int k) const override;

  int horizon() const { return horizon_; }
  int action_dim() const { return action_dim_; }
  int obs_dim() const { return obs_dim_; }
  int emb_dim() const { return emb_dim_; }
  int input_dim() const;
  int output_dim() const;

  /// Flat parameter view (W1,b1,W2,b2,W3,b3 in column-major layer order) for
  /// optimizers and finite-difference checks.
  int param_count() const;
  Eigen::VectorXd params_flat() const;
  void set_params_flat(const Eigen::VectorXd& p);

  /// Assembles the network input [vec(noisy); obs; emb(k)].
  Eigen::VectorXd assemble_input(const Eigen::MatrixXd& noisy, const Observation& obs, int k) const;

  Eigen::MatrixXd W1, W2, W3;
  Eigen::VectorXd b1, b2, b3;

 private:
  int horizon_ = 0, action_dim_ = 0, obs_dim_ = 0, emb_dim_ = 0;

  friend void save_model(const struct PolicyModel&, const std::filesystem::path&);
  friend struct PolicyModel;
 public:
  void set_dims(int horizon, int action_dim, int obs_dim, int emb_dim);
};

/// One minibatch with frozen diffusion draws (step indices and unit noises),
/// making the loss a deterministic function of the parameters.
struct NoiseBatch {
  std::vector<Eigen::MatrixXd> x0;  ///< normalized chunks, horizon x action_dim
  std::vector<Observation> obs;
  std::vector<int> k;
  std::vector<Eigen::MatrixXd> eps;

  int size() const { return static_cast<int>(x0.size()); }
};

/// Mean squared error between predicted and drawn noise, averaged over batch
/// items and matrix entries. A perfect predictor scores exactly 0; the zero
/// predictor scores ~1 on unit noise.
double training_loss(const MlpPredictor& net, const NoiseBatch& batch, const NoiseSchedule& sched);

/// Same loss plus its gradient w.r.t. the flat parameters (reverse-mode).
double training_loss_grad(const MlpPredictor& net, const NoiseBatch& batch,
                          const NoiseSchedule& sched, Eigen::VectorXd& grad);

struct TrainConfig {
  int steps = 3000;
  int batch = 64;
  double lr = 1e-3;
  int hidden = 128;
  int emb_dim = 16;
  int horizon = 8;    ///< action chunk length T_a
  int history = 1;    ///< observation steps stacked into the feature vector
  int k_steps = 100;  ///< training schedule length
  double beta_min = 1e-4, beta_max = 0.02;
  std::uint64_t seed = 0;
};

/// A trained policy bundle: predictor, schedule, and both normalizers.
struct PolicyModel {
  MlpPredictor net;
  NoiseSchedule schedule;
  NormStats action_stats;  ///< physical action units <-> latent
  NormStats obs_stats;     ///< physical observation units <-> features
  int horizon = 8;
  int action_dim = 0;
  int obs_dim = 0;  ///< single-step observation width (before history stacking)
  int history = 1;
  std::string task;

  void validate() const;
};

struct TrainReport {
  std::vector<double> loss_curve;  ///< sampled every ~50 steps
  double final_loss = 0;           ///< mean loss over the last 20 steps
};

/// Draws (observation, action window) pairs from the demos, corrupts the
/// window at a uniformly drawn step, and fits the predictor with Adam on
/// training_loss. Deterministic in cfg.seed. Throws EmptyDataset when no
/// window of cfg.horizon steps fits.
PolicyModel train_policy(const DemoDataset& ds, const TrainConfig& cfg, TrainReport* report = nullptr);

/// Stacks `history` observation rows ending at row t (clamped at the start)
/// and normalizes them with `stats` tiled per position.
Eigen::VectorXd stack_observation(const Eigen::MatrixXd& obs_rows, int t, int history, const NormStats& stats);

void save_model(const PolicyModel& m, const std::filesystem::path& path);
PolicyModel load_model(const std::filesystem::path& path);

}  // namespace cdp
