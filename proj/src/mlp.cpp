#include "cdp/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "cdp/log.hpp"
#include "json_io.hpp"

namespace cdp {

using detail::json;

Eigen::VectorXd step_embedding(int k, int dim) {
  if (dim < 4 || dim % 2 != 0) throw ConfigError("step embedding: dim must be even and >= 4");
  const int half = dim / 2;
  Eigen::VectorXd e(dim);
  for (int i = 0; i < half; ++i) {
    // Frequencies log-spaced from 1 down to 1e-4, transformer style.
    const double w = std::exp(-std::log(1e4) * static_cast<double>(i) / (half - 1));
    e(2 * i) = std::sin(k * w);
    e(2 * i + 1) = std::cos(k * w);
  }
  return e;
}

MlpPredictor::MlpPredictor(int horizon, int action_dim, int obs_dim, int hidden, int emb_dim,
                           std::uint64_t seed)
    : horizon_(horizon), action_dim_(action_dim), obs_dim_(obs_dim), emb_dim_(emb_dim) {
  if (horizon < 1 || action_dim < 1 || obs_dim < 1 || hidden < 1) {
    throw ConfigError("predictor: all widths must be >= 1");
  }
  (void)step_embedding(0, emb_dim);  // validates emb_dim
  const int in = input_dim();
  const int out = output_dim();
  W1.resize(hidden, in);
  W2.resize(hidden, hidden);
  W3.resize(out, hidden);
  b1 = Eigen::VectorXd::Zero(hidden);
  b2 = Eigen::VectorXd::Zero(hidden);
  b3 = Eigen::VectorXd::Zero(out);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto fill = [&](Eigen::MatrixXd& W) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(W.cols()));
    for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = scale * gauss(rng);
  };
  fill(W1);
  fill(W2);
  fill(W3);
}

void MlpPredictor::set_dims(int horizon, int action_dim, int obs_dim, int emb_dim) {
  horizon_ = horizon;
  action_dim_ = action_dim;
  obs_dim_ = obs_dim;
  emb_dim_ = emb_dim;
}

int MlpPredictor::input_dim() const { return horizon_ * action_dim_ + obs_dim_ + emb_dim_; }

int MlpPredictor::output_dim() const { return horizon_ * action_dim_; }

Eigen::VectorXd MlpPredictor::assemble_input(const Eigen::MatrixXd& noisy, const Observation& obs,
                                             int k) const {
  if (noisy.rows() != horizon_ || noisy.cols() != action_dim_) {
    throw ShapeMismatch("predictor: chunk shape " + std::to_string(noisy.rows()) + "x" +
                        std::to_string(noisy.cols()) + " != " + std::to_string(horizon_) + "x" +
                        std::to_string(action_dim_));
  }
  if (obs.features.size() != obs_dim_) {
    throw ShapeMismatch("predictor: observation width " + std::to_string(obs.features.size()) +
                        " != " + std::to_string(obs_dim_));
  }
  Eigen::VectorXd in(input_dim());
  in.head(output_dim()) = Eigen::Map<const Eigen::VectorXd>(noisy.data(), noisy.size());
  in.segment(output_dim(), obs_dim_) = obs.features;
  in.tail(emb_dim_) = step_embedding(k, emb_dim_);
  return in;
}

Eigen::MatrixXd MlpPredictor::predict(const Eigen::MatrixXd& noisy, const Observation& obs,
                                      int k) const {
  const Eigen::VectorXd in = assemble_input(noisy, obs, k);
  const Eigen::VectorXd h1 = (W1 * in + b1).array().tanh();
  const Eigen::VectorXd h2 = (W2 * h1 + b2).array().tanh();
  const Eigen::VectorXd out = W3 * h2 + b3;
  return Eigen::Map<const Eigen::MatrixXd>(out.data(), horizon_, action_dim_);
}

int MlpPredictor::param_count() const {
  return static_cast<int>(W1.size() + b1.size() + W2.size() + b2.size() + W3.size() + b3.size());
}

Eigen::VectorXd MlpPredictor::params_flat() const {
  Eigen::VectorXd p(param_count());
  Eigen::Index at = 0;
  auto put = [&](const auto& block) {
    p.segment(at, block.size()) = Eigen::Map<const Eigen::VectorXd>(block.data(), block.size());
    at += block.size();
  };
  put(W1);
  put(b1);
  put(W2);
  put(b2);
  put(W3);
  put(b3);
  return p;
}

void MlpPredictor::set_params_flat(const Eigen::VectorXd& p) {
  if (p.size() != param_count()) throw ShapeMismatch("predictor: flat parameter size differs");
  Eigen::Index at = 0;
  auto take = [&](auto& block) {
    Eigen::Map<Eigen::VectorXd>(block.data(), block.size()) = p.segment(at, block.size());
    at += block.size();
  };
  take(W1);
  take(b1);
  take(W2);
  take(b2);
  take(W3);
  take(b3);
}

namespace {

struct Grads {
  Eigen::MatrixXd W1, W2, W3;
  Eigen::VectorXd b1, b2, b3;

  explicit Grads(const MlpPredictor& net)
      : W1(Eigen::MatrixXd::Zero(net.W1.rows(), net.W1.cols())),
        W2(Eigen::MatrixXd::Zero(net.W2.rows(), net.W2.cols())),
        W3(Eigen::MatrixXd::Zero(net.W3.rows(), net.W3.cols())),
        b1(Eigen::VectorXd::Zero(net.b1.size())),
        b2(Eigen::VectorXd::Zero(net.b2.size())),
        b3(Eigen::VectorXd::Zero(net.b3.size())) {}
};

double batch_loss(const MlpPredictor& net, const NoiseBatch& batch, const NoiseSchedule& sched,
                  Grads* grads) {
  if (batch.size() == 0) throw EmptyDataset("training batch is empty");
  const int B = batch.size();
  const Eigen::Index out_dim = net.output_dim();
  const double denom = static_cast<double>(B) * static_cast<double>(out_dim);
  double loss = 0.0;
  for (int b = 0; b < B; ++b) {
    const Eigen::MatrixXd noisy = forward_noise(batch.x0[static_cast<size_t>(b)],
                                                batch.eps[static_cast<size_t>(b)],
                                                batch.k[static_cast<size_t>(b)], sched);
    const Eigen::VectorXd in =
        net.assemble_input(noisy, batch.obs[static_cast<size_t>(b)], batch.k[static_cast<size_t>(b)]);
    const Eigen::VectorXd h1 = (net.W1 * in + net.b1).array().tanh();
    const Eigen::VectorXd h2 = (net.W2 * h1 + net.b2).array().tanh();
    const Eigen::VectorXd out = net.W3 * h2 + net.b3;
    const auto& eps = batch.eps[static_cast<size_t>(b)];
    const Eigen::VectorXd r = out - Eigen::Map<const Eigen::VectorXd>(eps.data(), eps.size());
    loss += r.squaredNorm() / denom;
    if (grads) {
      const Eigen::VectorXd dout = (2.0 / denom) * r;
      grads->W3.noalias() += dout * h2.transpose();
      grads->b3 += dout;
      const Eigen::VectorXd da2 =
          (net.W3.transpose() * dout).cwiseProduct((1.0 - h2.array().square()).matrix());
      grads->W2.noalias() += da2 * h1.transpose();
      grads->b2 += da2;
      const Eigen::VectorXd da1 =
          (net.W2.transpose() * da2).cwiseProduct((1.0 - h1.array().square()).matrix());
      grads->W1.noalias() += da1 * in.transpose();
      grads->b1 += da1;
    }
  }
  return loss;
}

}  // namespace

double training_loss(const MlpPredictor& net, const NoiseBatch& batch, const NoiseSchedule& sched) {
  return batch_loss(net, batch, sched, nullptr);
}

double training_loss_grad(const MlpPredictor& net, const NoiseBatch& batch,
                          const NoiseSchedule& sched, Eigen::VectorXd& grad) {
  Grads g(net);
  const double loss = batch_loss(net, batch, sched, &g);
  grad.resize(net.param_count());
  Eigen::Index at = 0;
  auto put = [&](const auto& block) {
    grad.segment(at, block.size()) = Eigen::Map<const Eigen::VectorXd>(block.data(), block.size());
    at += block.size();
  };
  put(g.W1);
  put(g.b1);
  put(g.W2);
  put(g.b2);
  put(g.W3);
  put(g.b3);
  return loss;
}

Eigen::VectorXd stack_observation(const Eigen::MatrixXd& obs_rows, int t, int history,
                                  const NormStats& stats) {
  if (history < 1) throw ConfigError("stack_observation: history must be >= 1");
  if (t < 0 || t >= obs_rows.rows()) throw ConfigError("stack_observation: row index out of range");
  if (obs_rows.cols() != stats.dims()) {
    throw ShapeMismatch("stack_observation: stats width differs from observation width");
  }
  const int d = static_cast<int>(obs_rows.cols());
  Eigen::VectorXd out(history * d);
  for (int i = 0; i < history; ++i) {
    const int row = std::max(0, t - (history - 1) + i);
    out.segment(static_cast<Eigen::Index>(i) * d, d) =
        stats.normalize(obs_rows.row(row).transpose());
  }
  return out;
}

void PolicyModel::validate() const {
  if (horizon < 1 || action_dim < 1 || obs_dim < 1 || history < 1) {
    throw ConfigError("model: dims must be >= 1");
  }
  schedule.validate();
  action_stats.validate();
  obs_stats.validate();
  if (action_stats.dims() != action_dim) throw ShapeMismatch("model: action stats width differs");
  if (obs_stats.dims() != obs_dim) throw ShapeMismatch("model: observation stats width differs");
  if (net.horizon() != horizon || net.action_dim() != action_dim ||
      net.obs_dim() != obs_dim * history) {
    throw ShapeMismatch("model: network dims inconsistent with metadata");
  }
}

PolicyModel train_policy(const DemoDataset& ds, const TrainConfig& cfg, TrainReport* report) {
  ds.validate();
  if (cfg.steps < 1 || cfg.batch < 1) throw ConfigError("training: steps and batch must be >= 1");

  // Enumerate every window of cfg.horizon consecutive actions.
  struct Window {
    int traj, t;
  };
  std::vector<Window> windows;
  for (size_t i = 0; i < ds.trajectories.size(); ++i) {
    const int T = static_cast<int>(ds.trajectories[i].actions.rows());
    for (int t = 0; t + cfg.horizon <= T; ++t) windows.push_back({static_cast<int>(i), t});
  }
  if (windows.empty()) {
    throw EmptyDataset("no trajectory offers a window of " + std::to_string(cfg.horizon) + " steps");
  }

  PolicyModel m;
  m.task = ds.task;
  m.horizon = cfg.horizon;
  m.action_dim = ds.action_dim();
  m.obs_dim = ds.obs_dim();
  m.history = cfg.history;
  m.action_stats = dataset_action_stats(ds);
  m.obs_stats = dataset_obs_stats(ds);
  m.schedule = NoiseSchedule::linear(cfg.k_steps, cfg.beta_min, cfg.beta_max);
  m.net = MlpPredictor(cfg.horizon, m.action_dim, m.obs_dim * cfg.history, cfg.hidden, cfg.emb_dim,
                       cfg.seed);

  std::mt19937_64 rng(cfg.seed + 0x517cc1b727220a95ULL);
  std::uniform_int_distribution<size_t> pick_window(0, windows.size() - 1);
  std::uniform_int_distribution<int> pick_step(1, cfg.k_steps);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Adam on the flat parameter vector.
  Eigen::VectorXd theta = m.net.params_flat();
  Eigen::VectorXd mom = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd vel = Eigen::VectorXd::Zero(theta.size());
  const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

  std::vector<double> tail;
  for (int step = 1; step <= cfg.steps; ++step) {
    NoiseBatch batch;
    batch.x0.reserve(static_cast<size_t>(cfg.batch));
    for (int b = 0; b < cfg.batch; ++b) {
      const Window w = windows[pick_window(rng)];
      const auto& traj = ds.trajectories[static_cast<size_t>(w.traj)];
      batch.x0.push_back(
          m.action_stats.normalize_rows(traj.actions.middleRows(w.t, cfg.horizon)));
      batch.obs.push_back({stack_observation(traj.obs, w.t, cfg.history, m.obs_stats)});
      batch.k.push_back(pick_step(rng));
      Eigen::MatrixXd eps(cfg.horizon, m.action_dim);
      for (Eigen::Index r = 0; r < eps.rows(); ++r) {
        for (Eigen::Index c = 0; c < eps.cols(); ++c) eps(r, c) = gauss(rng);
      }
      batch.eps.push_back(std::move(eps));
    }

    Eigen::VectorXd grad;
    const double loss = training_loss_grad(m.net, batch, m.schedule, grad);
    if (!std::isfinite(loss)) throw NonFinite("training loss diverged at step " + std::to_string(step));

    mom = beta1 * mom + (1.0 - beta1) * grad;
    vel = beta2 * vel + (1.0 - beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(beta1, step);
    const double bc2 = 1.0 - std::pow(beta2, step);
    theta -= (cfg.lr / bc1) * mom.cwiseQuotient(((vel / bc2).cwiseSqrt().array() + adam_eps).matrix());
    m.net.set_params_flat(theta);

    if (report && step % 50 == 0) report->loss_curve.push_back(loss);
    if (step > cfg.steps - 20) tail.push_back(loss);
    if (step % 500 == 0) {
      log_info("train step " + std::to_string(step) + "/" + std::to_string(cfg.steps) +
               ", loss " + std::to_string(loss));
    }
  }
  if (report && !tail.empty()) {
    double s = 0;
    for (double v : tail) s += v;
    report->final_loss = s / static_cast<double>(tail.size());
  }
  m.validate();
  return m;
}

void save_model(const PolicyModel& m, const std::filesystem::path& path) {
  m.validate();
  json j;
  j["format_version"] = 1;
  j["task"] = m.task;
  j["horizon"] = m.horizon;
  j["action_dim"] = m.action_dim;
  j["obs_dim"] = m.obs_dim;
  j["history"] = m.history;
  j["emb_dim"] = m.net.emb_dim();
  j["schedule"] = {{"betas", m.schedule.betas}};
  j["action_stats"] = {{"center", detail::vector_to_json(m.action_stats.center)},
                       {"half_range", detail::vector_to_json(m.action_stats.half_range)}};
  j["obs_stats"] = {{"center", detail::vector_to_json(m.obs_stats.center)},
                    {"half_range", detail::vector_to_json(m.obs_stats.half_range)}};
  j["net"] = {{"W1", detail::matrix_to_json(m.net.W1)}, {"b1", detail::vector_to_json(m.net.b1)},
              {"W2", detail::matrix_to_json(m.net.W2)}, {"b2", detail::vector_to_json(m.net.b2)},
              {"W3", detail::matrix_to_json(m.net.W3)}, {"b3", detail::vector_to_json(m.net.b3)}};
  detail::write_json_file(j, path);
}

PolicyModel load_model(const std::filesystem::path& path) {
  const json j = detail::parse_json_file(path);
  if (!j.contains("format_version") || j["format_version"].get<int>() != 1) {
    throw ConfigError(path.string() + ": unsupported model format_version");
  }
  PolicyModel m;
  m.task = j.value("task", std::string{});
  m.horizon = j.at("horizon").get<int>();
  m.action_dim = j.at("action_dim").get<int>();
  m.obs_dim = j.at("obs_dim").get<int>();
  m.history = j.value("history", 1);
  m.schedule = NoiseSchedule::from_betas(j.at("schedule").at("betas").get<std::vector<double>>());
  m.action_stats.center = detail::vector_from_json(j.at("action_stats").at("center"), "action center");
  m.action_stats.half_range =
      detail::vector_from_json(j.at("action_stats").at("half_range"), "action half_range");
  m.obs_stats.center = detail::vector_from_json(j.at("obs_stats").at("center"), "obs center");
  m.obs_stats.half_range = detail::vector_from_json(j.at("obs_stats").at("half_range"), "obs half_range");
  const auto& n = j.at("net");
  m.net.W1 = detail::matrix_from_json(n.at("W1"), "W1");
  m.net.b1 = detail::vector_from_json(n.at("b1"), "b1");
  m.net.W2 = detail::matrix_from_json(n.at("W2"), "W2");
  m.net.b2 = detail::vector_from_json(n.at("b2"), "b2");
  m.net.W3 = detail::matrix_from_json(n.at("W3"), "W3");
  m.net.b3 = detail::vector_from_json(n.at("b3"), "b3");
  m.net.set_dims(m.horizon, m.action_dim, m.obs_dim * m.history, j.value("emb_dim", 16));
  m.validate();
  return m;
}

}  // namespace cdp
