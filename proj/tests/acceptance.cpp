// Acceptance gate: end-to-end checks of the guarantees this library makes,
// each printed as a single PASS/FAIL line with its runtime. The process exit
// code is the number of failed criteria, so `ctest` fails when any line does.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cdp/diffusion.hpp"
#include "cdp/geometry.hpp"
#include "cdp/mlp.hpp"
#include "cdp/percept.hpp"
#include "cdp/pipeline.hpp"
#include "cdp/projection.hpp"
#include "cdp/sim.hpp"

using namespace cdp;

namespace {

using Clock = std::chrono::steady_clock;

int g_failures = 0;

/// Runs one criterion body (returns "" on success, a reason on failure),
/// enforces its wall-clock budget, prints exactly one line.
void criterion(const char* name, double budget_s, const std::function<std::string()>& body) {
  const auto t0 = Clock::now();
  std::string note;
  try {
    note = body();
  } catch (const std::exception& e) {
    note = std::string("exception: ") + e.what();
  }
  const double dt = std::chrono::duration<double>(Clock::now() - t0).count();
  bool ok = note.empty() || note.front() == '[';  // "[...]" = informational detail
  if (ok && dt > budget_s) {
    ok = false;
    note = "exceeded " + std::to_string(budget_s) + " s budget" + (note.empty() ? "" : " " + note);
  }
  std::printf("%s %s (%.2fs / %.0fs)%s%s\n", ok ? "PASS" : "FAIL", name, dt, budget_s,
              note.empty() ? "" : " ", note.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

std::filesystem::path catalog_file() {
  return std::filesystem::path(CDP_SOURCE_DIR) / "data/gripper_catalog.json";
}

NormStats identity_stats(int dims) {
  NormStats s;
  s.center = Eigen::VectorXd::Zero(dims);
  s.half_range = Eigen::VectorXd::Ones(dims);
  return s;
}

double retarget(double x, double r) { return std::asin(r * std::sin(x)); }

// ---------------------------------------------------------------------------
// 1. Retargeted tilts sweep the identical lateral arc on both arms.
// ---------------------------------------------------------------------------
std::string check_tilt_retargeting_identity() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> arm(0.05, 0.40);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double d1 = arm(rng), d2 = arm(rng);
    const double theta_max = std::asin(std::min(1.0, d2 / d1)) * 0.999999;
    const double theta = theta_max * unit(rng);
    const double mapped = adapt_rotation(theta, d1 / d2);
    worst = std::max(worst, std::abs(d1 * std::sin(theta) - d2 * std::sin(mapped)));
  }
  if (worst >= 1e-12) {
    std::ostringstream os;
    os << "lateral sweep mismatch up to " << worst;
    return os.str();
  }
  return "";
}

// ---------------------------------------------------------------------------
// 2. Every generated trajectory keeps the tool tip above the height floor,
//    even when the sampling prior drives it hard into the table.
// ---------------------------------------------------------------------------
std::string check_trajectory_floor_guarantee() {
  const auto catalog = load_catalog(catalog_file());
  const ManipulatorConfig base = find_config(catalog, "flexible");
  const ManipulatorConfig longer = find_config(catalog, "long-print");

  struct Case {
    double descent, sigma2, clearance;
    int substeps;
    bool long_arm;
  };
  const std::vector<Case> cases = {
      {-0.02, 1e-4, 0.005, 16, false}, {-0.05, 1e-4, 0.011, 16, false},
      {-0.08, 1e-4, 0.050, 16, false}, {-0.02, 1e-2, 0.020, 16, false},
      {-0.05, 1e-2, 0.005, 16, true},  {-0.08, 1e-2, 0.011, 16, true},
      {-0.02, 1e-4, 0.050, 8, true},   {-0.05, 1e-4, 0.020, 8, true},
      {-0.08, 1e-2, 0.005, 8, false},  {-0.05, 1e-2, 0.050, 8, false},
      {-0.08, 1e-4, 0.011, 8, true},   {-0.02, 1e-2, 0.005, 16, true},
  };

  const NoiseSchedule sched = NoiseSchedule::linear(16);
  int generations = 0, violations = 0;
  double min_margin = std::numeric_limits<double>::infinity();
  for (size_t ci = 0; ci < cases.size(); ++ci) {
    const Case& c = cases[ci];
    const ManipulatorConfig& novel = c.long_arm ? longer : base;
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(8, 7);
    mean.col(2).setConstant(c.descent);
    const Eigen::MatrixXd cov = Eigen::MatrixXd::Constant(8, 7, c.sigma2);
    SessionOptions opt;
    opt.substeps = c.substeps;
    const auto plan = substep_plan(16, c.substeps);
    std::shared_ptr<const NoisePredictor> pred = analytic_gaussian_predictor(mean, cov, sched, plan);
    const PolicySession s = make_session_raw(pred, sched, identity_stats(7), identity_stats(7), 8, 7,
                                             7, base, novel, opt);
    RobotState raw;
    raw.z = novel.z_base + c.clearance;
    std::mt19937_64 rng(1000 + ci);
    for (int g = 0; g < 100; ++g) {
      const GenerationResult res = generate_trajectory(s, raw, rng);
      ++generations;
      for (const TrajectoryStep& st : res.decoded) {
        const double margin = st.position.z() - s.floor_reference - s.opt.eps_safe;
        min_margin = std::min(min_margin, margin);
        if (margin < -1e-12) ++violations;
      }
    }
  }
  std::ostringstream os;
  if (violations > 0) {
    os << violations << " floor violations in " << generations << " generations (worst margin "
       << min_margin << ")";
    return os.str();
  }
  os << "[" << generations << " generations, 0 violations]";
  return os.str();
}

// ---------------------------------------------------------------------------
// 3. The per-step correction really is the minimum-norm feasible one, and the
//    closed-form box solve agrees with the working-set iteration.
// ---------------------------------------------------------------------------
std::string check_qp_minimum_norm_oracle() {
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> uz(-0.05, 0.08);
  std::uniform_real_distribution<double> udz(-0.05, 0.05);
  std::uniform_real_distribution<double> uth(-0.45, 0.45);
  std::uniform_real_distribution<double> ueps(0.02, 0.2);
  std::uniform_real_distribution<double> uratio(0.8, 1.2);

  const auto grid_min = [](double lo, double hi, const std::function<bool(double)>& feasible) {
    double best = std::numeric_limits<double>::quiet_NaN();
    for (double nu = lo; nu <= hi; nu += 1e-4) {
      if (!feasible(nu)) continue;
      if (std::isnan(best) || nu * nu < best * best) best = nu;
    }
    return best;
  };

  double worst_step = 0.0;
  for (int it = 0; it < 500; ++it) {
    const bool two_d = (it % 2) == 1;
    ConstraintSet cs;
    cs.floor_dims = {0};
    cs.rot_dims = two_d ? std::vector<int>{1} : std::vector<int>{};
    cs.correction_dim = two_d ? 2 : 1;
    cs.horizon = 1;
    cs.eps_task = ueps(rng);
    cs.d_ratio = uratio(rng);
    const double z = uz(rng);
    Eigen::VectorXd action = Eigen::VectorXd::Zero(cs.correction_dim);
    action(0) = udz(rng);
    Eigen::Vector2d anchor = Eigen::Vector2d::Zero();
    if (two_d) {
      action(1) = uth(rng);
      anchor(0) = 0.5 * uth(rng);
    }
    const StepProjection sp = project_step(z, anchor, action, cs);

    const double oracle_z = grid_min(-0.3, 0.3, [&](double nu) {
      return z + action(0) + nu >= cs.eps_safe - 1e-12;
    });
    worst_step = std::max(worst_step, std::abs(sp.nu(0) - oracle_z));
    if (two_d) {
      const double drift =
          retarget(anchor(0) + action(1), cs.d_ratio) - retarget(anchor(0), cs.d_ratio);
      const double oracle_t = grid_min(-2.5, 2.5, [&](double nu) {
        return std::abs(drift - nu) <= cs.eps_task + 1e-12;
      });
      worst_step = std::max(worst_step, std::abs(sp.nu(1) - oracle_t));
    }
  }
  if (worst_step >= 2e-4) {
    std::ostringstream os;
    os << "grid oracle disagrees by " << worst_step;
    return os.str();
  }

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::uniform_int_distribution<int> dim(1, 6);
  std::uniform_int_distribution<int> pattern(0, 3);
  double worst_box = 0.0;
  for (int it = 0; it < 1000; ++it) {
    const int n = dim(rng);
    Eigen::VectorXd q(n), lo(n), hi(n);
    for (int i = 0; i < n; ++i) {
      q(i) = u(rng);
      double a = u(rng), b = u(rng);
      if (a > b) std::swap(a, b);
      const int p = pattern(rng);
      lo(i) = (p == 1 || p == 3) ? -kInf : a;
      hi(i) = (p == 2 || p == 3) ? kInf : b;
    }
    const Eigen::VectorXd closed = qp_solve_box_halfspace(q, lo, hi);
    const Eigen::VectorXd active = qp_solve_box_halfspace_active_set(q, lo, hi);
    worst_box = std::max(worst_box, (closed - active).cwiseAbs().maxCoeff());
  }
  if (worst_box >= 1e-12) {
    std::ostringstream os;
    os << "solvers disagree by " << worst_box;
    return os.str();
  }
  std::ostringstream os;
  os << "[step oracle gap " << worst_step << ", solver gap " << worst_box << "]";
  return os.str();
}

// ---------------------------------------------------------------------------
// 4. The deterministic sampler transports N(0, I) onto the target Gaussian:
//    Monte Carlo moments match within 3 standard errors.
// ---------------------------------------------------------------------------
std::string check_sampler_moment_match() {
  Eigen::MatrixXd mean(2, 3), cov(2, 3);
  mean << 0.5, -0.3, 0.0, 1.0, 0.25, -0.75;
  cov << 1.0, 0.25, 2.25, 0.5, 1.0, 0.04;
  const int N = 10000;

  struct PlanSpec {
    int K, n;
  };
  const std::vector<PlanSpec> specs = {{8, 8}, {16, 16}, {50, 50}, {50, 8}};
  std::ostringstream detail;
  detail << "[worst z-scores:";
  for (const PlanSpec& ps : specs) {
    const NoiseSchedule sched = NoiseSchedule::linear(ps.K);
    const auto plan = substep_plan(ps.K, ps.n);
    const auto pred = analytic_gaussian_predictor(mean, cov, sched, plan);
    std::mt19937_64 rng(9000 + static_cast<std::uint64_t>(ps.K) * 31 + ps.n);
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(2, 3);
    Eigen::MatrixXd sum_sq = Eigen::MatrixXd::Zero(2, 3);
    const Observation obs;  // the closed-form predictor is unconditional
    for (int i = 0; i < N; ++i) {
      const ActionChunk c = sample_chunk(obs, 2, 3, *pred, sched, plan, rng);
      sum += c.latent;
      sum_sq += c.latent.cwiseProduct(c.latent);
    }
    double worst_z = 0.0;
    for (int r = 0; r < 2; ++r) {
      for (int c2 = 0; c2 < 3; ++c2) {
        const double sigma = std::sqrt(cov(r, c2));
        const double m_hat = sum(r, c2) / N;
        const double var_hat = (sum_sq(r, c2) - N * m_hat * m_hat) / (N - 1);
        const double s_hat = std::sqrt(var_hat);
        const double z_mean = std::abs(m_hat - mean(r, c2)) / (sigma / std::sqrt(1.0 * N));
        const double z_std = std::abs(s_hat - sigma) / (sigma / std::sqrt(2.0 * N));
        worst_z = std::max({worst_z, z_mean, z_std});
        if (z_mean > 3.0 || z_std > 3.0) {
          std::ostringstream os;
          os << "K=" << ps.K << " n=" << ps.n << " entry (" << r << "," << c2 << "): mean "
             << m_hat << " vs " << mean(r, c2) << ", std " << s_hat << " vs " << sigma
             << " (z " << z_mean << "/" << z_std << ")";
          return os.str();
        }
      }
    }
    detail << " K" << ps.K << "/n" << ps.n << "=" << std::fixed;
    detail.precision(2);
    detail << worst_z;
    detail.unsetf(std::ios_base::floatfield);
  }
  detail << "]";
  return detail.str();
}

// ---------------------------------------------------------------------------
// 5. Reverse-mode gradients of the training loss match central finite
//    differences on a 100-parameter slice of a full-size network.
// ---------------------------------------------------------------------------
std::string check_gradient_check() {
  MlpPredictor net(8, 7, 7, 128, 16, 2024);
  const NoiseSchedule sched = NoiseSchedule::linear(100);

  std::mt19937_64 rng(555);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> step(1, 100);
  NoiseBatch batch;
  for (int i = 0; i < 8; ++i) {
    Eigen::MatrixXd x0(8, 7), eps(8, 7);
    Observation obs;
    obs.features.resize(7);
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 7; ++c) {
        x0(r, c) = 0.5 * normal(rng);
        eps(r, c) = normal(rng);
      }
    for (int j = 0; j < 7; ++j) obs.features(j) = 0.3 * normal(rng);
    batch.x0.push_back(std::move(x0));
    batch.eps.push_back(std::move(eps));
    batch.obs.push_back(std::move(obs));
    batch.k.push_back(step(rng));
  }

  Eigen::VectorXd grad;
  training_loss_grad(net, batch, sched, grad);
  const Eigen::VectorXd p = net.params_flat();
  const int pc = net.param_count();
  MlpPredictor probe = net;
  double worst = 0.0;
  int worst_idx = -1;
  for (int i = 0; i < 100; ++i) {
    const int idx = static_cast<int>((static_cast<long long>(i) * pc) / 100);
    const double h = 1e-5 * std::max(1.0, std::abs(p(idx)));
    Eigen::VectorXd pp = p;
    pp(idx) = p(idx) + h;
    probe.set_params_flat(pp);
    const double lp = training_loss(probe, batch, sched);
    pp(idx) = p(idx) - h;
    probe.set_params_flat(pp);
    const double lm = training_loss(probe, batch, sched);
    const double fd = (lp - lm) / (2.0 * h);
    const double rel = std::abs(fd - grad(idx)) / std::max({1e-6, std::abs(fd), std::abs(grad(idx))});
    if (rel > worst) {
      worst = rel;
      worst_idx = idx;
    }
  }
  if (worst >= 1e-4) {
    std::ostringstream os;
    os << "relative error " << worst << " at parameter " << worst_idx << " of " << pc;
    return os.str();
  }
  std::ostringstream os;
  os << "[worst relative error " << worst << " over 100 of " << pc << " parameters]";
  return os.str();
}

// ---------------------------------------------------------------------------
// 6. Pushing ablation: retargeting + projection rescue a policy executed on
//    hardware whose tool center point sits 4 cm higher, and cost nothing on
//    the training hardware.
// ---------------------------------------------------------------------------
std::string check_push_ablation() {
  const auto catalog = load_catalog(catalog_file());
  const ManipulatorConfig base = find_config(catalog, "flexible");
  ManipulatorConfig offset = base;
  offset.robot_id = "arm-offset";
  offset.gripper.id = "tcp-offset";
  offset.z_base += 0.04;

  DemoConfig dc;
  dc.task = Task::kPush;
  dc.manip = base;
  dc.n = 60;
  dc.noise_level = 0.002;
  dc.seed = 42;
  const DemoDataset ds = generate_demos(dc);

  TrainConfig tc;  // library defaults: 3000 steps, batch 64, hidden 128
  tc.seed = 42;
  const PolicyModel model = train_policy(ds, tc);

  const auto cell = [&](const ManipulatorConfig& novel, bool ap) {
    WorldConfig wc;
    wc.task = Task::kPush;
    wc.manip = novel;
    wc.noise_level = 0.002;
    EpisodeOptions opt;
    opt.with_adaptation = ap;
    opt.with_projection = ap;
    opt.seed = 2000;
    return evaluate(model, base, wc, 50, opt);
  };

  const EvalSummary id_with = cell(base, true);
  const EvalSummary id_without = cell(base, false);
  const EvalSummary off_with = cell(offset, true);
  const EvalSummary off_without = cell(offset, false);

  std::ostringstream cells;
  cells.precision(2);
  cells << std::fixed << "[identity " << id_with.success_rate << "/" << id_without.success_rate
        << ", offset " << off_with.success_rate << "/" << off_without.success_rate << "]";

  std::ostringstream os;
  if (id_with.success_rate < 0.95) {
    os << "identity with retargeting+projection " << id_with.success_rate << " < 0.95 " << cells.str();
    return os.str();
  }
  if (id_without.success_rate < 0.95) {
    os << "identity without retargeting " << id_without.success_rate << " < 0.95 " << cells.str();
    return os.str();
  }
  if (off_with.success_rate < 0.90) {
    os << "offset hardware with retargeting+projection " << off_with.success_rate << " < 0.90 "
       << cells.str();
    return os.str();
  }
  if (off_without.success_rate >= 0.50) {
    os << "offset hardware without retargeting " << off_without.success_rate << " >= 0.50 "
       << cells.str();
    return os.str();
  }
  const int mechanical = (off_without.failures.count("floor_violation")
                              ? off_without.failures.at("floor_violation")
                              : 0) +
                         (off_without.failures.count("lift_during_push")
                              ? off_without.failures.at("lift_during_push")
                              : 0);
  if (mechanical < 1) {
    os << "offset failures lack floor/lift modes " << cells.str();
    return os.str();
  }
  return cells.str();
}

// ---------------------------------------------------------------------------
// 7. Grasp-map stabilization: binary masks, sub-pixel centroids on clean
//    blobs, bounded drift under salt noise, near-disc mask areas.
// ---------------------------------------------------------------------------
std::string check_grasp_map_stabilization() {
  const double pi = std::acos(-1.0);
  const int size = 101;
  const struct {
    double cu, cv;
  } blobs[] = {{50.3, 48.7}, {47.9, 52.4}, {52.6, 50.8}};

  std::mt19937_64 rng(707);
  std::uniform_int_distribution<int> pix(0, size * size - 1);
  double worst_clean = 0.0, worst_salt = 0.0, worst_area = 0.0;
  for (const auto& b : blobs) {
    GraspProbMap m = GraspProbMap::zeros(size, size);
    for (int v = 0; v < size; ++v) {
      for (int u = 0; u < size; ++u) {
        const double r2 = (u - b.cu) * (u - b.cu) + (v - b.cv) * (v - b.cv);
        m.at(u, v) = static_cast<float>(0.95 * std::exp(-r2 / (2.0 * 15.0 * 15.0)));
      }
    }
    const StabilizeResult clean = stabilize(m, 0.7f, 30.0);
    if (clean.low_confidence) return "clean blob flagged low confidence";
    worst_clean = std::max({worst_clean, std::abs(clean.center.u - b.cu),
                            std::abs(clean.center.v - b.cv)});
    int count = 0;
    for (float p : clean.mask.data) {
      if (p != 0.0f && p != 1.0f) return "mask is not binary";
      count += (p == 1.0f) ? 1 : 0;
    }
    worst_area = std::max(worst_area, std::abs(count - pi * 900.0));

    GraspProbMap salted = m;
    for (int i = 0; i < size * size / 100; ++i) salted.data[static_cast<size_t>(pix(rng))] = 1.0f;
    const StabilizeResult noisy = stabilize(salted, 0.7f, 30.0);
    if (noisy.low_confidence) return "salted blob flagged low confidence";
    worst_salt = std::max({worst_salt, std::abs(noisy.center.u - b.cu),
                           std::abs(noisy.center.v - b.cv)});
  }
  std::ostringstream os;
  if (worst_clean >= 1.0) {
    os << "clean centroid error " << worst_clean << " px";
    return os.str();
  }
  if (worst_salt >= 3.0) {
    os << "salted centroid error " << worst_salt << " px";
    return os.str();
  }
  if (worst_area > 4.0 * 30.0 + 4.0) {
    os << "mask area off the disc by " << worst_area << " px";
    return os.str();
  }
  os << "[clean " << worst_clean << " px, salted " << worst_salt << " px, area gap " << worst_area
     << " px]";
  return os.str();
}

// ---------------------------------------------------------------------------
// 8. The projection is inert on feasible chunks (bit-identical) and
//    idempotent on everything else.
// ---------------------------------------------------------------------------
std::string check_projection_noop_idempotence() {
  const int H = 8, D = 7;
  std::mt19937_64 rng(808);
  std::normal_distribution<double> normal(0.0, 1.0);
  const NormStats plain = identity_stats(D);
  ConstraintSet cs;

  for (int it = 0; it < 1000; ++it) {
    ActionChunk chunk;
    chunk.latent = Eigen::MatrixXd::NullaryExpr(H, D, [&]() { return 0.002 * normal(rng); });
    chunk.latent.col(2) = chunk.latent.col(2).cwiseAbs();  // never descends
    const ProjectionResult res = project_horizon(0.5, Eigen::Vector2d::Zero(), chunk, plain, cs);
    if (!(res.chunk.latent == chunk.latent) || res.corrections.any()) {
      std::ostringstream os;
      os << "feasible chunk " << it << " was modified (max |nu| = " << res.corrections.max_abs()
         << ")";
      return os.str();
    }
  }

  NormStats wide = identity_stats(D);
  wide.half_range(2) = 0.03;
  wide.half_range(3) = 0.08;
  wide.half_range(4) = 0.08;
  ConstraintSet hard;
  hard.d_ratio = 1.25;
  const Eigen::Vector2d anchor(0.1, -0.05);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (int it = 0; it < 1000; ++it) {
    ActionChunk chunk;
    chunk.latent = Eigen::MatrixXd::NullaryExpr(H, D, [&]() { return u(rng); });
    const double z0 = 0.02 + 0.01 * u(rng);
    const ProjectionResult once = project_horizon(z0, anchor, chunk, wide, hard);
    const ProjectionResult twice = project_horizon(z0, anchor, once.chunk, wide, hard);
    worst = std::max(worst, (twice.chunk.latent - once.chunk.latent).cwiseAbs().maxCoeff());
  }
  if (worst >= 1e-9) {
    std::ostringstream os;
    os << "double projection drifts by " << worst;
    return os.str();
  }
  std::ostringstream os;
  os << "[idempotence gap " << worst << "]";
  return os.str();
}

}  // namespace

int main() {
  std::printf("acceptance gate\n");
  criterion("tilt-retargeting-identity", 1.0, check_tilt_retargeting_identity);
  criterion("trajectory-floor-guarantee", 120.0, check_trajectory_floor_guarantee);
  criterion("qp-minimum-norm-oracle", 60.0, check_qp_minimum_norm_oracle);
  criterion("sampler-moment-match", 120.0, check_sampler_moment_match);
  criterion("gradient-check", 60.0, check_gradient_check);
  criterion("push-ablation", 600.0, check_push_ablation);
  criterion("grasp-map-stabilization", 10.0, check_grasp_map_stabilization);
  criterion("projection-noop-idempotence", 30.0, check_projection_noop_idempotence);
  if (g_failures == 0) {
    std::printf("all 8 criteria passed\n");
  } else {
    std::printf("%d of 8 criteria FAILED\n", g_failures);
  }
  return g_failures;
}
