#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "cdp/projection.hpp"

using namespace cdp;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

NormStats identity_stats(int dims) {
  NormStats s;
  s.center = Eigen::VectorXd::Zero(dims);
  s.half_range = Eigen::VectorXd::Ones(dims);
  return s;
}

double retarget(double x, double r) { return std::asin(r * std::sin(x)); }

/// Brute-force minimum-norm correction for one independent slot: scan nu on a
/// grid and keep the smallest |nu| whose constraint holds.
double grid_min_norm(double lo_bound, double hi_bound,
                     const std::function<bool(double)>& feasible, double step = 1e-4) {
  double best = std::numeric_limits<double>::quiet_NaN();
  for (double nu = lo_bound; nu <= hi_bound; nu += step) {
    if (!feasible(nu)) continue;
    if (std::isnan(best) || nu * nu < best * best) best = nu;
  }
  return best;
}

ConstraintSet default_cs(double d_ratio = 1.0) {
  ConstraintSet cs;
  cs.d_ratio = d_ratio;
  return cs;
}

/// Recomputes the floor/drift quantities of a corrected chunk from scratch and
/// checks the hard guarantees (used against adversarial random inputs).
void check_invariants(double z0, const Eigen::Vector2d& anchor, const ProjectionResult& res,
                      const NormStats& stats, const ConstraintSet& cs, double tol) {
  const Eigen::MatrixXd phys = stats.denormalize_rows(res.chunk.latent);
  double z = z0;
  Eigen::Vector2d cum = Eigen::Vector2d::Zero();
  for (int t = 0; t < phys.rows(); ++t) {
    for (int fd : cs.floor_dims) z += phys(t, fd);
    CHECK(z >= cs.eps_safe - tol);
    for (size_t j = 0; j < cs.rot_dims.size(); ++j) {
      const Eigen::Index jj = static_cast<Eigen::Index>(j);
      cum(jj) += phys(t, cs.rot_dims[j]);
      const double drift =
          retarget(anchor(jj) + cum(jj), cs.d_ratio) - retarget(anchor(jj), cs.d_ratio);
      CHECK(std::abs(drift) <= cs.eps_task + tol);
    }
  }
}

}  // namespace

TEST_CASE("constraint set validation") {
  ConstraintSet cs;
  CHECK_NOTHROW(cs.validate());
  SUBCASE("margins must be positive") {
    cs.eps_safe = 0;
    CHECK_THROWS_AS(cs.validate(), ConfigError);
  }
  SUBCASE("task margin must be positive") {
    cs.eps_task = -0.1;
    CHECK_THROWS_AS(cs.validate(), ConfigError);
  }
  SUBCASE("horizon bound") {
    cs.horizon = 0;
    CHECK_THROWS_AS(cs.validate(), ConfigError);
  }
  SUBCASE("floor dim inside correction slots") {
    cs.floor_dims = {6};
    CHECK_THROWS_AS(cs.validate(), ConfigError);
  }
  SUBCASE("at most two tilt dims") {
    cs.rot_dims = {3, 4, 5};
    CHECK_THROWS_AS(cs.validate(), ConfigError);
  }
}

TEST_CASE("compile_constraints derives the arm ratio") {
  ManipulatorConfig base;
  base.robot_id = "a";
  base.gripper = {"flexible", 0.08, 0.20, 0.04, 0.0};
  base.z_base = 0.18;
  base.d = 0.20;
  ManipulatorConfig novel = base;
  novel.gripper.id = "long-print";
  novel.d = 0.235;
  const ConstraintSet cs = compile_constraints(base, novel, 0.02, 0.04, 6);
  CHECK(cs.eps_safe == 0.02);
  CHECK(cs.eps_task == 0.04);
  CHECK(cs.horizon == 6);
  CHECK(cs.d_ratio == doctest::Approx(0.20 / 0.235).epsilon(1e-15));
}

TEST_CASE("box projection closed form: clamp, shapes, feasibility") {
  Eigen::VectorXd q(3), lo(3), hi(3);
  q << -2.0, 0.5, 3.0;
  lo << -1.0, -kInf, -kInf;
  hi << kInf, kInf, 1.5;
  const Eigen::VectorXd v = qp_solve_box_halfspace(q, lo, hi);
  CHECK(v(0) == -1.0);
  CHECK(v(1) == 0.5);
  CHECK(v(2) == 1.5);

  Eigen::VectorXd short_lo(2);
  short_lo << 0, 0;
  CHECK_THROWS_AS(qp_solve_box_halfspace(q, short_lo, hi), ShapeMismatch);

  Eigen::VectorXd bad_lo = lo, bad_hi = hi;
  bad_lo(2) = 2.0;  // above hi(2) = 1.5
  CHECK_THROWS_AS(qp_solve_box_halfspace(q, bad_lo, bad_hi), Infeasible);
  CHECK_THROWS_AS(qp_solve_box_halfspace_active_set(q, bad_lo, bad_hi), Infeasible);
}

TEST_CASE("closed form agrees with the working-set solver on random boxes") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::uniform_int_distribution<int> dim(1, 6);
  std::uniform_int_distribution<int> pattern(0, 3);  // which bounds are infinite
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
    REQUIRE((closed - active).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("project_step: height floor binds with the minimal lift") {
  const ConstraintSet cs = default_cs();
  Eigen::VectorXd action = Eigen::VectorXd::Zero(7);
  action(2) = -0.02;  // drop from z = 0.02 would land at 0, below eps_safe = 0.01
  const StepProjection sp = project_step(0.02, Eigen::Vector2d::Zero(), action, cs);
  CHECK(sp.nu(2) == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(sp.corrected_z == doctest::Approx(0.01).epsilon(1e-15));
  for (int i : {0, 1, 3, 4, 5}) CHECK(sp.nu(i) == 0.0);
}

TEST_CASE("project_step: tilt drift clamps onto the task margin") {
  ConstraintSet cs = default_cs(1.0);  // identity retarget
  Eigen::VectorXd action = Eigen::VectorXd::Zero(7);
  action(2) = 0.05;  // feasible height
  action(3) = 0.2;   // drift 0.2 against eps_task = 0.05
  const StepProjection sp = project_step(0.05, Eigen::Vector2d::Zero(), action, cs);
  CHECK(sp.nu(3) == doctest::Approx(0.15).epsilon(1e-12));
  CHECK(sp.corrected_drift(0) == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(sp.nu(2) == 0.0);
  CHECK(sp.nu(4) == 0.0);
}

TEST_CASE("project_step rejects narrow action rows") {
  const ConstraintSet cs = default_cs();
  CHECK_THROWS_AS(project_step(0.1, Eigen::Vector2d::Zero(), Eigen::VectorXd::Zero(5), cs),
                  ShapeMismatch);
}

TEST_CASE("project_step matches a brute-force grid oracle") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uz(-0.05, 0.08);
  std::uniform_real_distribution<double> udz(-0.05, 0.05);
  std::uniform_real_distribution<double> uth(-0.45, 0.45);
  std::uniform_real_distribution<double> ueps(0.02, 0.2);
  std::uniform_real_distribution<double> uratio(0.8, 1.2);
  for (int it = 0; it < 120; ++it) {
    ConstraintSet cs;
    cs.eps_safe = 0.01;
    cs.eps_task = ueps(rng);
    cs.d_ratio = uratio(rng);
    const double z = uz(rng);
    Eigen::VectorXd action = Eigen::VectorXd::Zero(7);
    action(2) = udz(rng);
    action(3) = uth(rng);
    const Eigen::Vector2d anchor(uth(rng) * 0.5, 0.0);
    const StepProjection sp = project_step(z, anchor, action, cs);

    const double nu_z = grid_min_norm(-0.3, 0.3, [&](double nu) {
      return z + action(2) + nu >= cs.eps_safe - 1e-12;
    });
    const double drift = retarget(anchor(0) + action(3), cs.d_ratio) - retarget(anchor(0), cs.d_ratio);
    const double nu_t = grid_min_norm(-2.0, 2.0, [&](double nu) {
      return std::abs(drift - nu) <= cs.eps_task + 1e-12;
    });
    REQUIRE(std::abs(sp.nu(2) - nu_z) < 2e-4);
    REQUIRE(std::abs(sp.nu(3) - nu_t) < 2e-4);
  }
}

TEST_CASE("horizon projection: descending staircase, corrected prefix") {
  const int H = 4, D = 7;
  ActionChunk chunk;
  chunk.latent = Eigen::MatrixXd::Zero(H, D);
  for (int t = 0; t < H; ++t) {
    chunk.latent(t, 0) = 0.011 * (t + 1);  // untouched columns carry markers
    chunk.latent(t, 2) = -0.02;
    chunk.latent(t, 6) = 0.03 + 0.001 * t;
  }
  const NormStats stats = identity_stats(D);
  ConstraintSet cs = default_cs();
  cs.horizon = H;

  const ProjectionResult res = project_horizon(0.05, Eigen::Vector2d::Zero(), chunk, stats, cs);

  // nu_z per row: the floor engages at step 2 and stays engaged.
  CHECK(res.corrections.nu(0, 2) == 0.0);
  CHECK(res.corrections.nu(1, 2) == 0.0);
  CHECK(res.corrections.nu(2, 2) == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(res.corrections.nu(3, 2) == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(res.corrections.any());
  CHECK(res.corrections.max_abs() == doctest::Approx(0.02).epsilon(1e-12));

  // Accumulated heights hit the floor exactly once it binds: minimal total lift.
  const Eigen::MatrixXd phys = stats.denormalize_rows(res.chunk.latent);
  double z = 0.05;
  const double expect[4] = {0.03, 0.01, 0.01, 0.01};
  for (int t = 0; t < H; ++t) {
    z += phys(t, 2);
    CHECK(z == doctest::Approx(expect[t]).epsilon(1e-12));
  }

  // Untouched rows and columns keep their bits.
  CHECK(res.chunk.latent.row(0) == chunk.latent.row(0));
  CHECK(res.chunk.latent.row(1) == chunk.latent.row(1));
  CHECK(res.chunk.latent.col(0) == chunk.latent.col(0));
  CHECK(res.chunk.latent.col(6) == chunk.latent.col(6));
}

TEST_CASE("horizon projection: raw-prefix mode overshoots persistent drops") {
  const int H = 4, D = 7;
  ActionChunk chunk;
  chunk.latent = Eigen::MatrixXd::Zero(H, D);
  for (int t = 0; t < H; ++t) chunk.latent(t, 2) = -0.02;
  const NormStats stats = identity_stats(D);
  ConstraintSet cs = default_cs();
  cs.horizon = H;
  cs.mode = CumulativeMode::kRawPrefix;

  const ProjectionResult res = project_horizon(0.05, Eigen::Vector2d::Zero(), chunk, stats, cs);
  CHECK(res.corrections.nu(0, 2) == 0.0);
  CHECK(res.corrections.nu(1, 2) == 0.0);
  CHECK(res.corrections.nu(2, 2) == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(res.corrections.nu(3, 2) == doctest::Approx(0.04).epsilon(1e-12));

  const Eigen::MatrixXd phys = stats.denormalize_rows(res.chunk.latent);
  double z = 0.05;
  const double expect[4] = {0.03, 0.01, 0.01, 0.03};  // the last row climbs past the floor
  for (int t = 0; t < H; ++t) {
    z += phys(t, 2);
    CHECK(z == doctest::Approx(expect[t]).epsilon(1e-12));
  }
}

TEST_CASE("horizon projection: feasible chunks pass through bit-identically") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int H = 8, D = 7;
  const NormStats stats = identity_stats(D);
  ConstraintSet cs = default_cs();
  for (int it = 0; it < 50; ++it) {
    ActionChunk chunk;
    chunk.latent = Eigen::MatrixXd::NullaryExpr(H, D, [&]() { return 0.002 * normal(rng); });
    chunk.latent.col(2).array() = chunk.latent.col(2).array().abs();  // never descends
    const ProjectionResult res = project_horizon(0.5, Eigen::Vector2d::Zero(), chunk, stats, cs);
    REQUIRE(res.chunk.latent == chunk.latent);  // exact bit equality
    REQUIRE(!res.corrections.any());
    REQUIRE(res.corrections.max_abs() == 0.0);
  }
}

TEST_CASE("horizon projection: invariants and idempotence on adversarial chunks") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int H = 8, D = 7;
  NormStats stats = identity_stats(D);
  stats.half_range(2) = 0.03;   // physical dz up to +-3 cm
  stats.half_range(3) = 0.08;   // physical tilt steps up to +-0.08 rad
  stats.half_range(4) = 0.08;
  ConstraintSet cs = default_cs(1.25);  // longer trained arm: tilts amplify
  const Eigen::Vector2d anchor(0.1, -0.05);

  for (int it = 0; it < 100; ++it) {
    ActionChunk chunk;
    chunk.latent = Eigen::MatrixXd::NullaryExpr(H, D, [&]() { return u(rng); });
    const double z0 = 0.02 + 0.01 * u(rng);
    const ProjectionResult res = project_horizon(z0, anchor, chunk, stats, cs);
    check_invariants(z0, anchor, res, stats, cs, 1e-9);

    // Rows with a zero correction row keep their bits.
    for (int t = 0; t < H; ++t) {
      if (res.corrections.nu.row(t).cwiseAbs().maxCoeff() == 0.0) {
        REQUIRE(res.chunk.latent.row(t) == chunk.latent.row(t));
      }
    }

    // Projecting the projected chunk changes nothing beyond roundoff.
    const ProjectionResult twice = project_horizon(z0, anchor, res.chunk, stats, cs);
    REQUIRE((twice.chunk.latent - res.chunk.latent).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("horizon projection: shape guards") {
  const NormStats stats = identity_stats(7);
  ConstraintSet cs = default_cs();
  ActionChunk narrow;
  narrow.latent = Eigen::MatrixXd::Zero(4, 5);
  CHECK_THROWS_AS(project_horizon(0.1, Eigen::Vector2d::Zero(), narrow, stats, cs), ShapeMismatch);
  ActionChunk ok;
  ok.latent = Eigen::MatrixXd::Zero(4, 6);
  CHECK_THROWS_AS(project_horizon(0.1, Eigen::Vector2d::Zero(), ok, stats, cs), ShapeMismatch);
}

TEST_CASE("corrections CSV carries the slot header") {
  CorrectionVector cv;
  cv.nu = Eigen::MatrixXd::Zero(2, 6);
  cv.nu(1, 2) = 0.25;
  const auto tmp = std::filesystem::temp_directory_path() / "cdp_test_corrections.csv";
  save_corrections_csv(cv, tmp);
  std::ifstream f(tmp);
  std::string header, row0, row1;
  std::getline(f, header);
  std::getline(f, row0);
  std::getline(f, row1);
  f.close();
  std::filesystem::remove(tmp);
  CHECK(header == "step,nu_x,nu_y,nu_z,nu_rx,nu_ry,nu_rz");
  CHECK(row0.rfind("0,", 0) == 0);
  CHECK(row1.find("0.25") != std::string::npos);
}
