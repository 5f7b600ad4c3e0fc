#include "cdp/schedule.hpp"

#include <cmath>

namespace cdp {

void NoiseSchedule::validate() const {
  const int K = num_steps();
  if (K < 1) throw ConfigError("schedule: needs at least one step");
  if (static_cast<int>(alpha_bar.size()) != K + 1) {
    throw ConfigError("schedule: alpha_bar must have K+1 entries");
  }
  if (alpha_bar[0] != 1.0) throw ConfigError("schedule: alpha_bar[0] must be 1");
  double prod = 1.0;
  for (int i = 0; i < K; ++i) {
    if (!(betas[i] > 0.0) || !(betas[i] < 1.0)) {
      throw ConfigError("schedule: betas must lie in (0, 1)");
    }
    prod *= 1.0 - betas[i];
    if (alpha_bar[i + 1] != prod) throw ConfigError("schedule: alpha_bar inconsistent with betas");
    if (!(alpha_bar[i + 1] < alpha_bar[i])) {
      throw ConfigError("schedule: alpha_bar must decrease strictly");
    }
  }
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  NoiseSchedule s;
  s.betas = std::move(betas);
  s.alpha_bar.resize(s.betas.size() + 1);
  s.alpha_bar[0] = 1.0;
  for (size_t i = 0; i < s.betas.size(); ++i) {
    s.alpha_bar[i + 1] = s.alpha_bar[i] * (1.0 - s.betas[i]);
  }
  s.validate();
  return s;
}

NoiseSchedule NoiseSchedule::linear(int K, double beta_min, double beta_max) {
  if (K < 1) throw ConfigError("schedule: K must be >= 1");
  std::vector<double> betas(static_cast<size_t>(K));
  for (int i = 0; i < K; ++i) {
    const double t = (K == 1) ? 0.0 : static_cast<double>(i) / (K - 1);
    betas[static_cast<size_t>(i)] = beta_min + t * (beta_max - beta_min);
  }
  return from_betas(std::move(betas));
}

std::vector<int> substep_plan(int K, int n) {
  if (n < 1 || n > K) throw ConfigError("substep plan: need 1 <= n <= K");
  // Evenly spaced indices round(K*i/n), i = 1..n, emitted in descending order.
  // Consecutive exact values differ by K/n >= 1, so the rounded indices are
  // strictly increasing in i; the last one is exactly K and the first >= 1.
  std::vector<int> plan(static_cast<size_t>(n));
  for (int i = 1; i <= n; ++i) {
    plan[static_cast<size_t>(n - i)] =
        static_cast<int>(std::lround(static_cast<double>(K) * i / n));
  }
  return plan;
}

}  // namespace cdp
