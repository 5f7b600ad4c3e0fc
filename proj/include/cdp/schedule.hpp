#pragma once

#include <vector>

#include "cdp/errors.hpp"

namespace cdp {

/// Variance schedule of the denoising process. betas[i] is the noise rate of
/// step i+1; alpha_bar[k] = prod_{j=1..k} (1 - betas[j-1]) with alpha_bar[0]
/// fixed at 1 (the empty product), so alpha_bar has K+1 entries and decreases
/// strictly.
struct NoiseSchedule {
  std::vector<double> betas;
  std::vector<double> alpha_bar;

  int num_steps() const { return static_cast<int>(betas.size()); }

  /// Throws ConfigError when empty, any beta is outside (0, 1), or alpha_bar
  /// is inconsistent with betas.
  void validate() const;

  /// Linear beta ramp over K steps.
  static NoiseSchedule linear(int K, double beta_min = 1e-4, double beta_max = 0.02);

  /// Builds alpha_bar from explicit betas.
  static NoiseSchedule from_betas(std::vector<double> betas);
};

/// Descending step indices [k_n, ..., k_1] visited by the few-step
/// deterministic sampler: k_n == K, k_1 >= 1, strictly decreasing, n entries.
/// n == K yields the full sweep [K, K-1, ..., 1]. Throws ConfigError when
/// n < 1 or n > K.
std::vector<int> substep_plan(int K, int n);

}  // namespace cdp
