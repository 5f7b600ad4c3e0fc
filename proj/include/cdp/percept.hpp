#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cdp/errors.hpp"

namespace cdp {

/// Dense grasp-probability image, row-major, values in [0, 1].
struct GraspProbMap {
  int width = 0;
  int height = 0;
  std::vector<float> data;  ///< size width*height, index v*width + u

  float at(int u, int v) const { return data[static_cast<size_t>(v) * width + u]; }
  float& at(int u, int v) { return data[static_cast<size_t>(v) * width + u]; }

  /// Throws ConfigError on dimension/data-size disagreement or out-of-range values.
  void validate() const;

  static GraspProbMap zeros(int width, int height);
};

/// Pixel centroid of the positive support.
struct Centroid {
  double u = 0, v = 0;
  int count = 0;  ///< supporting pixels
};

/// Zeroes every pixel strictly below `thresh` (boundary values survive);
/// surviving pixels keep their probability.
GraspProbMap threshold_filter(const GraspProbMap& m, float thresh = 0.7f);

/// Unweighted mean position of pixels > 0. Throws EmptySet when none.
Centroid centroid(const GraspProbMap& m);

/// Binary disc: 1 where ||(u,v) - (cu,cv)||_2 <= radius, else 0.
GraspProbMap circular_mask(int width, int height, double cu, double cv, double radius);

struct StabilizeResult {
  GraspProbMap mask;  ///< binary
  bool low_confidence = false;
  Centroid center;  ///< valid when !low_confidence
};

/// Threshold -> centroid -> circular mask. An empty or tiny post-threshold
/// support (< min_support pixels) sets low_confidence and returns an all-zero
/// mask instead of failing.
StabilizeResult stabilize(const GraspProbMap& m, float thresh = 0.7f, double radius = 30.0,
                          int min_support = 10);

/// Grayscale PGM I/O (P2 and P5, maxval up to 65535). Values are scaled to
/// [0, 1] on load. save writes P2 at maxval 255. Throws ConfigError on
/// malformed files.
GraspProbMap load_pgm(const std::filesystem::path& path);
void save_pgm(const GraspProbMap& m, const std::filesystem::path& path);

}  // namespace cdp
