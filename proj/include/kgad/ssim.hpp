#pragma once

#include <optional>
#include <vector>

#include "kgad/image.hpp"
#include "kgad/metric_value.hpp"

namespace kgad {

// Gaussian-window SSIM settings. The stabilizers default to
// c1 = (0.01 * data_range)^2 and c2 = (0.03 * data_range)^2.
struct SsimConfig {
  int window_size = 11;
  double window_sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
  std::optional<double> c1_override;
  std::optional<double> c2_override;

  double c1() const { return c1_override.value_or((k1 * data_range) * (k1 * data_range)); }
  double c2() const { return c2_override.value_or((k2 * data_range) * (k2 * data_range)); }
  // Normalized 1-D Gaussian taps; the 2-D window is their outer product.
  std::vector<double> window() const;
};

// Mean local SSIM over every valid window position and every channel.
MetricValue ssim(const Image& a, const Image& b, const SsimConfig& cfg = {});
// 1 - ssim.
MetricValue ssimd(const Image& a, const Image& b, const SsimConfig& cfg = {});
// d ssimd(a, b) / d b, holding a fixed.
Tensor ssimd_gradient(const Image& a, const Image& b,
                      const SsimConfig& cfg = {});

}  // namespace kgad
