#pragma once

#include "kgad/image.hpp"
#include "kgad/metric_value.hpp"

namespace kgad {

// Log-Gabor bank and noise-compensation settings for phase congruency.
struct PhaseCongruencyConfig {
  int scales = 4;
  int orientations = 4;
  double min_wavelength = 6.0;
  double mult = 2.0;
  double sigma_on_f = 0.55;
  double d_theta_on_sigma = 1.2;
  double noise_k = 2.0;
  double epsilon = 1e-4;
};

// Phase-congruency map of a single-channel plane (values scaled to 0..255).
Tensor phase_congruency(const Tensor& plane,
                        const PhaseCongruencyConfig& cfg = {});

// Scharr gradient magnitude with zero padding, matching a "same" convolution.
Tensor gradient_magnitude(const Tensor& plane);

// Feature similarity on the luminance channel; fsim(x, x) = 1 and two
// images with no phase-congruency response at all are defined as similar (1).
MetricValue fsim(const Image& a, const Image& b,
                 const PhaseCongruencyConfig& cfg = {});
MetricValue fsimd(const Image& a, const Image& b,
                  const PhaseCongruencyConfig& cfg = {});

}  // namespace kgad
