#pragma once

#include <cstdint>

#include "kgad/image.hpp"
#include "kgad/metric_value.hpp"
#include "kgad/pyramid.hpp"

namespace kgad {

// Learned-perceptual-distance stand-in: a frozen feature pyramid whose
// per-location activation vectors are scaled to unit length, compared by
// squared difference averaged over space and summed over stages.
class PerceptualDistance {
 public:
  static constexpr std::uint64_t kDefaultSeed = 0x4C50495053ULL;

  explicit PerceptualDistance(std::uint64_t seed = kDefaultSeed)
      : pyramid_(ConvPyramid::seeded(seed)) {}
  explicit PerceptualDistance(ConvPyramid pyramid)
      : pyramid_(std::move(pyramid)) {}
  // Weights from a tensor file (see tensor_file.hpp).
  static PerceptualDistance from_file(const std::string& path);

  MetricValue operator()(const Image& a, const Image& b) const;
  const ConvPyramid& pyramid() const { return pyramid_; }

 private:
  ConvPyramid pyramid_;
};

MetricValue perceptual_distance(const Image& a, const Image& b);

MetricValue mse(const Image& a, const Image& b);
// -10 log10(mse); +infinity when the images are identical.
MetricValue psnr(const Image& a, const Image& b);

}  // namespace kgad
