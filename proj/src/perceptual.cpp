#include "kgad/perceptual.hpp"

#include <cmath>
#include <limits>

#include "kgad/errors.hpp"

namespace kgad {
namespace {

Tensor unit_normalize_channels(const Tensor& f) {
  Tensor out = f;
  const int ch = f.channels();
  for (std::size_t p = 0; p < f.size(); p += ch) {
    double norm2 = 0.0;
    for (int k = 0; k < ch; ++k) norm2 += f[p + k] * f[p + k];
    const double inv = 1.0 / (std::sqrt(norm2) + 1e-10);
    for (int k = 0; k < ch; ++k) out[p + k] = f[p + k] * inv;
  }
  return out;
}

}  // namespace

PerceptualDistance PerceptualDistance::from_file(const std::string& path) {
  return PerceptualDistance(ConvPyramid::from_bundle(read_tensor_file(path)));
}

MetricValue PerceptualDistance::operator()(const Image& a,
                                           const Image& b) const {
  require_same_shape(a.shape(), b.shape(), "perceptual_distance");
  const auto fa = pyramid_.forward(to_rgb(a).tensor());
  const auto fb = pyramid_.forward(to_rgb(b).tensor());
  double total = 0.0;
  for (int k = 0; k < ConvPyramid::kStages; ++k) {
    const Tensor na = unit_normalize_channels(fa.features[k]);
    const Tensor nb = unit_normalize_channels(fb.features[k]);
    double acc = 0.0;
    for (std::size_t i = 0; i < na.size(); ++i) {
      const double d = na[i] - nb[i];
      acc += d * d;
    }
    total += acc / (static_cast<double>(na.height()) * na.width());
  }
  return {"lpips_proxy", total, true};
}

MetricValue perceptual_distance(const Image& a, const Image& b) {
  static const PerceptualDistance metric;
  return metric(a, b);
}

MetricValue mse(const Image& a, const Image& b) {
  require_same_shape(a.shape(), b.shape(), "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return {"mse", acc / static_cast<double>(a.size()), true};
}

MetricValue psnr(const Image& a, const Image& b) {
  const double m = mse(a, b).value;
  if (m == 0.0) return {"psnr", std::numeric_limits<double>::infinity(), false};
  return {"psnr", -10.0 * std::log10(m), false};
}

}  // namespace kgad
