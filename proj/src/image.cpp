#include "kgad/image.hpp"

#include <algorithm>
#include <cmath>

#include "kgad/errors.hpp"

namespace kgad {
namespace {

void check_channels(const Shape& s) {
  if (s.channels != 1 && s.channels != 3) {
    throw DimensionError("image must have 1 or 3 channels, got " +
                         s.to_string());
  }
  if (s.height <= 0 || s.width <= 0) {
    throw DimensionError("image must be non-empty, got " + s.to_string());
  }
}

}  // namespace

Image::Image(int height, int width, int channels, double fill)
    : data_(height, width, channels, fill) {
  check_channels(data_.shape());
  if (!(fill >= 0.0 && fill <= 1.0)) {
    throw FormatError("image fill value outside [0,1]");
  }
}

Image Image::from_tensor(Tensor t) {
  check_channels(t.shape());
  for (double v : t.values()) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw FormatError("image value outside [0,1]: " + std::to_string(v));
    }
  }
  return Image(std::move(t));
}

Image Image::clamped(Tensor t) {
  check_channels(t.shape());
  for (double& v : t.values()) {
    if (!std::isfinite(v)) throw FormatError("non-finite image value");
    v = std::clamp(v, 0.0, 1.0);
  }
  return Image(std::move(t));
}

Image to_rgb(const Image& img) {
  if (img.channels() == 3) return img;
  Tensor out(img.height(), img.width(), 3);
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      const double v = img.at(r, c, 0);
      for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = v;
    }
  }
  return Image::from_tensor(std::move(out));
}

Tensor luminance(const Image& img) {
  Tensor out(img.height(), img.width(), 1);
  if (img.channels() == 1) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = img[i];
    return out;
  }
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      out.at(r, c, 0) = 0.299 * img.at(r, c, 0) + 0.587 * img.at(r, c, 1) +
                        0.114 * img.at(r, c, 2);
    }
  }
  return out;
}

Image quantize_to_grid(const Image& img) {
  Tensor t = img.tensor();
  for (double& v : t.values()) v = std::round(v * 255.0) / 255.0;
  return Image::from_tensor(std::move(t));
}

Tensor linf_project(const Tensor& noise, double epsilon, const Image& anchor) {
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be non-negative");
  require_same_shape(noise.shape(), anchor.shape(), "linf_project");
  Tensor out = noise;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double lo = std::max(-epsilon, -anchor[i]);
    const double hi = std::min(epsilon, 1.0 - anchor[i]);
    out[i] = std::clamp(out[i], lo, hi);
  }
  return out;
}

Image apply_noise(const Image& anchor, const Tensor& noise) {
  require_same_shape(noise.shape(), anchor.shape(), "apply_noise");
  return Image::clamped(anchor.tensor() + noise);
}

}  // namespace kgad
