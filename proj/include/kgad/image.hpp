#pragma once

#include "kgad/tensor.hpp"

namespace kgad {

// An H x W x C raster (C in {1,3}) whose elements are finite and in [0,1].
// The invariant is checked on construction; every later access is read-only.
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, double fill = 0.0);

  // Validates `t`; throws FormatError on non-finite or out-of-range values
  // and DimensionError on an unsupported channel count.
  static Image from_tensor(Tensor t);
  // Clamps every element into [0,1] (non-finite values are rejected).
  static Image clamped(Tensor t);

  const Tensor& tensor() const { return data_; }
  const Shape& shape() const { return data_.shape(); }
  int height() const { return data_.height(); }
  int width() const { return data_.width(); }
  int channels() const { return data_.channels(); }
  std::size_t size() const { return data_.size(); }
  double at(int r, int c, int ch) const { return data_.at(r, c, ch); }
  double operator[](std::size_t i) const { return data_[i]; }
  std::span<const double> values() const { return data_.values(); }

  bool operator==(const Image&) const = default;

 private:
  explicit Image(Tensor t) : data_(std::move(t)) {}
  Tensor data_;
};

// A budget or step expressed as an integer count of 1/255 intensity steps, so
// that 8-bit storage of a grid-aligned image cannot leave the budget.
class Level255 {
 public:
  constexpr Level255() = default;
  constexpr explicit Level255(int steps) : steps_(steps) {}
  constexpr int steps() const { return steps_; }
  constexpr double value() const { return steps_ / 255.0; }
  constexpr bool operator==(const Level255&) const = default;
  constexpr auto operator<=>(const Level255&) const = default;

 private:
  int steps_ = 0;
};

// Replicates a single-channel image into three channels; 3-channel input is
// returned unchanged.
Image to_rgb(const Image& img);
// ITU-R 601 luma (0.299, 0.587, 0.114); single-channel input passes through.
Tensor luminance(const Image& img);
// Rounds every element to the nearest multiple of 1/255.
Image quantize_to_grid(const Image& img);

// Clamps each noise element to [-epsilon, epsilon] and then so that
// anchor + noise stays in [0,1]. Idempotent.
Tensor linf_project(const Tensor& noise, double epsilon, const Image& anchor);
inline Tensor linf_project(const Tensor& noise, Level255 epsilon,
                           const Image& anchor) {
  return linf_project(noise, epsilon.value(), anchor);
}

// anchor + noise, clamped into [0,1].
Image apply_noise(const Image& anchor, const Tensor& noise);

}  // namespace kgad
