#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace kgad {

struct Shape {
  int height = 0;
  int width = 0;
  int channels = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(height) * width * channels;
  }
  bool operator==(const Shape&) const = default;
  std::string to_string() const;
};

// Dense H x W x C array of doubles, channel-last, row-major. Carries noise,
// gradients and intermediate activations; Image adds the [0,1] invariant.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(int height, int width, int channels, double fill = 0.0)
      : Tensor(Shape{height, width, channels}, fill) {}

  const Shape& shape() const { return shape_; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  int channels() const { return shape_.channels; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(int r, int c, int ch) const {
    return (static_cast<std::size_t>(r) * shape_.width + c) * shape_.channels +
           ch;
  }
  double& at(int r, int c, int ch) { return data_[index(r, c, ch)]; }
  double at(int r, int c, int ch) const { return data_[index(r, c, ch)]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double scale);

  double max_abs() const;
  bool all_finite() const;

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double scale);

// Throws DimensionError naming `context` when shapes differ.
void require_same_shape(const Shape& a, const Shape& b, const char* context);

}  // namespace kgad
