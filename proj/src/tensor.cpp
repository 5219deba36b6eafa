#include "kgad/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "kgad/errors.hpp"

namespace kgad {

std::string Shape::to_string() const {
  return std::to_string(height) + "x" + std::to_string(width) + "x" +
         std::to_string(channels);
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape) {
  if (shape.height < 0 || shape.width < 0 || shape.channels < 0) {
    throw DimensionError("negative tensor dimension " + shape.to_string());
  }
  data_.assign(shape.size(), fill);
}

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape(shape_, other.shape_, "tensor +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  require_same_shape(shape_, other.shape_, "tensor -=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double scale) {
  for (double& v : data_) v *= scale;
  return *this;
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double scale) { return a *= scale; }

void require_same_shape(const Shape& a, const Shape& b, const char* context) {
  if (!(a == b)) {
    throw DimensionError(std::string(context) + ": shape " + a.to_string() +
                         " does not match " + b.to_string());
  }
}

}  // namespace kgad
