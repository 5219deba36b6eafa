#pragma once

#include <cstdint>
#include <vector>

#include "kgad/tensor.hpp"

namespace kgad {

// Frozen 2-D convolution (cross-correlation) with zero "same" padding.
// weights are laid out [out][in][ky][kx].
struct Conv2d {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int dilation = 1;
  std::vector<double> weights;
  std::vector<double> bias;

  double& w(int o, int i, int ky, int kx) {
    return weights[((o * in_channels + i) * kernel + ky) * kernel + kx];
  }
  double w(int o, int i, int ky, int kx) const {
    return weights[((o * in_channels + i) * kernel + ky) * kernel + kx];
  }

  Tensor forward(const Tensor& x) const;
  // Gradient with respect to the input given the gradient of the output.
  Tensor backward(const Tensor& grad_out) const;

  // Seeded uniform weights scaled by sqrt(3 / fan_in); zero bias.
  static Conv2d seeded(int in_channels, int out_channels, int kernel,
                       std::uint64_t seed, int dilation = 1);
};

Tensor relu(Tensor x);
// Passes grad where the forward input was positive.
Tensor relu_backward(const Tensor& input, Tensor grad);

// 2x2 mean pooling; odd trailing rows/columns are dropped.
Tensor avg_pool2(const Tensor& x);
Tensor avg_pool2_backward(const Tensor& grad_out, const Shape& input_shape);

// Single-channel "same" correlation with replicated borders, and its adjoint.
Tensor correlate_replicate(const Tensor& x, const std::vector<double>& kernel,
                           int ksize);
Tensor correlate_replicate_adjoint(const Tensor& grad_out,
                                   const std::vector<double>& kernel,
                                   int ksize);

}  // namespace kgad
