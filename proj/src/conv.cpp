#include "kgad/conv.hpp"

#include <algorithm>
#include <cmath>

#include "kgad/errors.hpp"
#include "kgad/rng.hpp"

namespace kgad {

Tensor Conv2d::forward(const Tensor& x) const {
  if (x.channels() != in_channels) {
    throw DimensionError("conv expects " + std::to_string(in_channels) +
                         " input channels, got " + x.shape().to_string());
  }
  const int h = x.height(), wd = x.width();
  const int half = kernel / 2;
  Tensor out(h, wd, out_channels);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < wd; ++c) {
      for (int o = 0; o < out_channels; ++o) {
        double acc = bias.empty() ? 0.0 : bias[o];
        for (int ky = 0; ky < kernel; ++ky) {
          const int rr = r + (ky - half) * dilation;
          if (rr < 0 || rr >= h) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int cc = c + (kx - half) * dilation;
            if (cc < 0 || cc >= wd) continue;
            for (int i = 0; i < in_channels; ++i) {
              acc += w(o, i, ky, kx) * x.at(rr, cc, i);
            }
          }
        }
        out.at(r, c, o) = acc;
      }
    }
  }
  return out;
}

Tensor Conv2d::backward(const Tensor& grad_out) const {
  if (grad_out.channels() != out_channels) {
    throw DimensionError("conv backward expects " +
                         std::to_string(out_channels) + " channels");
  }
  const int h = grad_out.height(), wd = grad_out.width();
  const int half = kernel / 2;
  Tensor grad_in(h, wd, in_channels);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < wd; ++c) {
      for (int o = 0; o < out_channels; ++o) {
        const double g = grad_out.at(r, c, o);
        if (g == 0.0) continue;
        for (int ky = 0; ky < kernel; ++ky) {
          const int rr = r + (ky - half) * dilation;
          if (rr < 0 || rr >= h) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int cc = c + (kx - half) * dilation;
            if (cc < 0 || cc >= wd) continue;
            for (int i = 0; i < in_channels; ++i) {
              grad_in.at(rr, cc, i) += w(o, i, ky, kx) * g;
            }
          }
        }
      }
    }
  }
  return grad_in;
}

Conv2d Conv2d::seeded(int in_channels, int out_channels, int kernel,
                      std::uint64_t seed, int dilation) {
  Conv2d conv;
  conv.in_channels = in_channels;
  conv.out_channels = out_channels;
  conv.kernel = kernel;
  conv.dilation = dilation;
  conv.weights.resize(static_cast<std::size_t>(out_channels) * in_channels *
                      kernel * kernel);
  conv.bias.assign(out_channels, 0.0);
  const double scale = std::sqrt(3.0 / (in_channels * kernel * kernel));
  SplitMix64 rng(seed);
  for (double& v : conv.weights) v = rng.uniform(-scale, scale);
  return conv;
}

Tensor relu(Tensor x) {
  for (double& v : x.values()) v = v > 0.0 ? v : 0.0;
  return x;
}

Tensor relu_backward(const Tensor& input, Tensor grad) {
  require_same_shape(input.shape(), grad.shape(), "relu_backward");
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(input[i] > 0.0)) grad[i] = 0.0;
  }
  return grad;
}

Tensor avg_pool2(const Tensor& x) {
  const int h = x.height() / 2, wd = x.width() / 2;
  Tensor out(h, wd, x.channels());
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < wd; ++c) {
      for (int ch = 0; ch < x.channels(); ++ch) {
        out.at(r, c, ch) =
            0.25 * (x.at(2 * r, 2 * c, ch) + x.at(2 * r, 2 * c + 1, ch) +
                    x.at(2 * r + 1, 2 * c, ch) + x.at(2 * r + 1, 2 * c + 1, ch));
      }
    }
  }
  return out;
}

Tensor avg_pool2_backward(const Tensor& grad_out, const Shape& input_shape) {
  Tensor grad_in(input_shape);
  for (int r = 0; r < grad_out.height(); ++r) {
    for (int c = 0; c < grad_out.width(); ++c) {
      for (int ch = 0; ch < grad_out.channels(); ++ch) {
        const double g = 0.25 * grad_out.at(r, c, ch);
        grad_in.at(2 * r, 2 * c, ch) += g;
        grad_in.at(2 * r, 2 * c + 1, ch) += g;
        grad_in.at(2 * r + 1, 2 * c, ch) += g;
        grad_in.at(2 * r + 1, 2 * c + 1, ch) += g;
      }
    }
  }
  return grad_in;
}

Tensor correlate_replicate(const Tensor& x, const std::vector<double>& kernel,
                           int ksize) {
  const int h = x.height(), wd = x.width(), half = ksize / 2;
  Tensor out(h, wd, 1);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < wd; ++c) {
      double acc = 0.0;
      for (int ky = 0; ky < ksize; ++ky) {
        const int rr = std::clamp(r + ky - half, 0, h - 1);
        for (int kx = 0; kx < ksize; ++kx) {
          const int cc = std::clamp(c + kx - half, 0, wd - 1);
          acc += kernel[ky * ksize + kx] * x.at(rr, cc, 0);
        }
      }
      out.at(r, c, 0) = acc;
    }
  }
  return out;
}

Tensor correlate_replicate_adjoint(const Tensor& grad_out,
                                   const std::vector<double>& kernel,
                                   int ksize) {
  const int h = grad_out.height(), wd = grad_out.width(), half = ksize / 2;
  Tensor grad_in(h, wd, 1);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < wd; ++c) {
      const double g = grad_out.at(r, c, 0);
      if (g == 0.0) continue;
      for (int ky = 0; ky < ksize; ++ky) {
        const int rr = std::clamp(r + ky - half, 0, h - 1);
        for (int kx = 0; kx < ksize; ++kx) {
          const int cc = std::clamp(c + kx - half, 0, wd - 1);
          grad_in.at(rr, cc, 0) += kernel[ky * ksize + kx] * g;
        }
      }
    }
  }
  return grad_in;
}

}  // namespace kgad
