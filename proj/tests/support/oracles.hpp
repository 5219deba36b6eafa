#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. They favour directness over speed: full-window sums, a naive DFT,
// explicit loops.

#include <cstdint>
#include <functional>
#include <vector>

#include "kgad/image.hpp"
#include "kgad/pyramid.hpp"
#include "kgad/ssim.hpp"

namespace oracle {

using kgad::Image;
using kgad::Tensor;

Image random_image(std::uint64_t seed, int h, int w, int c, double lo = 0.0,
                   double hi = 1.0);
Tensor random_tensor(std::uint64_t seed, const kgad::Shape& shape, double lo,
                     double hi);

// Mean SSIM over valid windows, computed window by window.
double ssim(const Image& a, const Image& b, const kgad::SsimConfig& cfg = {});

// Phase congruency and FSIM through a direct O(n^2) DFT.
Tensor phase_congruency(const Tensor& plane);
double fsim(const Image& a, const Image& b);

// Canny edge map built step by step (smoothing, Sobel, suppression, hysteresis).
Tensor canny(const Image& img);
double contour_l2(const Image& a, const Image& b);

// Per-stage ReLU features of a pyramid computed with direct convolutions.
std::vector<Tensor> pyramid_features(const kgad::ConvPyramid& pyramid,
                                     const Tensor& rgb);
double perceptual_distance(const kgad::ConvPyramid& pyramid, const Image& a,
                           const Image& b);

// Central differences of f at x for the listed flat indices.
std::vector<double> central_difference(const std::function<double(const Tensor&)>& f,
                                       const Tensor& x,
                                       const std::vector<std::size_t>& indices,
                                       double step);
// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor * scale). scale defaults to
// max_j |n_j|; pass the largest entry of the full gradient when only a few
// coordinates were sampled.
double max_relative_error(const std::vector<double>& analytic,
                          const std::vector<double>& numeric, double floor = 1e-2,
                          double scale = -1.0);
// `count` distinct flat indices drawn from [0, size).
std::vector<std::size_t> sample_indices(std::uint64_t seed, std::size_t size,
                                        std::size_t count);

}  // namespace oracle
