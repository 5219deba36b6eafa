#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kgad/conv.hpp"
#include "kgad/tensor_file.hpp"

namespace kgad {

// Frozen 3-stage convolutional feature pyramid on RGB input. Stage k applies
// a 3x3 convolution and ReLU; stages after the first see the 2x2
// mean-pooled activations of the previous stage.
class ConvPyramid {
 public:
  static constexpr int kStages = 3;

  ConvPyramid() = default;
  explicit ConvPyramid(std::vector<Conv2d> stages);

  // Channel widths 3 -> 8 -> 16 -> 32, weights drawn from `seed`.
  static ConvPyramid seeded(std::uint64_t seed);
  // Reads "stage{k}.weight" [out,in,3,3] and "stage{k}.bias" [out], k = 1..3.
  static ConvPyramid from_bundle(const TensorBundle& bundle);
  TensorBundle to_bundle() const;

  struct Activations {
    std::vector<Tensor> inputs;       // input to each stage's convolution
    std::vector<Tensor> pre;          // conv outputs
    std::vector<Tensor> features;     // ReLU outputs
  };

  Activations forward(const Tensor& rgb) const;
  // Input gradient from per-stage feature gradients; an empty tensor means
  // that stage receives no gradient.
  Tensor backward(const Activations& acts,
                  const std::vector<Tensor>& feature_grads) const;

  const std::vector<Conv2d>& stages() const { return stages_; }

 private:
  std::vector<Conv2d> stages_;
};

}  // namespace kgad
