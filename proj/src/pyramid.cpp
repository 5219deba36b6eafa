#include "kgad/pyramid.hpp"

#include "kgad/errors.hpp"
#include "kgad/rng.hpp"

namespace kgad {

ConvPyramid::ConvPyramid(std::vector<Conv2d> stages)
    : stages_(std::move(stages)) {
  if (stages_.size() != kStages) {
    throw ConfigError("feature pyramid needs exactly 3 stages");
  }
  for (std::size_t k = 1; k < stages_.size(); ++k) {
    if (stages_[k].in_channels != stages_[k - 1].out_channels) {
      throw ConfigError("feature pyramid stage widths do not chain");
    }
  }
}

ConvPyramid ConvPyramid::seeded(std::uint64_t seed) {
  const int widths[] = {3, 8, 16, 32};
  std::vector<Conv2d> stages;
  for (int k = 0; k < kStages; ++k) {
    stages.push_back(Conv2d::seeded(widths[k], widths[k + 1], 3,
                                    derive_seed(seed, static_cast<std::uint64_t>(k))));
  }
  return ConvPyramid(std::move(stages));
}

ConvPyramid ConvPyramid::from_bundle(const TensorBundle& bundle) {
  std::vector<Conv2d> stages;
  for (int k = 1; k <= kStages; ++k) {
    const std::string prefix = "stage" + std::to_string(k);
    const auto w = bundle.find(prefix + ".weight");
    const auto b = bundle.find(prefix + ".bias");
    if (w == bundle.end() || b == bundle.end()) {
      throw FormatError("weight bundle lacks " + prefix);
    }
    const std::vector<int>& s = w->second.shape;
    if (s.size() != 4 || s[2] != s[3] || s[2] % 2 == 0 ||
        b->second.shape != std::vector<int>{s[0]}) {
      throw FormatError(prefix + " has an unsupported shape");
    }
    Conv2d conv;
    conv.out_channels = s[0];
    conv.in_channels = s[1];
    conv.kernel = s[2];
    conv.weights = w->second.values;
    conv.bias = b->second.values;
    stages.push_back(std::move(conv));
  }
  if (stages.front().in_channels != 3) {
    throw FormatError("first pyramid stage must take 3 channels");
  }
  return ConvPyramid(std::move(stages));
}

TensorBundle ConvPyramid::to_bundle() const {
  TensorBundle bundle;
  for (int k = 0; k < kStages; ++k) {
    const Conv2d& conv = stages_[k];
    const std::string prefix = "stage" + std::to_string(k + 1);
    bundle[prefix + ".weight"] = {
        {conv.out_channels, conv.in_channels, conv.kernel, conv.kernel},
        conv.weights};
    bundle[prefix + ".bias"] = {{conv.out_channels}, conv.bias};
  }
  return bundle;
}

ConvPyramid::Activations ConvPyramid::forward(const Tensor& rgb) const {
  Activations acts;
  Tensor input = rgb;
  for (int k = 0; k < kStages; ++k) {
    if (k > 0) input = avg_pool2(acts.features.back());
    if (input.height() == 0 || input.width() == 0) {
      throw SizeError("image too small for the feature pyramid");
    }
    Tensor pre = stages_[k].forward(input);
    acts.inputs.push_back(std::move(input));
    acts.features.push_back(relu(pre));
    acts.pre.push_back(std::move(pre));
  }
  return acts;
}

Tensor ConvPyramid::backward(const Activations& acts,
                             const std::vector<Tensor>& feature_grads) const {
  Tensor carry;  // gradient flowing into the current stage's features
  for (int k = kStages - 1; k >= 0; --k) {
    Tensor g(acts.features[k].shape());
    if (!carry.empty()) g += carry;
    if (k < static_cast<int>(feature_grads.size()) && !feature_grads[k].empty()) {
      g += feature_grads[k];
    }
    Tensor g_in = stages_[k].backward(relu_backward(acts.pre[k], std::move(g)));
    if (k > 0) {
      carry = avg_pool2_backward(g_in, acts.features[k - 1].shape());
    } else {
      carry = std::move(g_in);
    }
  }
  return carry;
}

}  // namespace kgad
