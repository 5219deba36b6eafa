#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "kgad/conv.hpp"
#include "kgad/image.hpp"

namespace kgad {

// A differentiable image-to-image manipulation G. Implementations are
// immutable after construction, so one instance may serve many threads.
class ManipulationModel {
 public:
  virtual ~ManipulationModel() = default;
  virtual const std::string& name() const = 0;
  virtual Image forward(const Image& x) const = 0;
  // Vector-Jacobian product d<upstream, forward(x)> / dx.
  virtual Tensor input_gradient(const Image& x, const Tensor& upstream) const = 0;
};

enum class FixtureKind { kIdentity, kAttributeEdit, kStylize };

struct FixtureSpec {
  FixtureKind kind = FixtureKind::kIdentity;
  std::uint64_t seed = 0;
  double edit_strength = 0.8;
};

// Scaled-tanh squashing used on every fixture output: 0.5 + 0.5 tanh(g (v - 0.5)).
double smooth_saturation(double v);
double smooth_saturation_slope(double v);
inline constexpr double kSaturationGain = 2.5;

class IdentityModel final : public ManipulationModel {
 public:
  explicit IdentityModel(std::string name = "identity") : name_(std::move(name)) {}
  const std::string& name() const override { return name_; }
  Image forward(const Image& x) const override { return x; }
  Tensor input_gradient(const Image& x, const Tensor& upstream) const override;

 private:
  std::string name_;
};

// Face-region recolouring: a seeded 3x3 convolution and channel mix pass
// through a tanh recolour, blended into the input under a smooth elliptical
// face mask. A relighting term adds a wide Gaussian blur of the input, so
// the model responds most strongly to low-frequency changes. Both terms scale
// with the edit strength; at strength 0 only the squashing remains.
class AttributeEditModel final : public ManipulationModel {
 public:
  AttributeEditModel(std::string name, std::uint64_t seed, double strength);

  const std::string& name() const override { return name_; }
  Image forward(const Image& x) const override;
  Tensor input_gradient(const Image& x, const Tensor& upstream) const override;

  // Region mask value in [0,1] for pixel (r, c) of an h x w image.
  static double face_mask(int r, int c, int h, int w);

 private:
  struct Pass;
  Pass run(const Image& x) const;
  static const std::vector<double>& tone_taps();

  std::string name_;
  double strength_;
  Conv2d conv_;
  double mix_[3][3];
  double offset_[3];
  static constexpr double kRecolourGain = 2.5;
  static constexpr double kToneGain = 0.75;
  static constexpr double kToneSigma = 4.0;
};

// Texture transfer stand-in: sinusoidal responses of two seeded 3x3
// convolutions (dilation 1 and 2) mixed across channels and added to the
// input before squashing.
class StylizeModel final : public ManipulationModel {
 public:
  StylizeModel(std::string name, std::uint64_t seed, double strength);

  const std::string& name() const override { return name_; }
  Image forward(const Image& x) const override;
  Tensor input_gradient(const Image& x, const Tensor& upstream) const override;

 private:
  std::string name_;
  double strength_;
  Conv2d fine_, coarse_;
  double mix_[3][3];
  static constexpr double kFineFreq = 6.0;
  static constexpr double kCoarseFreq = 9.0;
  static constexpr double kTextureScale = 0.25;
};

// Runs an external executable speaking the tensor-file protocol:
//   <command> forward <in> <out>        in: "image" [H,W,C] -> out: "image"
//   <command> vjp <in> <upstream> <out> in: "image", upstream: "upstream"
//                                       -> out: "gradient"
// Files use the float32 + JSON sidecar format of tensor_file.hpp.
class ExternalModel final : public ManipulationModel {
 public:
  explicit ExternalModel(std::string command);

  const std::string& name() const override { return name_; }
  Image forward(const Image& x) const override;
  Tensor input_gradient(const Image& x, const Tensor& upstream) const override;

 private:
  std::string command_;
  std::string name_;
};

std::shared_ptr<const ManipulationModel> make_fixture(const FixtureSpec& spec,
                                                      std::string name = "");

// Registry names: identity, attribute_edit, attribute_edit_1..4, stylize,
// stylize_1..4, and external:<command>.
std::shared_ptr<const ManipulationModel> make_model(const std::string& name);
std::vector<std::string> fixture_names();
FixtureSpec fixture_spec(const std::string& name);

}  // namespace kgad
