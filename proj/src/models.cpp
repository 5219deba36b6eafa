#include "kgad/models.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>

#include "kgad/errors.hpp"
#include "kgad/rng.hpp"
#include "kgad/synthetic.hpp"
#include "kgad/tensor_file.hpp"

namespace kgad {
namespace {

Tensor sum_to_channels(const Tensor& grad_rgb, int channels) {
  if (channels == 3) return grad_rgb;
  Tensor out(grad_rgb.height(), grad_rgb.width(), 1);
  for (std::size_t p = 0; p < out.size(); ++p) {
    out[p] = grad_rgb[3 * p] + grad_rgb[3 * p + 1] + grad_rgb[3 * p + 2];
  }
  return out;
}

void check_upstream(const Image& x, const Tensor& upstream, int out_channels) {
  const Shape expected{x.height(), x.width(), out_channels};
  require_same_shape(upstream.shape(), expected, "input_gradient upstream");
}

void fill_mix(SplitMix64& rng, double (&mix)[3][3], double diag, double spread) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      mix[i][j] = (i == j ? diag : 0.0) + rng.uniform(-spread, spread);
}

std::vector<double> gaussian_taps(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> taps(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    taps[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += taps[i + radius];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

// Correlation with `taps` along rows (axis 0) or columns (axis 1) with
// replicated borders, or its adjoint. Applying both axes gives the 2-D
// separable blur exactly, since border replication is separable too.
Tensor blur_axis(const Tensor& x, const std::vector<double>& taps, int axis,
                 bool adjoint) {
  const int h = x.height(), w = x.width(), ch = x.channels();
  const int radius = static_cast<int>(taps.size() / 2);
  const int n = axis == 0 ? h : w;
  Tensor out(x.shape());
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const int pos = axis == 0 ? r : c;
      for (int i = -radius; i <= radius; ++i) {
        const int q = std::clamp(pos + i, 0, n - 1);
        const int rr = axis == 0 ? q : r, cc = axis == 0 ? c : q;
        const double k = taps[i + radius];
        for (int k_ch = 0; k_ch < ch; ++k_ch) {
          if (adjoint) out.at(rr, cc, k_ch) += k * x.at(r, c, k_ch);
          else out.at(r, c, k_ch) += k * x.at(rr, cc, k_ch);
        }
      }
    }
  }
  return out;
}

Tensor blur(const Tensor& x, const std::vector<double>& taps) {
  return blur_axis(blur_axis(x, taps, 1, false), taps, 0, false);
}

Tensor blur_adjoint(const Tensor& g, const std::vector<double>& taps) {
  return blur_axis(blur_axis(g, taps, 0, true), taps, 1, true);
}

}  // namespace

double smooth_saturation(double v) {
  return 0.5 + 0.5 * std::tanh(kSaturationGain * (v - 0.5));
}

double smooth_saturation_slope(double v) {
  const double t = std::tanh(kSaturationGain * (v - 0.5));
  return 0.5 * kSaturationGain * (1.0 - t * t);
}

Tensor IdentityModel::input_gradient(const Image& x,
                                     const Tensor& upstream) const {
  check_upstream(x, upstream, x.channels());
  return upstream;
}

// ---------------------------------------------------------------------------

struct AttributeEditModel::Pass {
  Tensor rgb;       // promoted input
  Tensor tone;      // wide Gaussian blur of the input
  Tensor recolour;  // tanh output u
  Tensor blend;     // v before saturation
  std::vector<double> mask;
};

AttributeEditModel::AttributeEditModel(std::string name, std::uint64_t seed,
                                       double strength)
    : name_(std::move(name)), strength_(strength) {
  if (!(strength >= 0.0 && strength <= 1.0)) {
    throw ConfigError("edit strength must lie in [0,1]");
  }
  SplitMix64 rng(derive_seed(seed, 21));
  conv_.in_channels = 3;
  conv_.out_channels = 3;
  conv_.kernel = 3;
  conv_.weights.resize(81);
  conv_.bias.assign(3, 0.0);
  for (int o = 0; o < 3; ++o)
    for (int i = 0; i < 3; ++i)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx)
          conv_.w(o, i, ky, kx) = (o == i && ky == 1 && kx == 1 ? 0.7 : 0.0) +
                                  rng.uniform(-0.08, 0.08);
  fill_mix(rng, mix_, 0.8, 0.35);
  for (double& b : offset_) b = rng.uniform(-0.15, 0.15);
}

double AttributeEditModel::face_mask(int r, int c, int h, int w) {
  const FaceLayout layout;
  const double ur = (r + 0.5) / h, uc = (c + 0.5) / w;
  const double dr = (ur - layout.face_center.row) / (1.1 * layout.face_radius_row);
  const double dc = (uc - layout.face_center.col) / (1.1 * layout.face_radius_col);
  const double rho = std::sqrt(dr * dr + dc * dc);
  return 1.0 / (1.0 + std::exp(-8.0 * (1.0 - rho)));
}

const std::vector<double>& AttributeEditModel::tone_taps() {
  static const std::vector<double> taps = gaussian_taps(kToneSigma);
  return taps;
}

AttributeEditModel::Pass AttributeEditModel::run(const Image& x) const {
  Pass p;
  p.rgb = to_rgb(x).tensor();
  const int h = x.height(), w = x.width();
  const Tensor z = conv_.forward(p.rgb);
  p.tone = blur(p.rgb, tone_taps());
  p.recolour = Tensor(h, w, 3);
  p.blend = Tensor(h, w, 3);
  p.mask.resize(static_cast<std::size_t>(h) * w);
  const double tone_gain = strength_ * kToneGain;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double m = strength_ * face_mask(r, c, h, w);
      p.mask[static_cast<std::size_t>(r) * w + c] = m;
      for (int o = 0; o < 3; ++o) {
        double pre = offset_[o];
        for (int i = 0; i < 3; ++i) pre += mix_[o][i] * z.at(r, c, i);
        const double u = 0.5 + 0.5 * std::tanh(kRecolourGain * (pre - 0.5));
        p.recolour.at(r, c, o) = u;
        p.blend.at(r, c, o) = (1.0 - m) * p.rgb.at(r, c, o) + m * u +
                              tone_gain * (p.tone.at(r, c, o) - 0.5);
      }
    }
  }
  return p;
}

Image AttributeEditModel::forward(const Image& x) const {
  Pass p = run(x);
  for (double& v : p.blend.values()) v = smooth_saturation(v);
  return Image::clamped(std::move(p.blend));
}

Tensor AttributeEditModel::input_gradient(const Image& x,
                                          const Tensor& upstream) const {
  check_upstream(x, upstream, 3);
  const Pass p = run(x);
  const int h = x.height(), w = x.width();
  Tensor grad_rgb(h, w, 3), grad_tone(h, w, 3), grad_z(h, w, 3);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double m = p.mask[static_cast<std::size_t>(r) * w + c];
      double g_pre[3];
      for (int o = 0; o < 3; ++o) {
        const double g_blend =
            upstream.at(r, c, o) * smooth_saturation_slope(p.blend.at(r, c, o));
        grad_rgb.at(r, c, o) = g_blend * (1.0 - m);
        grad_tone.at(r, c, o) = g_blend * strength_ * kToneGain;
        const double t = 2.0 * p.recolour.at(r, c, o) - 1.0;  // tanh value
        g_pre[o] = g_blend * m * 0.5 * kRecolourGain * (1.0 - t * t);
      }
      for (int i = 0; i < 3; ++i) {
        double acc = 0.0;
        for (int o = 0; o < 3; ++o) acc += mix_[o][i] * g_pre[o];
        grad_z.at(r, c, i) = acc;
      }
    }
  }
  grad_rgb += conv_.backward(grad_z);
  grad_rgb += blur_adjoint(grad_tone, tone_taps());
  return sum_to_channels(grad_rgb, x.channels());
}

// ---------------------------------------------------------------------------

StylizeModel::StylizeModel(std::string name, std::uint64_t seed, double strength)
    : name_(std::move(name)), strength_(strength) {
  if (!(strength >= 0.0 && strength <= 1.0)) {
    throw ConfigError("edit strength must lie in [0,1]");
  }
  fine_ = Conv2d::seeded(3, 3, 3, derive_seed(seed, 31), 1);
  coarse_ = Conv2d::seeded(3, 3, 3, derive_seed(seed, 32), 2);
  SplitMix64 rng(derive_seed(seed, 33));
  fill_mix(rng, mix_, 0.0, 0.5);
}

Image StylizeModel::forward(const Image& x) const {
  Tensor rgb = to_rgb(x).tensor();
  const Tensor hf = fine_.forward(rgb), hc = coarse_.forward(rgb);
  for (std::size_t p = 0; p < rgb.size(); p += 3) {
    double t[3];
    for (int i = 0; i < 3; ++i) {
      t[i] = std::sin(kFineFreq * hf[p + i]) + std::sin(kCoarseFreq * hc[p + i]);
    }
    for (int o = 0; o < 3; ++o) {
      double s = 0.0;
      for (int i = 0; i < 3; ++i) s += mix_[o][i] * t[i];
      rgb[p + o] = smooth_saturation(rgb[p + o] + strength_ * kTextureScale * s);
    }
  }
  return Image::clamped(std::move(rgb));
}

Tensor StylizeModel::input_gradient(const Image& x,
                                    const Tensor& upstream) const {
  check_upstream(x, upstream, 3);
  const Tensor rgb = to_rgb(x).tensor();
  const Tensor hf = fine_.forward(rgb), hc = coarse_.forward(rgb);
  Tensor grad_rgb(rgb.shape()), grad_hf(rgb.shape()), grad_hc(rgb.shape());
  for (std::size_t p = 0; p < rgb.size(); p += 3) {
    double t[3];
    for (int i = 0; i < 3; ++i) {
      t[i] = std::sin(kFineFreq * hf[p + i]) + std::sin(kCoarseFreq * hc[p + i]);
    }
    double g_v[3];
    for (int o = 0; o < 3; ++o) {
      double s = 0.0;
      for (int i = 0; i < 3; ++i) s += mix_[o][i] * t[i];
      const double v = rgb[p + o] + strength_ * kTextureScale * s;
      g_v[o] = upstream[p + o] * smooth_saturation_slope(v);
      grad_rgb[p + o] = g_v[o];
    }
    for (int i = 0; i < 3; ++i) {
      double g_t = 0.0;
      for (int o = 0; o < 3; ++o) g_t += mix_[o][i] * g_v[o];
      g_t *= strength_ * kTextureScale;
      grad_hf[p + i] = g_t * kFineFreq * std::cos(kFineFreq * hf[p + i]);
      grad_hc[p + i] = g_t * kCoarseFreq * std::cos(kCoarseFreq * hc[p + i]);
    }
  }
  grad_rgb += fine_.backward(grad_hf);
  grad_rgb += coarse_.backward(grad_hc);
  return sum_to_channels(grad_rgb, x.channels());
}

// ---------------------------------------------------------------------------

namespace {

class TempDir {
 public:
  TempDir() {
    std::string pattern =
        (std::filesystem::temp_directory_path() / "kgad-model-XXXXXX").string();
    if (!mkdtemp(pattern.data())) throw IoError("cannot create temp directory");
    path_ = pattern;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

std::string quote(const std::string& s) {
  std::string out = "'";
  for (char ch : s) {
    if (ch == '\'') out += "'\\''";
    else out += ch;
  }
  return out + "'";
}

NamedArray as_array(const Tensor& t) {
  return {{t.height(), t.width(), t.channels()},
          std::vector<double>(t.values().begin(), t.values().end())};
}

Tensor as_tensor(const TensorBundle& bundle, const std::string& key) {
  const auto it = bundle.find(key);
  if (it == bundle.end() || it->second.shape.size() != 3) {
    throw FormatError("external model reply lacks a 3-d '" + key + "' tensor");
  }
  const auto& s = it->second.shape;
  Tensor t(s[0], s[1], s[2]);
  std::copy(it->second.values.begin(), it->second.values.end(), t.values().begin());
  return t;
}

void run_command(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  if (status != 0) {
    throw IoError("external model command failed (" + std::to_string(status) +
                  "): " + cmd);
  }
}

}  // namespace

ExternalModel::ExternalModel(std::string command)
    : command_(std::move(command)), name_("external:" + command_) {
  if (command_.empty()) throw ConfigError("external model needs a command");
}

Image ExternalModel::forward(const Image& x) const {
  TempDir dir;
  const std::string in = dir.file("in.f32"), out = dir.file("out.f32");
  write_tensor_file(in, {{"image", as_array(x.tensor())}});
  run_command(command_ + " forward " + quote(in) + " " + quote(out));
  Tensor y = as_tensor(read_tensor_file(out), "image");
  if (y.height() != x.height() || y.width() != x.width()) {
    throw DimensionError("external model changed the image size");
  }
  return Image::clamped(std::move(y));
}

Tensor ExternalModel::input_gradient(const Image& x,
                                     const Tensor& upstream) const {
  TempDir dir;
  const std::string in = dir.file("in.f32"), up = dir.file("up.f32"),
                    out = dir.file("out.f32");
  write_tensor_file(in, {{"image", as_array(x.tensor())}});
  write_tensor_file(up, {{"upstream", as_array(upstream)}});
  run_command(command_ + " vjp " + quote(in) + " " + quote(up) + " " + quote(out));
  Tensor g = as_tensor(read_tensor_file(out), "gradient");
  require_same_shape(g.shape(), x.shape(), "external model gradient");
  return g;
}

// ---------------------------------------------------------------------------

std::shared_ptr<const ManipulationModel> make_fixture(const FixtureSpec& spec,
                                                      std::string name) {
  switch (spec.kind) {
    case FixtureKind::kIdentity:
      return std::make_shared<IdentityModel>(name.empty() ? "identity" : name);
    case FixtureKind::kAttributeEdit:
      return std::make_shared<AttributeEditModel>(
          name.empty() ? "attribute_edit" : name, spec.seed, spec.edit_strength);
    case FixtureKind::kStylize:
      return std::make_shared<StylizeModel>(name.empty() ? "stylize" : name,
                                            spec.seed, spec.edit_strength);
  }
  throw ConfigError("unknown fixture kind");
}

std::vector<std::string> fixture_names() {
  std::vector<std::string> names{"identity", "attribute_edit"};
  for (int i = 1; i < 5; ++i) names.push_back("attribute_edit_" + std::to_string(i));
  names.push_back("stylize");
  for (int i = 1; i < 5; ++i) names.push_back("stylize_" + std::to_string(i));
  return names;
}

FixtureSpec fixture_spec(const std::string& name) {
  // Five edits share geometry and differ by seed and strength.
  static constexpr double kStrengths[5] = {0.8, 0.7, 0.9, 0.75, 0.85};
  auto indexed = [&](const std::string& prefix) -> int {
    if (name == prefix) return 0;
    if (name.size() == prefix.size() + 2 && name.compare(0, prefix.size(), prefix) == 0 &&
        name[prefix.size()] == '_' && name.back() >= '1' && name.back() <= '4') {
      return name.back() - '0';
    }
    return -1;
  };
  if (name == "identity") return {FixtureKind::kIdentity, 0, 0.0};
  if (const int i = indexed("attribute_edit"); i >= 0) {
    return {FixtureKind::kAttributeEdit, 0xA77E0000ULL + static_cast<std::uint64_t>(i),
            kStrengths[i]};
  }
  if (const int i = indexed("stylize"); i >= 0) {
    return {FixtureKind::kStylize, 0x57170000ULL + static_cast<std::uint64_t>(i),
            kStrengths[i]};
  }
  throw ConfigError("unknown model '" + name + "'");
}

std::shared_ptr<const ManipulationModel> make_model(const std::string& name) {
  constexpr std::string_view kExternal = "external:";
  if (name.rfind(kExternal, 0) == 0) {
    return std::make_shared<ExternalModel>(name.substr(kExternal.size()));
  }
  return make_fixture(fixture_spec(name), name);
}

}  // namespace kgad
