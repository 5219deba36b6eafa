#include "kgad/knowledge.hpp"

#include <algorithm>
#include <cmath>

#include "kgad/errors.hpp"
#include "kgad/rng.hpp"

namespace kgad {
namespace {

void require_kind(const ExtractorSpec& spec, FeatureKind kind) {
  if (spec.kind != kind) {
    throw ConfigError(kind == FeatureKind::kLandmarks
                          ? "extractor spec is not a landmark spec"
                          : "extractor spec is not a content spec");
  }
}

// Spreads a luminance gradient back over the image channels.
Tensor luminance_backward(const Tensor& grad_lum, int channels) {
  if (channels == 1) return grad_lum;
  static constexpr double kWeights[3] = {0.299, 0.587, 0.114};
  Tensor out(grad_lum.height(), grad_lum.width(), 3);
  for (int r = 0; r < out.height(); ++r)
    for (int c = 0; c < out.width(); ++c)
      for (int ch = 0; ch < 3; ++ch)
        out.at(r, c, ch) = kWeights[ch] * grad_lum.at(r, c, 0);
  return out;
}

// Sums a 3-channel gradient of to_rgb(img) back to img's channel count.
Tensor rgb_backward(const Tensor& grad_rgb, int channels) {
  if (channels == 3) return grad_rgb;
  Tensor out(grad_rgb.height(), grad_rgb.width(), 1);
  for (int r = 0; r < out.height(); ++r)
    for (int c = 0; c < out.width(); ++c)
      out.at(r, c, 0) = grad_rgb.at(r, c, 0) + grad_rgb.at(r, c, 1) +
                        grad_rgb.at(r, c, 2);
  return out;
}

}  // namespace

double KnowledgeFeatures::diagonal() const {
  return std::sqrt(static_cast<double>(height) * height +
                   static_cast<double>(width) * width);
}

SoftArgmax soft_argmax(const Tensor& heatmap, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  const int h = heatmap.height(), w = heatmap.width();
  double peak = heatmap[0];
  for (double v : heatmap.values()) peak = std::max(peak, v);
  SoftArgmax out;
  out.probabilities.resize(heatmap.size());
  double total = 0.0;
  for (std::size_t i = 0; i < heatmap.size(); ++i) {
    out.probabilities[i] = std::exp((heatmap[i] - peak) / temperature);
    total += out.probabilities[i];
  }
  double row = 0.0, col = 0.0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double& p = out.probabilities[static_cast<std::size_t>(r) * w + c];
      p /= total;
      row += p * r;
      col += p * c;
    }
  }
  out.location = {row, col};
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double mass = 0.0;
      for (int rr = std::max(r - 1, 0); rr <= std::min(r + 1, h - 1); ++rr)
        for (int cc = std::max(c - 1, 0); cc <= std::min(c + 1, w - 1); ++cc)
          mass += out.probabilities[static_cast<std::size_t>(rr) * w + cc];
      out.confidence = std::max(out.confidence, mass);
    }
  }
  return out;
}

Tensor soft_argmax_backward(const SoftArgmax& result, Point grad,
                            double temperature, int height, int width) {
  Tensor out(height, width, 1);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * width + c;
      out[i] = result.probabilities[i] / temperature *
               (grad.row * (r - result.location.row) +
                grad.col * (c - result.location.col));
    }
  }
  return out;
}

LandmarkExtractor::LandmarkExtractor(const ExtractorSpec& spec) : spec_(spec) {
  require_kind(spec, FeatureKind::kLandmarks);
  if (spec.landmarks < 1 || spec.landmarks > FaceLayout::kLandmarks) {
    throw ConfigError("landmark count must be in [1, 5]");
  }
  if (!(spec.softargmax_temperature > 0.0)) {
    throw ConfigError("soft-argmax temperature must be positive");
  }
  SplitMix64 rng(derive_seed(spec.seed, 11));
  smoothing_.resize(9);
  double sum = 0.0;
  for (int i = 0; i < 9; ++i) {
    // Centre-weighted positive kernel with a seeded perturbation.
    const int dr = i / 3 - 1, dc = i % 3 - 1;
    const double base = (dr == 0 && dc == 0) ? 4.0 : (dr == 0 || dc == 0) ? 2.0 : 1.0;
    smoothing_[i] = base * rng.uniform(0.8, 1.2);
    sum += smoothing_[i];
  }
  for (double& v : smoothing_) v /= sum;
}

std::shared_ptr<const LandmarkExtractor::Bank> LandmarkExtractor::bank_for(
    int height, int width) const {
  std::lock_guard lock(cache_mutex_);
  auto it = cache_.find({height, width});
  if (it != cache_.end()) return it->second;

  const int side = std::min(height, width);
  const SyntheticSample canonical = gen_face(0, side, FaceOptions{0.0});
  const Tensor lum = luminance(canonical.image);
  const int radius =
      std::max(2, static_cast<int>(std::lround(kTemplateRadius * side)));

  auto bank = std::make_shared<Bank>();
  bank->ksize = 2 * radius + 1;
  const std::vector<Point> canon_side = canonical.landmarks;
  const std::vector<Point> canon_full = [&] {
    std::vector<Point> pts;
    for (Point p : FaceLayout{}.landmarks(1)) {
      // Unit-layout coordinates rescaled per axis.
      const Point u{(p.row + 0.5), (p.col + 0.5)};
      pts.push_back({u.row * height - 0.5, u.col * width - 0.5});
    }
    return pts;
  }();
  const double sigma = kPriorSigma * side;
  for (int k = 0; k < spec_.landmarks; ++k) {
    const int cr = static_cast<int>(std::lround(canon_side[k].row));
    const int cc = static_cast<int>(std::lround(canon_side[k].col));
    std::vector<double> t(static_cast<std::size_t>(bank->ksize) * bank->ksize);
    for (int i = 0; i < bank->ksize; ++i) {
      for (int j = 0; j < bank->ksize; ++j) {
        const int rr = std::clamp(cr + i - radius, 0, side - 1);
        const int c2 = std::clamp(cc + j - radius, 0, side - 1);
        t[i * bank->ksize + j] = lum.at(rr, c2, 0);
      }
    }
    double mean = 0.0;
    for (double v : t) mean += v;
    mean /= static_cast<double>(t.size());
    double norm = 0.0;
    for (double& v : t) {
      v -= mean;
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : t) v /= norm;
    bank->templates.push_back(std::move(t));

    Tensor prior(height, width, 1);
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        const double dr = r - canon_full[k].row, dc = c - canon_full[k].col;
        prior.at(r, c, 0) = -spec_.softargmax_temperature * (dr * dr + dc * dc) /
                            (2.0 * sigma * sigma);
      }
    }
    bank->priors.push_back(std::move(prior));
  }
  cache_[{height, width}] = bank;
  return bank;
}

LandmarkExtractor::Responses LandmarkExtractor::responses(
    const Tensor& lum, const Bank& bank) const {
  const int n = bank.ksize * bank.ksize;
  const std::vector<double> box(static_cast<std::size_t>(n), 1.0);
  Tensor sq = lum;
  for (double& v : sq.values()) v *= v;
  Responses out;
  out.window_sum = correlate_replicate(lum, box, bank.ksize);
  const Tensor window_sq = correlate_replicate(sq, box, bank.ksize);
  // Contrast norm of each window with a floor so flat regions stay quiet.
  out.norm = Tensor(lum.shape());
  for (std::size_t i = 0; i < lum.size(); ++i) {
    const double s1 = out.window_sum[i];
    const double centred = std::max(window_sq[i] - s1 * s1 / n, 0.0);
    out.norm[i] = std::sqrt(centred + n * kContrastFloor * kContrastFloor);
  }
  for (const auto& t : bank.templates) {
    Tensor raw = correlate_replicate(lum, t, bank.ksize);
    Tensor ncc = raw;
    for (std::size_t i = 0; i < ncc.size(); ++i) ncc[i] /= out.norm[i];
    out.smoothed.push_back(correlate_replicate(ncc, smoothing_, 3));
    out.raw.push_back(std::move(raw));
  }
  return out;
}

std::vector<Tensor> LandmarkExtractor::heatmaps(const Image& img) const {
  if (img.height() < 32 || img.width() < 32) {
    throw SizeError("landmark extraction needs at least 32x32 pixels");
  }
  const auto bank = bank_for(img.height(), img.width());
  std::vector<Tensor> maps = responses(luminance(img), *bank).smoothed;
  for (std::size_t k = 0; k < maps.size(); ++k) {
    maps[k] *= kResponseGain;
    maps[k] += bank->priors[k];
  }
  return maps;
}

KnowledgeFeatures LandmarkExtractor::extract(const Image& img) const {
  KnowledgeFeatures f;
  f.kind = FeatureKind::kLandmarks;
  f.height = img.height();
  f.width = img.width();
  for (const Tensor& map : heatmaps(img)) {
    const SoftArgmax s = soft_argmax(map, spec_.softargmax_temperature);
    f.landmarks.push_back(s.location);
    f.confidences.push_back(s.confidence);
  }
  return f;
}

Tensor LandmarkExtractor::backward(const Image& img,
                                   const FeatureGradient& grad) const {
  if (grad.landmarks.size() != static_cast<std::size_t>(spec_.landmarks)) {
    throw DimensionError("landmark gradient has the wrong length");
  }
  const auto bank = bank_for(img.height(), img.width());
  const Tensor lum = luminance(img);
  const Responses resp = responses(lum, *bank);
  const int n = bank->ksize * bank->ksize;
  const std::vector<double> box(static_cast<std::size_t>(n), 1.0);
  Tensor grad_lum(lum.shape());
  // Accumulated over landmarks: per-window weights on L_j and on 1 from the
  // derivative of the contrast norm.
  Tensor norm_coef(lum.shape()), norm_mean_coef(lum.shape());
  for (int k = 0; k < spec_.landmarks; ++k) {
    const Point g = grad.landmarks[k];
    if (g.row == 0.0 && g.col == 0.0) continue;
    Tensor heat = resp.smoothed[k] * kResponseGain;
    heat += bank->priors[k];
    const SoftArgmax s = soft_argmax(heat, spec_.softargmax_temperature);
    Tensor gh = soft_argmax_backward(s, g, spec_.softargmax_temperature,
                                     img.height(), img.width());
    gh *= kResponseGain;
    const Tensor g_ncc = correlate_replicate_adjoint(gh, smoothing_, 3);
    Tensor g_raw = g_ncc;
    for (std::size_t i = 0; i < g_raw.size(); ++i) {
      const double norm = resp.norm[i];
      g_raw[i] = g_ncc[i] / norm;
      // d(raw / norm) / d norm, and d norm / d L_j = (L_j - mean) / norm.
      const double c = -g_ncc[i] * resp.raw[k][i] / (norm * norm * norm);
      norm_coef[i] += c;
      norm_mean_coef[i] += c * resp.window_sum[i] / n;
    }
    grad_lum += correlate_replicate_adjoint(g_raw, bank->templates[k], bank->ksize);
  }
  const Tensor spread = correlate_replicate_adjoint(norm_coef, box, bank->ksize);
  const Tensor spread_mean =
      correlate_replicate_adjoint(norm_mean_coef, box, bank->ksize);
  for (std::size_t i = 0; i < grad_lum.size(); ++i) {
    grad_lum[i] += lum[i] * spread[i] - spread_mean[i];
  }
  return luminance_backward(grad_lum, img.channels());
}

ExtractorSpec ContentExtractor::content_spec() {
  ExtractorSpec spec;
  spec.kind = FeatureKind::kContent;
  spec.seed = 0x434F4E54ULL;
  return spec;
}

ContentExtractor::ContentExtractor(const ExtractorSpec& spec) {
  require_kind(spec, FeatureKind::kContent);
  pyramid_ = ConvPyramid::seeded(spec.seed);
}

ContentExtractor::ContentExtractor(ConvPyramid pyramid)
    : pyramid_(std::move(pyramid)) {}

KnowledgeFeatures ContentExtractor::extract(const Image& img) const {
  const auto acts = pyramid_.forward(to_rgb(img).tensor());
  KnowledgeFeatures f;
  f.kind = FeatureKind::kContent;
  f.height = img.height();
  f.width = img.width();
  for (int k = 1; k < ConvPyramid::kStages; ++k) {
    const auto v = acts.features[k].values();
    f.content.insert(f.content.end(), v.begin(), v.end());
  }
  return f;
}

Tensor ContentExtractor::backward(const Image& img,
                                  const FeatureGradient& grad) const {
  const auto acts = pyramid_.forward(to_rgb(img).tensor());
  std::vector<Tensor> grads(ConvPyramid::kStages);
  std::size_t offset = 0;
  for (int k = 1; k < ConvPyramid::kStages; ++k) {
    grads[k] = Tensor(acts.features[k].shape());
    if (offset + grads[k].size() > grad.content.size()) {
      throw DimensionError("content gradient has the wrong length");
    }
    std::copy_n(grad.content.begin() + static_cast<std::ptrdiff_t>(offset),
                grads[k].size(), grads[k].values().begin());
    offset += grads[k].size();
  }
  if (offset != grad.content.size()) {
    throw DimensionError("content gradient has the wrong length");
  }
  return rgb_backward(pyramid_.backward(acts, grads), img.channels());
}

std::unique_ptr<KnowledgeExtractor> make_extractor(const ExtractorSpec& spec) {
  if (spec.kind == FeatureKind::kLandmarks) {
    return std::make_unique<LandmarkExtractor>(spec);
  }
  return std::make_unique<ContentExtractor>(spec);
}

KnowledgeFeatures extract_landmarks(const Image& img, const ExtractorSpec& spec) {
  require_kind(spec, FeatureKind::kLandmarks);
  return LandmarkExtractor(spec).extract(img);
}

KnowledgeFeatures extract_content(const Image& img, const ExtractorSpec& spec) {
  require_kind(spec, FeatureKind::kContent);
  return ContentExtractor(spec).extract(img);
}

namespace {

void require_comparable(const KnowledgeFeatures& a, const KnowledgeFeatures& b) {
  if (a.kind != b.kind) throw ConfigError("feature kinds differ");
  if (a.landmarks.size() != b.landmarks.size() ||
      a.content.size() != b.content.size() || a.height != b.height ||
      a.width != b.width) {
    throw DimensionError("feature dimensions differ");
  }
  if (a.kind == FeatureKind::kContent && a.content.empty()) {
    throw DimensionError("empty content features");
  }
  if (a.kind == FeatureKind::kLandmarks && a.landmarks.empty()) {
    throw DimensionError("empty landmark features");
  }
}

}  // namespace

double domain_distance(const KnowledgeFeatures& a, const KnowledgeFeatures& b) {
  require_comparable(a, b);
  double acc = 0.0;
  if (a.kind == FeatureKind::kLandmarks) {
    const double diag = a.diagonal();
    for (std::size_t k = 0; k < a.landmarks.size(); ++k) {
      const double dr = (a.landmarks[k].row - b.landmarks[k].row) / diag;
      const double dc = (a.landmarks[k].col - b.landmarks[k].col) / diag;
      acc += dr * dr + dc * dc;
    }
    return acc / (2.0 * static_cast<double>(a.landmarks.size()));
  }
  for (std::size_t i = 0; i < a.content.size(); ++i) {
    const double d = a.content[i] - b.content[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.content.size());
}

FeatureGradient domain_distance_feature_gradient(const KnowledgeFeatures& a,
                                                 const KnowledgeFeatures& b) {
  require_comparable(a, b);
  FeatureGradient g;
  if (a.kind == FeatureKind::kLandmarks) {
    const double diag = a.diagonal();
    const double scale =
        1.0 / (static_cast<double>(a.landmarks.size()) * diag * diag);
    for (std::size_t k = 0; k < a.landmarks.size(); ++k) {
      g.landmarks.push_back({scale * (b.landmarks[k].row - a.landmarks[k].row),
                             scale * (b.landmarks[k].col - a.landmarks[k].col)});
    }
    return g;
  }
  const double scale = 2.0 / static_cast<double>(a.content.size());
  g.content.resize(a.content.size());
  for (std::size_t i = 0; i < a.content.size(); ++i) {
    g.content[i] = scale * (b.content[i] - a.content[i]);
  }
  return g;
}

Tensor domain_distance_gradient(const KnowledgeFeatures& a,
                                const KnowledgeFeatures& b,
                                const KnowledgeExtractor& extractor,
                                const Image& img_b) {
  if (!extractor.differentiable()) {
    throw ContractError("feature source does not provide gradients");
  }
  if (extractor.kind() != b.kind) {
    throw ConfigError("extractor kind does not match the features");
  }
  return extractor.backward(img_b, domain_distance_feature_gradient(a, b));
}

}  // namespace kgad
