#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "kgad/image.hpp"
#include "kgad/pyramid.hpp"
#include "kgad/synthetic.hpp"

namespace kgad {

enum class FeatureKind { kLandmarks, kContent };

// Output of a domain-knowledge extractor: keypoints (with confidences) for
// faces, or a flat activation vector for scenes.
struct KnowledgeFeatures {
  FeatureKind kind = FeatureKind::kLandmarks;
  int height = 0;
  int width = 0;
  std::vector<Point> landmarks;
  std::vector<double> confidences;
  std::vector<double> content;

  double diagonal() const;
  bool operator==(const KnowledgeFeatures&) const = default;
};

// Gradient of a scalar with respect to the entries of KnowledgeFeatures.
struct FeatureGradient {
  std::vector<Point> landmarks;
  std::vector<double> content;
};

struct ExtractorSpec {
  FeatureKind kind = FeatureKind::kLandmarks;
  int landmarks = FaceLayout::kLandmarks;
  std::uint64_t seed = 0x4B4E4F57ULL;
  double softargmax_temperature = 0.05;
};

class KnowledgeExtractor {
 public:
  virtual ~KnowledgeExtractor() = default;
  virtual FeatureKind kind() const = 0;
  virtual KnowledgeFeatures extract(const Image& img) const = 0;
  // Vector-Jacobian product: d<grad, extract(img)> / d img.
  virtual Tensor backward(const Image& img, const FeatureGradient& grad) const = 0;
  virtual bool differentiable() const { return true; }
};

struct SoftArgmax {
  Point location;
  double confidence = 0.0;
  std::vector<double> probabilities;  // row-major over the heatmap
};

// Softmax of heatmap / temperature over all pixels. The location is the
// expected pixel position; the confidence is the largest probability mass
// held by any 3x3 neighbourhood, so a peak that falls between pixels still
// scores as one confident detection.
SoftArgmax soft_argmax(const Tensor& heatmap, double temperature);
// Heatmap gradient for an upstream gradient on the soft-argmax location.
Tensor soft_argmax_backward(const SoftArgmax& result, Point grad,
                            double temperature, int height, int width);

// Matched-filter landmark head. Stage one takes the normalized correlation
// of luminance with zero-mean part templates cut from the canonical synthetic face; stage two
// smooths each response with a seeded positive 3x3 kernel and adds a
// quadratic location prior around the canonical part position. Coordinates
// are the soft-argmax of each heatmap.
class LandmarkExtractor final : public KnowledgeExtractor {
 public:
  static constexpr double kResponseGain = 5.0;
  static constexpr double kPriorSigma = 0.08;    // in units of image side
  static constexpr double kContrastFloor = 0.02;
  static constexpr double kTemplateRadius = 0.07;

  explicit LandmarkExtractor(const ExtractorSpec& spec = {});

  FeatureKind kind() const override { return FeatureKind::kLandmarks; }
  KnowledgeFeatures extract(const Image& img) const override;
  Tensor backward(const Image& img, const FeatureGradient& grad) const override;

  // Per-landmark heatmaps fed to the soft-argmax.
  std::vector<Tensor> heatmaps(const Image& img) const;

 private:
  struct Bank {
    int ksize = 0;
    std::vector<std::vector<double>> templates;
    std::vector<Tensor> priors;
  };
  std::shared_ptr<const Bank> bank_for(int height, int width) const;
  struct Responses {
    Tensor window_sum;              // box sum of luminance per window
    Tensor norm;                    // floored contrast norm per window
    std::vector<Tensor> raw;        // template correlation per landmark
    std::vector<Tensor> smoothed;   // smoothed normalized correlation
  };
  Responses responses(const Tensor& lum, const Bank& bank) const;

  ExtractorSpec spec_;
  std::vector<double> smoothing_;  // 3x3, positive, sums to 1
  mutable std::mutex cache_mutex_;
  mutable std::map<std::pair<int, int>, std::shared_ptr<const Bank>> cache_;
};

// Content semantics: stage-2 and stage-3 activations of a frozen pyramid,
// concatenated.
class ContentExtractor final : public KnowledgeExtractor {
 public:
  explicit ContentExtractor(const ExtractorSpec& spec = content_spec());
  explicit ContentExtractor(ConvPyramid pyramid);

  static ExtractorSpec content_spec();

  FeatureKind kind() const override { return FeatureKind::kContent; }
  KnowledgeFeatures extract(const Image& img) const override;
  Tensor backward(const Image& img, const FeatureGradient& grad) const override;
  const ConvPyramid& pyramid() const { return pyramid_; }

 private:
  ConvPyramid pyramid_;
};

std::unique_ptr<KnowledgeExtractor> make_extractor(const ExtractorSpec& spec);

KnowledgeFeatures extract_landmarks(const Image& img, const ExtractorSpec& spec);
KnowledgeFeatures extract_content(const Image& img, const ExtractorSpec& spec);

// Mean squared difference: landmark coordinates divided by the image
// diagonal, or raw content activations.
double domain_distance(const KnowledgeFeatures& a, const KnowledgeFeatures& b);
// d domain_distance(a, b) / d b.
FeatureGradient domain_distance_feature_gradient(const KnowledgeFeatures& a,
                                                 const KnowledgeFeatures& b);
// d domain_distance(a, extractor(img_b)) / d img_b.
Tensor domain_distance_gradient(const KnowledgeFeatures& a,
                                const KnowledgeFeatures& b,
                                const KnowledgeExtractor& extractor,
                                const Image& img_b);

}  // namespace kgad
