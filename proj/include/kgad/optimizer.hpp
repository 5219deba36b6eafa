#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "kgad/image.hpp"
#include "kgad/knowledge.hpp"
#include "kgad/metric_value.hpp"
#include "kgad/models.hpp"

namespace kgad {

enum class NoiseInit { kZeros, kUniform };

// L-infinity budget and PGD schedule. `epsilon` and `alpha` are absolute
// intensities; the helpers take counts of 1/255 steps.
struct NoiseBudget {
  double epsilon = 7.0 / 255.0;
  double alpha = 1.0 / 255.0;
  int steps = 60;
  NoiseInit init = NoiseInit::kUniform;
  std::uint64_t seed = 0;

  static NoiseBudget face();
  static NoiseBudget style();
  static NoiseBudget from_levels(int epsilon_steps, int alpha_steps, int steps);
  // Throws ConfigError unless 0 <= alpha <= epsilon, steps >= 0, all finite.
  void validate() const;
};

struct LossConfig {
  double lambda = 1.0;
  // When false the perception term is dropped and L = lambda * L_dk.
  bool use_perception = true;
  ExtractorSpec extractor;

  static LossConfig face();
  static LossConfig style();
  void validate() const;
};

struct Losses {
  double perception = 0.0;  // -ssimd(y, y')
  double domain = 0.0;      // -domain_distance(K(y), K(y'))
  double total = 0.0;
};

struct ProtectionResult {
  Tensor noise;
  Image protected_image;
  Image fake_clean;
  Image fake_protected;
  std::vector<Losses> trace;  // losses at the iterate entering each step
  Losses initial;             // losses at the initialized noise
  Losses final;               // losses at the returned noise
  std::vector<MetricValue> metrics;
};

// Loss of a fake pair under `cfg`. Builds the extractor on every call; the
// overload taking an extractor avoids that.
Losses compute_losses(const Image& y, const Image& y_prot, const LossConfig& cfg);
Losses compute_losses(const Image& y, const Image& y_prot, const LossConfig& cfg,
                      const KnowledgeExtractor& extractor);

// A scalar objective of the noise for one image, with its gradient.
class NoiseObjective {
 public:
  struct Evaluation {
    Losses losses;
    Tensor gradient;  // d losses.total / d noise
  };
  virtual ~NoiseObjective() = default;
  virtual const Image& anchor() const = 0;
  virtual Evaluation evaluate(const Tensor& noise, bool with_gradient) const = 0;
};

// L_pk + lambda L_dk for one or several models (averaged).
class KgadObjective final : public NoiseObjective {
 public:
  KgadObjective(Image x, std::vector<std::shared_ptr<const ManipulationModel>> models,
                LossConfig cfg);
  const Image& anchor() const override { return x_; }
  Evaluation evaluate(const Tensor& noise, bool with_gradient) const override;
  const Image& fake_clean(std::size_t i = 0) const { return fakes_[i]; }

 private:
  Image x_;
  std::vector<std::shared_ptr<const ManipulationModel>> models_;
  LossConfig cfg_;
  std::unique_ptr<KnowledgeExtractor> extractor_;
  std::vector<Image> fakes_;
  std::vector<KnowledgeFeatures> fake_features_;
};

// -mse(y, y'): the pixel-distance baseline.
class MseObjective final : public NoiseObjective {
 public:
  MseObjective(Image x, std::shared_ptr<const ManipulationModel> model);
  const Image& anchor() const override { return x_; }
  Evaluation evaluate(const Tensor& noise, bool with_gradient) const override;

 private:
  Image x_;
  std::shared_ptr<const ManipulationModel> model_;
  Image fake_;
};

// Initial noise for `budget`, already projected against `anchor`.
Tensor initial_noise(const Image& anchor, const NoiseBudget& budget);
// One signed step: project(noise - alpha * sign(gradient)).
Tensor pgd_step(const Tensor& noise, const Tensor& gradient, double alpha,
                double epsilon, const Image& anchor);
// Runs the projected sign-gradient loop. Throws NumericalError carrying the
// iteration index when a gradient is not finite.
Tensor run_pgd(const NoiseObjective& objective, const NoiseBudget& budget,
               std::vector<Losses>* trace = nullptr);

ProtectionResult protect(const Image& x, std::shared_ptr<const ManipulationModel> model,
                         const NoiseBudget& budget, const LossConfig& cfg);
ProtectionResult protect_itd(const Image& x,
                             std::shared_ptr<const ManipulationModel> model,
                             const NoiseBudget& budget);
// protect with steps = 1, alpha = epsilon, zero init.
ProtectionResult protect_fgsm(const Image& x,
                              std::shared_ptr<const ManipulationModel> model,
                              const NoiseBudget& budget, const LossConfig& cfg);
// One noise against several edits, minimizing their mean loss. The fake
// fields of the result refer to the first model.
ProtectionResult protect_joint(
    const Image& x, const std::vector<std::shared_ptr<const ManipulationModel>>& models,
    const NoiseBudget& budget, const LossConfig& cfg);

// ssimd, fsimd, lpips_proxy and mse of (y, y').
std::vector<MetricValue> pair_metrics(const Image& y, const Image& y_prot);

}  // namespace kgad
