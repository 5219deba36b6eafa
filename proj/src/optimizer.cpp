#include "kgad/optimizer.hpp"

#include <cmath>

#include "kgad/errors.hpp"
#include "kgad/fsim.hpp"
#include "kgad/perceptual.hpp"
#include "kgad/rng.hpp"
#include "kgad/ssim.hpp"

namespace kgad {

NoiseBudget NoiseBudget::face() { return from_levels(7, 1, 60); }

NoiseBudget NoiseBudget::style() { return from_levels(12, 1, 60); }

NoiseBudget NoiseBudget::from_levels(int epsilon_steps, int alpha_steps, int steps) {
  NoiseBudget b;
  b.epsilon = Level255(epsilon_steps).value();
  b.alpha = Level255(alpha_steps).value();
  b.steps = steps;
  return b;
}

void NoiseBudget::validate() const {
  if (!std::isfinite(epsilon) || !std::isfinite(alpha)) {
    throw ConfigError("budget values must be finite");
  }
  if (epsilon < 0.0 || alpha < 0.0 || alpha > epsilon) {
    throw ConfigError("budget requires 0 <= alpha <= epsilon");
  }
  if (steps < 0) throw ConfigError("budget requires steps >= 0");
}

LossConfig LossConfig::face() { return {}; }

LossConfig LossConfig::style() {
  LossConfig cfg;
  cfg.lambda = 6e-2;
  cfg.extractor = ContentExtractor::content_spec();
  return cfg;
}

void LossConfig::validate() const {
  if (!std::isfinite(lambda) || lambda < 0.0) {
    throw ConfigError("lambda must be finite and non-negative");
  }
}

Losses compute_losses(const Image& y, const Image& y_prot, const LossConfig& cfg,
                      const KnowledgeExtractor& extractor) {
  require_same_shape(y.shape(), y_prot.shape(), "compute_losses");
  Losses l;
  l.perception = -ssimd(y, y_prot).value;
  l.domain = -domain_distance(extractor.extract(y), extractor.extract(y_prot));
  l.total = (cfg.use_perception ? l.perception : 0.0) + cfg.lambda * l.domain;
  if (!std::isfinite(l.total)) throw NumericalError("loss is not finite", -1);
  return l;
}

Losses compute_losses(const Image& y, const Image& y_prot, const LossConfig& cfg) {
  return compute_losses(y, y_prot, cfg, *make_extractor(cfg.extractor));
}

// ---------------------------------------------------------------------------

KgadObjective::KgadObjective(Image x,
                             std::vector<std::shared_ptr<const ManipulationModel>> models,
                             LossConfig cfg)
    : x_(std::move(x)), models_(std::move(models)), cfg_(std::move(cfg)),
      extractor_(make_extractor(cfg_.extractor)) {
  cfg_.validate();
  if (models_.empty()) throw ConfigError("objective needs at least one model");
  for (const auto& m : models_) {
    fakes_.push_back(m->forward(x_));
    fake_features_.push_back(extractor_->extract(fakes_.back()));
  }
}

NoiseObjective::Evaluation KgadObjective::evaluate(const Tensor& noise,
                                                   bool with_gradient) const {
  const Image xp = apply_noise(x_, noise);
  const double share = 1.0 / static_cast<double>(models_.size());
  Evaluation ev;
  if (with_gradient) ev.gradient = Tensor(noise.shape());
  for (std::size_t i = 0; i < models_.size(); ++i) {
    const Image yp = models_[i]->forward(xp);
    const KnowledgeFeatures fp = extractor_->extract(yp);
    const double pk = -ssimd(fakes_[i], yp).value;
    const double dk = -domain_distance(fake_features_[i], fp);
    ev.losses.perception += share * pk;
    ev.losses.domain += share * dk;
    if (!with_gradient) continue;

    Tensor upstream(yp.shape());
    if (cfg_.use_perception) upstream -= ssimd_gradient(fakes_[i], yp);
    if (cfg_.lambda != 0.0) {
      Tensor g = domain_distance_gradient(fake_features_[i], fp, *extractor_, yp);
      g *= -cfg_.lambda;
      upstream += g;
    }
    upstream *= share;
    ev.gradient += models_[i]->input_gradient(xp, upstream);
  }
  ev.losses.total = (cfg_.use_perception ? ev.losses.perception : 0.0) +
                    cfg_.lambda * ev.losses.domain;
  return ev;
}

MseObjective::MseObjective(Image x, std::shared_ptr<const ManipulationModel> model)
    : x_(std::move(x)), model_(std::move(model)), fake_(model_->forward(x_)) {}

NoiseObjective::Evaluation MseObjective::evaluate(const Tensor& noise,
                                                  bool with_gradient) const {
  const Image xp = apply_noise(x_, noise);
  const Image yp = model_->forward(xp);
  Evaluation ev;
  ev.losses.total = -mse(fake_, yp).value;
  if (with_gradient) {
    // d(-mean((y' - y)^2)) / dy' = -2 (y' - y) / n
    Tensor upstream = yp.tensor() - fake_.tensor();
    upstream *= -2.0 / static_cast<double>(yp.size());
    ev.gradient = model_->input_gradient(xp, upstream);
  }
  return ev;
}

// ---------------------------------------------------------------------------

Tensor initial_noise(const Image& anchor, const NoiseBudget& budget) {
  Tensor noise(anchor.shape());
  if (budget.init == NoiseInit::kUniform) {
    SplitMix64 rng(derive_seed(budget.seed, 0x494E4954));
    for (double& v : noise.values()) v = rng.uniform(-budget.epsilon, budget.epsilon);
  }
  return linf_project(noise, budget.epsilon, anchor);
}

Tensor pgd_step(const Tensor& noise, const Tensor& gradient, double alpha,
                double epsilon, const Image& anchor) {
  require_same_shape(noise.shape(), gradient.shape(), "pgd_step");
  Tensor next = noise;
  for (std::size_t i = 0; i < next.size(); ++i) {
    const double g = gradient[i];
    if (g > 0.0) next[i] -= alpha;
    else if (g < 0.0) next[i] += alpha;
  }
  return linf_project(next, epsilon, anchor);
}

Tensor run_pgd(const NoiseObjective& objective, const NoiseBudget& budget,
               std::vector<Losses>* trace) {
  budget.validate();
  const Image& x = objective.anchor();
  Tensor noise = initial_noise(x, budget);
  if (trace) trace->clear();
  for (int t = 0; t < budget.steps; ++t) {
    const auto ev = objective.evaluate(noise, true);
    if (!ev.gradient.all_finite() || !std::isfinite(ev.losses.total)) {
      throw NumericalError("non-finite gradient at iteration " + std::to_string(t), t);
    }
    if (trace) trace->push_back(ev.losses);
    noise = pgd_step(noise, ev.gradient, budget.alpha, budget.epsilon, x);
  }
  return noise;
}

std::vector<MetricValue> pair_metrics(const Image& y, const Image& y_prot) {
  return {ssimd(y, y_prot), fsimd(y, y_prot), perceptual_distance(y, y_prot),
          mse(y, y_prot)};
}

namespace {

ProtectionResult finish(const NoiseObjective& objective, const NoiseBudget& budget,
                        const ManipulationModel& model, const Image& fake_clean) {
  ProtectionResult r;
  r.noise = run_pgd(objective, budget, &r.trace);
  r.initial = r.trace.empty()
                  ? objective.evaluate(r.noise, false).losses
                  : r.trace.front();
  r.final = objective.evaluate(r.noise, false).losses;
  r.protected_image = apply_noise(objective.anchor(), r.noise);
  r.fake_clean = fake_clean;
  r.fake_protected = model.forward(r.protected_image);
  r.metrics = pair_metrics(r.fake_clean, r.fake_protected);
  return r;
}

}  // namespace

ProtectionResult protect(const Image& x, std::shared_ptr<const ManipulationModel> model,
                         const NoiseBudget& budget, const LossConfig& cfg) {
  return protect_joint(x, {std::move(model)}, budget, cfg);
}

ProtectionResult protect_joint(
    const Image& x, const std::vector<std::shared_ptr<const ManipulationModel>>& models,
    const NoiseBudget& budget, const LossConfig& cfg) {
  const KgadObjective objective(x, models, cfg);
  return finish(objective, budget, *models.front(), objective.fake_clean());
}

ProtectionResult protect_itd(const Image& x,
                             std::shared_ptr<const ManipulationModel> model,
                             const NoiseBudget& budget) {
  const MseObjective objective(x, model);
  return finish(objective, budget, *model, model->forward(x));
}

ProtectionResult protect_fgsm(const Image& x,
                              std::shared_ptr<const ManipulationModel> model,
                              const NoiseBudget& budget, const LossConfig& cfg) {
  NoiseBudget single = budget;
  single.steps = 1;
  single.alpha = budget.epsilon;
  single.init = NoiseInit::kZeros;
  return protect(x, std::move(model), single, cfg);
}

}  // namespace kgad
