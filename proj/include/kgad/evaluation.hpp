#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kgad/image.hpp"
#include "kgad/knowledge.hpp"
#include "kgad/models.hpp"
#include "kgad/optimizer.hpp"
#include "kgad/synthetic.hpp"

namespace kgad {

struct CannyConfig {
  double sigma = 1.4;
  double low_ratio = 0.1;   // of the largest suppressed gradient
  double high_ratio = 0.3;
  // Gradient magnitudes at or below this are rounding noise on flat regions.
  double min_gradient = 1e-9;
};

// Binary edge map (H x W x 1, values 0 or 1) of the luminance of `img`:
// Gaussian smoothing, Sobel gradients, non-maximum suppression and
// double-threshold hysteresis with 8-connectivity.
Tensor canny_edges(const Image& img, const CannyConfig& cfg = {});
// L2 norm of the edge-map difference divided by sqrt(pixel count).
double contour_l2(const Image& a, const Image& b, const CannyConfig& cfg = {});

struct DetectionConfig {
  double min_confidence = 0.5;
  double max_shift = 0.1;  // fraction of the image diagonal
};

// True when every landmark of `candidate` is confident and lies near the
// matching landmark of `reference`.
bool is_detected(const KnowledgeFeatures& reference,
                 const KnowledgeFeatures& candidate,
                 const DetectionConfig& cfg = {});

struct EvalRecord {
  std::string sample_id;
  std::string model;
  double ssimd = 0.0;
  double fsimd = 0.0;
  double lpips_proxy = 0.0;
  double mse = 0.0;
  double l2_con = 0.0;
  bool detected = false;
  double keypoint_displacement = 0.0;  // mean landmark shift / diagonal

  bool operator==(const EvalRecord&) const = default;
};

// Compares a clean fake with a protected fake. Landmark fields are filled
// only for the face domain.
EvalRecord evaluate_pair(const std::string& sample_id, const std::string& model,
                         const Image& fake_clean, const Image& fake_protected,
                         SampleKind domain);

// Success thresholds for the three face edit models on the scale of a
// pretrained LPIPS network. The frozen proxy reads far lower (about 0.005 to
// 0.02 on protected face fakes), so run defaults use the proxy-scale values.
inline constexpr std::array<double, 3> kLpipsFaceThresholds{0.7, 0.5, 0.5};
inline constexpr double kProxyFaceThreshold = 0.008;
inline constexpr double kProxyStyleThreshold = 0.1;

// Fraction of records with lpips_proxy >= threshold.
double success_rate(const std::vector<EvalRecord>& records, double threshold);
// Fraction of records whose protected fake is NOT detected.
double blocking_rate(const std::vector<EvalRecord>& records);

enum class Protocol { kDistortion, kUniversality, kTransferability, kAblation };
enum class Defense { kKgad, kItd, kFgsm };

std::string to_string(Protocol p);
std::string to_string(Defense d);
Protocol parse_protocol(const std::string& s);
Defense parse_defense(const std::string& s);

struct Aggregates {
  double ssimd = 0.0;
  double fsimd = 0.0;
  double lpips_proxy = 0.0;
  double mse = 0.0;
  double l2_con = 0.0;
  double keypoint_displacement = 0.0;

  bool operator==(const Aggregates&) const = default;
};

struct SampleFailure {
  std::string sample_id;
  std::string message;
  bool operator==(const SampleFailure&) const = default;
};

struct ProtocolReport {
  Protocol protocol = Protocol::kDistortion;
  std::string defense;  // kgad, itd, fgsm, or an ablation variant label
  std::string model;
  SampleKind domain = SampleKind::kFace;
  double threshold = 0.0;
  std::vector<EvalRecord> records;
  Aggregates aggregates;
  double success_rate = 0.0;
  std::optional<double> blocking_rate;  // face domain only
  std::vector<SampleFailure> failures;

  bool operator==(const ProtocolReport&) const = default;
};

// Arithmetic means of the record fields; ProtocolError when empty.
Aggregates aggregate(const std::vector<EvalRecord>& records);

struct EvalSettings {
  NoiseBudget budget = NoiseBudget::face();
  LossConfig loss = LossConfig::face();
  double threshold = kProxyFaceThreshold;
  std::uint64_t seed = 0;
  int workers = 1;
  // Called from worker threads with each finished protection.
  std::function<void(std::size_t, const ProtectionResult&)> on_result;
};

// Budget seeded for one sample; depends only on (settings.seed, sample id).
NoiseBudget sample_budget(const EvalSettings& settings, const std::string& sample_id);

ProtectionResult run_defense(Defense defense, const Image& x,
                             std::shared_ptr<const ManipulationModel> model,
                             const NoiseBudget& budget, const LossConfig& cfg);

ProtocolReport run_distortion_eval(const std::vector<SyntheticSample>& samples,
                                   std::shared_ptr<const ManipulationModel> model,
                                   Defense defense, const EvalSettings& settings);
// Noise from samples[0] applied, re-projected, to every other sample.
ProtocolReport run_universality_eval(const std::vector<SyntheticSample>& samples,
                                     std::shared_ptr<const ManipulationModel> model,
                                     Defense defense, const EvalSettings& settings);
// One report per target model.
std::vector<ProtocolReport> run_transferability_eval(
    const std::vector<SyntheticSample>& samples,
    std::shared_ptr<const ManipulationModel> source,
    const std::vector<std::shared_ptr<const ManipulationModel>>& targets,
    Defense defense, const EvalSettings& settings);
// Reports for kgad, kgad-no-dk (lambda = 0) and kgad-no-pk (perception dropped).
std::vector<ProtocolReport> run_ablation_eval(
    const std::vector<SyntheticSample>& samples,
    std::shared_ptr<const ManipulationModel> model, const EvalSettings& settings);

inline const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> v{"kgad", "kgad-no-dk", "kgad-no-pk"};
  return v;
}
LossConfig ablation_loss(const std::string& variant, const LossConfig& base);

nlohmann::json report_to_json(const ProtocolReport& report);
ProtocolReport report_from_json(const nlohmann::json& j);
// Header plus one row per report: Defense,SSIMD,FSIMD,LPIPS,L2_con,SR,BR.
std::string reports_to_csv(const std::vector<ProtocolReport>& reports);

// Runs fn(i) for i in [0, n) on up to `workers` threads. Exceptions are
// rethrown after all workers finish (the lowest index wins).
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace kgad
