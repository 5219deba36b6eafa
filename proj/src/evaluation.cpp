#include "kgad/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <deque>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "kgad/conv.hpp"
#include "kgad/errors.hpp"
#include "kgad/fsim.hpp"
#include "kgad/perceptual.hpp"
#include "kgad/rng.hpp"
#include "kgad/ssim.hpp"

namespace kgad {
namespace {

std::vector<double> gaussian_taps(double sigma, int radius) {
  std::vector<double> taps(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    taps[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += taps[i + radius];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

std::vector<double> outer(const std::vector<double>& row, const std::vector<double>& col) {
  std::vector<double> k;
  k.reserve(row.size() * col.size());
  for (double r : row)
    for (double c : col) k.push_back(r * c);
  return k;
}

const LandmarkExtractor& landmark_extractor() {
  static const LandmarkExtractor extractor;
  return extractor;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  return h;
}

SampleKind domain_of(const std::vector<SyntheticSample>& samples) {
  if (samples.empty()) throw ProtocolError("dataset is empty");
  const SampleKind kind = samples.front().kind;
  for (const auto& s : samples) {
    if (s.kind != kind) throw ProtocolError("dataset mixes face and scene samples");
  }
  return kind;
}

ProtocolReport assemble(Protocol protocol, std::string defense, std::string model,
                        SampleKind domain, double threshold,
                        std::vector<std::optional<EvalRecord>> records,
                        std::vector<std::optional<SampleFailure>> failures) {
  ProtocolReport report;
  report.protocol = protocol;
  report.defense = std::move(defense);
  report.model = std::move(model);
  report.domain = domain;
  report.threshold = threshold;
  for (auto& r : records)
    if (r) report.records.push_back(std::move(*r));
  for (auto& f : failures)
    if (f) report.failures.push_back(std::move(*f));
  if (!report.records.empty()) {
    report.aggregates = aggregate(report.records);
    report.success_rate = success_rate(report.records, threshold);
    if (domain == SampleKind::kFace) report.blocking_rate = blocking_rate(report.records);
  }
  return report;
}

// Runs one job per sample, keeping records and failures in sample order.
ProtocolReport per_sample(
    Protocol protocol, const std::string& defense, const std::string& model,
    const std::vector<SyntheticSample>& samples, std::size_t first,
    const EvalSettings& settings,
    const std::function<EvalRecord(std::size_t)>& job) {
  const SampleKind domain = domain_of(samples);
  std::vector<std::optional<EvalRecord>> records(samples.size());
  std::vector<std::optional<SampleFailure>> failures(samples.size());
  parallel_for(samples.size() - first, settings.workers, [&](std::size_t k) {
    const std::size_t i = first + k;
    try {
      records[i] = job(i);
    } catch (const std::exception& e) {
      failures[i] = SampleFailure{samples[i].id, e.what()};
    }
  });
  return assemble(protocol, defense, model, domain, settings.threshold,
                  std::move(records), std::move(failures));
}

}  // namespace

// ---------------------------------------------------------------------------

Tensor canny_edges(const Image& img, const CannyConfig& cfg) {
  const Tensor lum = luminance(img);
  const int h = lum.height(), w = lum.width();
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * cfg.sigma)));
  const auto taps = gaussian_taps(cfg.sigma, radius);
  const Tensor smooth = correlate_replicate(lum, outer(taps, taps), 2 * radius + 1);

  const std::vector<double> sobel_x{-1, 0, 1, -2, 0, 2, -1, 0, 1};
  const std::vector<double> sobel_y{-1, -2, -1, 0, 0, 0, 1, 2, 1};
  const Tensor gx = correlate_replicate(smooth, sobel_x, 3);
  const Tensor gy = correlate_replicate(smooth, sobel_y, 3);
  Tensor mag(h, w, 1);
  for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::hypot(gx[i], gy[i]);

  auto at = [&](int r, int c) {
    return (r < 0 || r >= h || c < 0 || c >= w) ? 0.0 : mag.at(r, c, 0);
  };
  Tensor thin(h, w, 1);
  double peak = 0.0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double m = mag.at(r, c, 0);
      if (m <= cfg.min_gradient) continue;
      double angle = std::atan2(gy.at(r, c, 0), gx.at(r, c, 0)) * 180.0 / M_PI;
      if (angle < 0.0) angle += 180.0;
      int dr = 0, dc = 1;  // gradient along columns
      if (angle >= 22.5 && angle < 67.5) {
        dr = 1, dc = 1;
      } else if (angle >= 67.5 && angle < 112.5) {
        dr = 1, dc = 0;
      } else if (angle >= 112.5 && angle < 157.5) {
        dr = 1, dc = -1;
      }
      if (m >= at(r + dr, c + dc) && m >= at(r - dr, c - dc)) {
        thin.at(r, c, 0) = m;
        peak = std::max(peak, m);
      }
    }
  }

  Tensor edges(h, w, 1);
  if (peak == 0.0) return edges;
  const double high = cfg.high_ratio * peak, low = cfg.low_ratio * peak;
  std::deque<std::pair<int, int>> frontier;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (thin.at(r, c, 0) >= high) {
        edges.at(r, c, 0) = 1.0;
        frontier.emplace_back(r, c);
      }
    }
  }
  while (!frontier.empty()) {
    const auto [r, c] = frontier.front();
    frontier.pop_front();
    for (int rr = std::max(r - 1, 0); rr <= std::min(r + 1, h - 1); ++rr) {
      for (int cc = std::max(c - 1, 0); cc <= std::min(c + 1, w - 1); ++cc) {
        if (edges.at(rr, cc, 0) == 0.0 && thin.at(rr, cc, 0) >= low) {
          edges.at(rr, cc, 0) = 1.0;
          frontier.emplace_back(rr, cc);
        }
      }
    }
  }
  return edges;
}

double contour_l2(const Image& a, const Image& b, const CannyConfig& cfg) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw DimensionError("contour_l2: " + a.shape().to_string() + " vs " +
                         b.shape().to_string());
  }
  const Tensor ea = canny_edges(a, cfg), eb = canny_edges(b, cfg);
  double acc = 0.0;
  for (std::size_t i = 0; i < ea.size(); ++i) {
    const double d = ea[i] - eb[i];
    acc += d * d;
  }
  return std::sqrt(acc) / std::sqrt(static_cast<double>(ea.size()));
}

bool is_detected(const KnowledgeFeatures& reference, const KnowledgeFeatures& candidate,
                 const DetectionConfig& cfg) {
  if (reference.kind != FeatureKind::kLandmarks ||
      candidate.kind != FeatureKind::kLandmarks) {
    throw ProtocolError("detection needs landmark features");
  }
  if (reference.landmarks.size() != candidate.landmarks.size()) {
    throw DimensionError("landmark counts differ");
  }
  const double radius = cfg.max_shift * reference.diagonal();
  for (std::size_t k = 0; k < candidate.landmarks.size(); ++k) {
    if (!(candidate.confidences[k] > cfg.min_confidence)) return false;
    const double d = std::hypot(candidate.landmarks[k].row - reference.landmarks[k].row,
                                candidate.landmarks[k].col - reference.landmarks[k].col);
    if (d > radius) return false;
  }
  return true;
}

EvalRecord evaluate_pair(const std::string& sample_id, const std::string& model,
                         const Image& fake_clean, const Image& fake_protected,
                         SampleKind domain) {
  EvalRecord rec;
  rec.sample_id = sample_id;
  rec.model = model;
  rec.ssimd = std::max(0.0, ssimd(fake_clean, fake_protected).value);
  rec.fsimd = std::max(0.0, fsimd(fake_clean, fake_protected).value);
  rec.lpips_proxy = perceptual_distance(fake_clean, fake_protected).value;
  rec.mse = mse(fake_clean, fake_protected).value;
  rec.l2_con = contour_l2(fake_clean, fake_protected);
  if (domain == SampleKind::kFace) {
    const auto& ex = landmark_extractor();
    const KnowledgeFeatures fc = ex.extract(fake_clean);
    const KnowledgeFeatures fp = ex.extract(fake_protected);
    rec.detected = is_detected(fc, fp);
    double shift = 0.0;
    for (std::size_t k = 0; k < fc.landmarks.size(); ++k) {
      shift += std::hypot(fc.landmarks[k].row - fp.landmarks[k].row,
                          fc.landmarks[k].col - fp.landmarks[k].col);
    }
    rec.keypoint_displacement =
        shift / static_cast<double>(fc.landmarks.size()) / fc.diagonal();
  }
  return rec;
}

double success_rate(const std::vector<EvalRecord>& records, double threshold) {
  if (records.empty()) throw ProtocolError("success rate of an empty record set");
  if (!(threshold >= 0.0)) throw ConfigError("success threshold must be >= 0");
  const auto hits = std::count_if(records.begin(), records.end(), [&](const auto& r) {
    return r.lpips_proxy >= threshold;
  });
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

double blocking_rate(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw ProtocolError("blocking rate of an empty record set");
  const auto blocked = std::count_if(records.begin(), records.end(),
                                     [](const auto& r) { return !r.detected; });
  return static_cast<double>(blocked) / static_cast<double>(records.size());
}

Aggregates aggregate(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw ProtocolError("aggregate of an empty record set");
  Aggregates a;
  for (const auto& r : records) {
    a.ssimd += r.ssimd;
    a.fsimd += r.fsimd;
    a.lpips_proxy += r.lpips_proxy;
    a.mse += r.mse;
    a.l2_con += r.l2_con;
    a.keypoint_displacement += r.keypoint_displacement;
  }
  const double n = static_cast<double>(records.size());
  a.ssimd /= n;
  a.fsimd /= n;
  a.lpips_proxy /= n;
  a.mse /= n;
  a.l2_con /= n;
  a.keypoint_displacement /= n;
  return a;
}

std::string to_string(Protocol p) {
  switch (p) {
    case Protocol::kDistortion: return "distortion";
    case Protocol::kUniversality: return "universality";
    case Protocol::kTransferability: return "transferability";
    case Protocol::kAblation: return "ablation";
  }
  return "?";
}

std::string to_string(Defense d) {
  switch (d) {
    case Defense::kKgad: return "kgad";
    case Defense::kItd: return "itd";
    case Defense::kFgsm: return "fgsm";
  }
  return "?";
}

Protocol parse_protocol(const std::string& s) {
  for (Protocol p : {Protocol::kDistortion, Protocol::kUniversality,
                     Protocol::kTransferability, Protocol::kAblation}) {
    if (to_string(p) == s) return p;
  }
  throw ConfigError("unknown protocol '" + s + "'");
}

Defense parse_defense(const std::string& s) {
  for (Defense d : {Defense::kKgad, Defense::kItd, Defense::kFgsm}) {
    if (to_string(d) == s) return d;
  }
  throw ConfigError("unknown defense '" + s + "'");
}

// ---------------------------------------------------------------------------

NoiseBudget sample_budget(const EvalSettings& settings, const std::string& sample_id) {
  NoiseBudget b = settings.budget;
  b.seed = derive_seed(settings.seed, fnv1a(sample_id));
  return b;
}

ProtectionResult run_defense(Defense defense, const Image& x,
                             std::shared_ptr<const ManipulationModel> model,
                             const NoiseBudget& budget, const LossConfig& cfg) {
  switch (defense) {
    case Defense::kKgad: return protect(x, std::move(model), budget, cfg);
    case Defense::kItd: return protect_itd(x, std::move(model), budget);
    case Defense::kFgsm: return protect_fgsm(x, std::move(model), budget, cfg);
  }
  throw ConfigError("unknown defense");
}

ProtocolReport run_distortion_eval(const std::vector<SyntheticSample>& samples,
                                   std::shared_ptr<const ManipulationModel> model,
                                   Defense defense, const EvalSettings& settings) {
  const SampleKind domain = domain_of(samples);
  return per_sample(
      Protocol::kDistortion, to_string(defense), model->name(), samples, 0, settings,
      [&](std::size_t i) {
        const auto& s = samples[i];
        const ProtectionResult r = run_defense(defense, s.image, model,
                                               sample_budget(settings, s.id), settings.loss);
        if (settings.on_result) settings.on_result(i, r);
        return evaluate_pair(s.id, model->name(), r.fake_clean, r.fake_protected, domain);
      });
}

ProtocolReport run_universality_eval(const std::vector<SyntheticSample>& samples,
                                     std::shared_ptr<const ManipulationModel> model,
                                     Defense defense, const EvalSettings& settings) {
  const SampleKind domain = domain_of(samples);
  if (samples.size() < 2) throw ProtocolError("universality needs at least 2 samples");
  const auto& source = samples.front();
  const ProtectionResult base = run_defense(
      defense, source.image, model, sample_budget(settings, source.id), settings.loss);
  if (settings.on_result) settings.on_result(0, base);
  return per_sample(
      Protocol::kUniversality, to_string(defense), model->name(), samples, 1, settings,
      [&](std::size_t i) {
        const auto& s = samples[i];
        require_same_shape(base.noise.shape(), s.image.shape(), "universal noise");
        const Tensor noise = linf_project(base.noise, settings.budget.epsilon, s.image);
        const Image y = model->forward(s.image);
        const Image yp = model->forward(apply_noise(s.image, noise));
        return evaluate_pair(s.id, model->name(), y, yp, domain);
      });
}

std::vector<ProtocolReport> run_transferability_eval(
    const std::vector<SyntheticSample>& samples,
    std::shared_ptr<const ManipulationModel> source,
    const std::vector<std::shared_ptr<const ManipulationModel>>& targets,
    Defense defense, const EvalSettings& settings) {
  const SampleKind domain = domain_of(samples);
  if (targets.empty()) throw ProtocolError("transferability needs a target model");
  // Protect once per sample against the source, then score every target.
  std::vector<std::optional<Image>> protected_images(samples.size());
  std::vector<std::optional<SampleFailure>> source_failures(samples.size());
  parallel_for(samples.size(), settings.workers, [&](std::size_t i) {
    try {
      const ProtectionResult r =
          run_defense(defense, samples[i].image, source,
                      sample_budget(settings, samples[i].id), settings.loss);
      if (settings.on_result) settings.on_result(i, r);
      protected_images[i] = r.protected_image;
    } catch (const std::exception& e) {
      source_failures[i] = SampleFailure{samples[i].id, e.what()};
    }
  });
  std::vector<ProtocolReport> reports;
  for (const auto& target : targets) {
    std::vector<std::optional<EvalRecord>> records(samples.size());
    auto failures = source_failures;
    parallel_for(samples.size(), settings.workers, [&](std::size_t i) {
      if (!protected_images[i]) return;
      try {
        const Image y = target->forward(samples[i].image);
        const Image yp = target->forward(*protected_images[i]);
        records[i] = evaluate_pair(samples[i].id, target->name(), y, yp, domain);
      } catch (const std::exception& e) {
        failures[i] = SampleFailure{samples[i].id, e.what()};
      }
    });
    reports.push_back(assemble(Protocol::kTransferability, to_string(defense),
                               target->name(), domain, settings.threshold,
                               std::move(records), std::move(failures)));
  }
  return reports;
}

LossConfig ablation_loss(const std::string& variant, const LossConfig& base) {
  LossConfig cfg = base;
  if (variant == "kgad") return cfg;
  if (variant == "kgad-no-dk") {
    cfg.lambda = 0.0;
    return cfg;
  }
  if (variant == "kgad-no-pk") {
    cfg.use_perception = false;
    return cfg;
  }
  throw ConfigError("unknown ablation variant '" + variant + "'");
}

std::vector<ProtocolReport> run_ablation_eval(
    const std::vector<SyntheticSample>& samples,
    std::shared_ptr<const ManipulationModel> model, const EvalSettings& settings) {
  std::vector<ProtocolReport> reports;
  for (const auto& variant : ablation_variants()) {
    EvalSettings s = settings;
    s.loss = ablation_loss(variant, settings.loss);
    ProtocolReport r = run_distortion_eval(samples, model, Defense::kKgad, s);
    r.protocol = Protocol::kAblation;
    r.defense = variant;
    reports.push_back(std::move(r));
  }
  return reports;
}

// ---------------------------------------------------------------------------

nlohmann::json report_to_json(const ProtocolReport& report) {
  using nlohmann::json;
  json records = json::array();
  for (const auto& r : report.records) {
    records.push_back({{"sample_id", r.sample_id},
                       {"model", r.model},
                       {"ssimd", r.ssimd},
                       {"fsimd", r.fsimd},
                       {"lpips_proxy", r.lpips_proxy},
                       {"mse", r.mse},
                       {"l2_con", r.l2_con},
                       {"detected", r.detected},
                       {"keypoint_displacement", r.keypoint_displacement}});
  }
  json failures = json::array();
  for (const auto& f : report.failures) {
    failures.push_back({{"sample_id", f.sample_id}, {"message", f.message}});
  }
  const auto& a = report.aggregates;
  json j{{"protocol", to_string(report.protocol)},
         {"defense", report.defense},
         {"model", report.model},
         {"domain", to_string(report.domain)},
         {"threshold", report.threshold},
         {"aggregates",
          {{"ssimd", a.ssimd},
           {"fsimd", a.fsimd},
           {"lpips_proxy", a.lpips_proxy},
           {"mse", a.mse},
           {"l2_con", a.l2_con},
           {"keypoint_displacement", a.keypoint_displacement}}},
         {"success_rate", report.success_rate},
         {"blocking_rate", report.blocking_rate ? json(*report.blocking_rate) : json(nullptr)},
         {"records", std::move(records)},
         {"failures", std::move(failures)}};
  return j;
}

ProtocolReport report_from_json(const nlohmann::json& j) {
  try {
    ProtocolReport r;
    r.protocol = parse_protocol(j.at("protocol").get<std::string>());
    r.defense = j.at("defense").get<std::string>();
    r.model = j.at("model").get<std::string>();
    r.domain = parse_sample_kind(j.at("domain").get<std::string>());
    r.threshold = j.at("threshold").get<double>();
    const auto& a = j.at("aggregates");
    r.aggregates = {a.at("ssimd").get<double>(),  a.at("fsimd").get<double>(),
                    a.at("lpips_proxy").get<double>(), a.at("mse").get<double>(),
                    a.at("l2_con").get<double>(),
                    a.at("keypoint_displacement").get<double>()};
    r.success_rate = j.at("success_rate").get<double>();
    if (!j.at("blocking_rate").is_null()) r.blocking_rate = j.at("blocking_rate").get<double>();
    for (const auto& e : j.at("records")) {
      r.records.push_back({e.at("sample_id").get<std::string>(),
                           e.at("model").get<std::string>(),
                           e.at("ssimd").get<double>(),
                           e.at("fsimd").get<double>(),
                           e.at("lpips_proxy").get<double>(),
                           e.at("mse").get<double>(),
                           e.at("l2_con").get<double>(),
                           e.at("detected").get<bool>(),
                           e.at("keypoint_displacement").get<double>()});
    }
    for (const auto& f : j.at("failures")) {
      r.failures.push_back({f.at("sample_id").get<std::string>(),
                            f.at("message").get<std::string>()});
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed report: ") + e.what());
  }
}

std::string reports_to_csv(const std::vector<ProtocolReport>& reports) {
  std::ostringstream out;
  out << "Defense,SSIMD,FSIMD,LPIPS,L2_con,SR,BR\n";
  char buf[256];
  for (const auto& r : reports) {
    const auto& a = r.aggregates;
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f,%.4f,", a.ssimd, a.fsimd,
                  a.lpips_proxy, a.l2_con, r.success_rate);
    out << r.defense << ',' << buf;
    if (r.blocking_rate) {
      std::snprintf(buf, sizeof buf, "%.4f", *r.blocking_rate);
      out << buf;
    } else {
      out << "NA";
    }
    out << '\n';
  }
  return out.str();
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t threads =
      std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace kgad
