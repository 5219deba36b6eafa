#include "app.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>

#include "CLI11.hpp"
#include "kgad/errors.hpp"
#include "kgad/evaluation.hpp"
#include "kgad/models.hpp"
#include "kgad/optimizer.hpp"
#include "kgad/png_io.hpp"
#include "kgad/synthetic.hpp"

namespace kgad::cli {
namespace fs = std::filesystem;

namespace {

struct Profile {
  double epsilon;
  double alpha;
  int steps;
  double lambda;
  double threshold;
  const char* model;
  std::vector<std::string> targets;
};

const Profile& profile(const std::string& name) {
  static const Profile face{7.0, 1.0, 60, 1.0, kProxyFaceThreshold, "attribute_edit",
                            {"attribute_edit_1", "stylize"}};
  static const Profile style{12.0, 1.0, 60, 6e-2, kProxyStyleThreshold, "stylize",
                             {"stylize_1"}};
  if (name == "face") return face;
  if (name == "style") return style;
  throw ConfigError("unknown profile '" + name + "' (face or style)");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

std::vector<std::string> split_list(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& item : items) {
    std::size_t start = 0;
    while (start <= item.size()) {
      const std::size_t comma = item.find(',', start);
      const std::string part =
          item.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      if (!part.empty()) out.push_back(part);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  return out;
}

NoiseBudget budget_of(const RunConfig& cfg) {
  NoiseBudget b;
  b.epsilon = cfg.epsilon / 255.0;
  b.alpha = cfg.alpha / 255.0;
  b.steps = cfg.steps;
  b.seed = cfg.seed;
  if (cfg.init == "zeros") b.init = NoiseInit::kZeros;
  else if (cfg.init == "uniform") b.init = NoiseInit::kUniform;
  else throw ConfigError("init must be zeros or uniform");
  b.validate();
  return b;
}

LossConfig loss_of(const RunConfig& cfg) {
  LossConfig l = cfg.profile == "style" ? LossConfig::style() : LossConfig::face();
  l.lambda = cfg.lambda;
  l.validate();
  return l;
}

EvalSettings settings_of(const RunConfig& cfg) {
  EvalSettings s;
  s.budget = budget_of(cfg);
  s.loss = loss_of(cfg);
  s.threshold = cfg.threshold;
  s.seed = cfg.seed;
  s.workers = cfg.workers;
  return s;
}

// Maps noise in [-eps, eps] to [0, 1] around mid-gray.
Image noise_visual(const Tensor& noise, double epsilon) {
  Tensor t = noise;
  for (double& v : t.values()) v = epsilon > 0.0 ? 0.5 + v / (2.0 * epsilon) : 0.5;
  return Image::clamped(std::move(t));
}

int report_failures(const std::vector<SampleFailure>& failures) {
  for (const auto& f : failures) {
    std::cerr << "sample " << f.sample_id << " failed: " << f.message << "\n";
  }
  return failures.empty() ? 0 : 1;
}

nlohmann::json losses_json(const Losses& l) {
  return {{"perception", l.perception}, {"domain", l.domain}, {"total", l.total}};
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const RunConfig& cfg) {
  const SampleKind kind = parse_sample_kind(cfg.kind);
  Manifest m = build_manifest(kind, cfg.count, cfg.seed, cfg.size);
  fs::create_directories(fs::path(cfg.out) / "images");
  for (auto& entry : m.samples) {
    const SyntheticSample s = generate(entry);
    entry.png = "images/" + entry.id + ".png";
    save_png(s.image, (fs::path(cfg.out) / *entry.png).string());
  }
  save_manifest(m, (fs::path(cfg.out) / "manifest.json").string());
  std::cout << "wrote " << m.samples.size() << " samples to " << cfg.out << "\n";
  return 0;
}

int cmd_protect(const RunConfig& cfg, const std::vector<SyntheticSample>& samples) {
  const auto model = make_model(cfg.model);
  const EvalSettings settings = settings_of(cfg);
  const Defense defense = parse_defense(cfg.defenses.front());
  std::vector<nlohmann::json> entries(samples.size());
  std::vector<std::optional<SampleFailure>> failures(samples.size());
  parallel_for(samples.size(), cfg.workers, [&](std::size_t i) {
    const auto& s = samples[i];
    try {
      const ProtectionResult r = run_defense(defense, s.image, model,
                                             sample_budget(settings, s.id), settings.loss);
      const fs::path dir = fs::path(cfg.out) / "samples" / s.id;
      fs::create_directories(dir);
      save_png(s.image, (dir / "input.png").string());
      save_png(r.protected_image, (dir / "protected.png").string());
      save_png(noise_visual(r.noise, settings.budget.epsilon), (dir / "noise.png").string());
      save_png(r.fake_clean, (dir / "fake_clean.png").string());
      save_png(r.fake_protected, (dir / "fake_protected.png").string());
      nlohmann::json metrics = nlohmann::json::object();
      for (const auto& m : r.metrics) metrics[m.name] = m.value;
      nlohmann::json trace = nlohmann::json::array();
      for (const auto& l : r.trace) trace.push_back(losses_json(l));
      entries[i] = {{"sample_id", s.id},
                    {"max_abs_noise", r.noise.max_abs()},
                    {"initial_loss", losses_json(r.initial)},
                    {"final_loss", losses_json(r.final)},
                    {"metrics", metrics},
                    {"loss_trace", trace}};
    } catch (const std::exception& e) {
      failures[i] = SampleFailure{s.id, e.what()};
    }
  });
  nlohmann::json results = nlohmann::json::array();
  nlohmann::json errors = nlohmann::json::array();
  std::vector<SampleFailure> failed;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (failures[i]) {
      failed.push_back(*failures[i]);
      errors.push_back({{"sample_id", failures[i]->sample_id},
                        {"message", failures[i]->message}});
    } else {
      results.push_back(std::move(entries[i]));
    }
  }
  write_json(fs::path(cfg.out) / "protect.json",
             {{"defense", cfg.defenses.front()},
              {"model", model->name()},
              {"results", results},
              {"failures", errors}});
  return report_failures(failed);
}

std::vector<ProtocolReport> evaluate_defense(const RunConfig& cfg,
                                             const std::vector<SyntheticSample>& samples,
                                             Defense defense) {
  const auto model = make_model(cfg.model);
  const EvalSettings settings = settings_of(cfg);
  switch (parse_protocol(cfg.protocol)) {
    case Protocol::kDistortion:
      return {run_distortion_eval(samples, model, defense, settings)};
    case Protocol::kUniversality:
      return {run_universality_eval(samples, model, defense, settings)};
    case Protocol::kTransferability: {
      std::vector<std::shared_ptr<const ManipulationModel>> targets;
      for (const auto& t : cfg.targets) targets.push_back(make_model(t));
      return run_transferability_eval(samples, model, targets, defense, settings);
    }
    case Protocol::kAblation:
      return run_ablation_eval(samples, model, settings);
  }
  throw ConfigError("unknown protocol");
}

int write_reports(const RunConfig& cfg, const std::vector<ProtocolReport>& reports,
                  const std::string& stem) {
  nlohmann::json all = nlohmann::json::array();
  std::vector<SampleFailure> failures;
  for (const auto& r : reports) {
    all.push_back(report_to_json(r));
    failures.insert(failures.end(), r.failures.begin(), r.failures.end());
  }
  write_json(fs::path(cfg.out) / (stem + ".json"), all);
  write_text(fs::path(cfg.out) / (stem + ".csv"), reports_to_csv(reports));
  std::cout << reports_to_csv(reports);
  return report_failures(failures);
}

int cmd_evaluate(const RunConfig& cfg, const std::vector<SyntheticSample>& samples) {
  std::vector<ProtocolReport> reports;
  for (const auto& d : cfg.defenses) {
    auto r = evaluate_defense(cfg, samples, parse_defense(d));
    reports.insert(reports.end(), r.begin(), r.end());
  }
  return write_reports(cfg, reports, "report");
}

int cmd_ablate(const RunConfig& cfg, const std::vector<SyntheticSample>& samples) {
  const auto model = make_model(cfg.model);
  const EvalSettings base = settings_of(cfg);
  const auto& variants = ablation_variants();
  // Tile 0 is the clean fake, then one protected fake per variant.
  std::vector<std::vector<std::optional<Image>>> tiles(
      samples.size(), std::vector<std::optional<Image>>(variants.size() + 1));
  std::vector<ProtocolReport> reports;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    EvalSettings s = base;
    s.loss = ablation_loss(variants[v], base.loss);
    s.on_result = [&, v](std::size_t i, const ProtectionResult& r) {
      if (v == 0) tiles[i][0] = r.fake_clean;
      tiles[i][v + 1] = r.fake_protected;
    };
    ProtocolReport r = run_distortion_eval(samples, model, Defense::kKgad, s);
    r.protocol = Protocol::kAblation;
    r.defense = variants[v];
    reports.push_back(std::move(r));
  }
  fs::create_directories(fs::path(cfg.out) / "grids");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& row = tiles[i];
    bool complete = true;
    for (const auto& t : row) complete = complete && t.has_value();
    if (!complete) continue;
    const int h = row[0]->height(), w = row[0]->width();
    Tensor grid(h, w * static_cast<int>(row.size()), 3);
    for (std::size_t k = 0; k < row.size(); ++k) {
      const Image rgb = to_rgb(*row[k]);
      for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
          for (int ch = 0; ch < 3; ++ch)
            grid.at(r, static_cast<int>(k) * w + c, ch) = rgb.at(r, c, ch);
    }
    save_png(Image::from_tensor(std::move(grid)),
             (fs::path(cfg.out) / "grids" / (samples[i].id + ".png")).string());
  }
  return write_reports(cfg, reports, "ablation");
}

// ---------------------------------------------------------------------------


}  // namespace

nlohmann::json to_json(const RunConfig& c) {
  return {{"command", c.command},     {"dataset", c.dataset},
          {"profile", c.profile},     {"model", c.model},
          {"targets", c.targets},     {"defenses", c.defenses},
          {"protocol", c.protocol},   {"epsilon", c.epsilon},
          {"alpha", c.alpha},         {"steps", c.steps},
          {"init", c.init},           {"lambda", c.lambda},
          {"threshold", c.threshold}, {"seed", c.seed},
          {"workers", c.workers},     {"out", c.out},
          {"kind", c.kind},           {"count", c.count},
          {"size", c.size}};
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Knowledge-guided protective noise against image manipulation"};
  app.fallthrough();
  app.set_config("--config", "", "TOML-style key = value file; flags override it");
  RunConfig cfg;
  std::vector<std::string> defenses, targets;

  app.add_option("--dataset", cfg.dataset, "Dataset manifest (JSON)");
  auto* o_profile = app.add_option("--profile", cfg.profile, "face or style");
  auto* o_model = app.add_option("--model", cfg.model, "Manipulation model name");
  auto* o_targets = app.add_option("--targets", targets, "Transfer targets (comma list)");
  auto* o_defense = app.add_option("--defense", defenses, "kgad, itd or fgsm (comma list)");
  app.add_option("--protocol", cfg.protocol,
                 "distortion, universality, transferability or ablation");
  auto* o_eps = app.add_option("--epsilon", cfg.epsilon, "Budget in 1/255 units");
  auto* o_alpha = app.add_option("--alpha", cfg.alpha, "Step size in 1/255 units");
  auto* o_steps = app.add_option("--steps", cfg.steps, "PGD iterations");
  app.add_option("--init", cfg.init, "Noise initialization: zeros or uniform");
  auto* o_lambda = app.add_option("--lambda", cfg.lambda, "Domain-knowledge loss weight");
  auto* o_thr = app.add_option("--threshold", cfg.threshold, "Success-rate threshold");
  app.add_option("--seed", cfg.seed, "Run seed");
  app.add_option("--workers", cfg.workers, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", cfg.out, "Output directory")->required();
  app.add_option("--kind", cfg.kind, "gen-data: face or scene");
  app.add_option("--count", cfg.count, "gen-data: sample count")->check(CLI::PositiveNumber);
  app.add_option("--size", cfg.size, "gen-data: image side");

  for (const char* name : {"protect", "evaluate", "ablate", "compare", "gen-data"}) {
    app.add_subcommand(name)->callback([&cfg, name] { cfg.command = name; });
  }
  app.require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    fs::create_directories(cfg.out);
    std::vector<SyntheticSample> samples;
    if (cfg.command != "gen-data") {
      if (cfg.dataset.empty()) throw ConfigError("--dataset is required");
      if (!fs::exists(cfg.dataset)) throw IoError("dataset not found: " + cfg.dataset);
      samples = generate_all(load_manifest(cfg.dataset));
      if (samples.empty()) throw ConfigError("dataset is empty");
      if (o_profile->count() == 0) {
        cfg.profile = samples.front().kind == SampleKind::kFace ? "face" : "style";
      }
      const Profile& p = profile(cfg.profile);
      if (o_eps->count() == 0) cfg.epsilon = p.epsilon;
      if (o_alpha->count() == 0) cfg.alpha = p.alpha;
      if (o_steps->count() == 0) cfg.steps = p.steps;
      if (o_lambda->count() == 0) cfg.lambda = p.lambda;
      if (o_thr->count() == 0) cfg.threshold = p.threshold;
      if (o_model->count() == 0) cfg.model = p.model;
      cfg.targets = o_targets->count() == 0 ? p.targets : split_list(targets);
      cfg.defenses = o_defense->count() == 0
                         ? (cfg.command == "compare" ? std::vector<std::string>{"kgad", "itd"}
                                                     : std::vector<std::string>{"kgad"})
                         : split_list(defenses);
      if (cfg.command == "ablate") cfg.protocol = "ablation";
      parse_protocol(cfg.protocol);
      for (const auto& d : cfg.defenses) parse_defense(d);
      budget_of(cfg);
      loss_of(cfg);
    }
    write_json(fs::path(cfg.out) / "run.json", to_json(cfg));

    if (cfg.command == "gen-data") return cmd_gen_data(cfg);
    if (cfg.command == "protect") return cmd_protect(cfg, samples);
    if (cfg.command == "ablate") return cmd_ablate(cfg, samples);
    return cmd_evaluate(cfg, samples);  // evaluate and compare
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace kgad::cli
