// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "app.hpp"
#include "kgad/evaluation.hpp"
#include "kgad/fsim.hpp"
#include "kgad/perceptual.hpp"
#include "kgad/png_io.hpp"
#include "kgad/rng.hpp"
#include "kgad/ssim.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace kgad;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void verdict(int id, const char* name, bool pass, const std::string& detail) {
  std::printf("criterion %2d %-28s %s  %s\n", id, name, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Worst relative error of sampled coordinates of `g`; the error floor is
// 1e-2 of the largest entry of the whole gradient.
double audit(const Tensor& g, const std::vector<std::size_t>& idx, const std::vector<double>& numeric) {
  std::vector<double> analytic;
  for (auto i : idx) analytic.push_back(g[i]);
  return oracle::max_relative_error(analytic, numeric, 1e-2, g.max_abs());
}

Image inner(const Image& img) {
  Tensor t = img.tensor();
  for (double& v : t.values()) v = 0.1 + 0.8 * v;
  return Image::from_tensor(t);
}

// 1 ------------------------------------------------------------------------
void budget_invariant() {
  const auto t0 = Clock::now();
  const fs::path dir = fs::temp_directory_path() / "kgad_accept_budget";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto names = fixture_names();
  const int levels[3] = {4, 7, 12};
  const Defense defenses[3] = {Defense::kKgad, Defense::kItd, Defense::kFgsm};
  int runs = 0, violations = 0, png_violations = 0;
  SplitMix64 rng(0xB0D6E7);
  for (int k = 0; k < 200; ++k) {
    const bool face = k % 2 == 0;
    const std::uint64_t seed = rng.next();
    const Image x = face ? gen_face(seed, 32).image : gen_scene(seed, 32).image;
    const auto model = make_model(names[rng.next() % names.size()]);
    const int eps = levels[k % 3];
    NoiseBudget b = NoiseBudget::from_levels(eps, 1 + static_cast<int>(rng.next() % eps), 3);
    b.init = rng.next() % 2 ? NoiseInit::kUniform : NoiseInit::kZeros;
    b.seed = rng.next();
    const ProtectionResult r = run_defense(defenses[k % 3 == 0 ? 0 : rng.next() % 3], x, model, b,
                                           face ? LossConfig::face() : LossConfig::style());
    ++runs;
    if (r.noise.max_abs() > b.epsilon) ++violations;
    const std::string png = (dir / "p.png").string();
    save_png(r.protected_image, png);
    const auto stored = quantize_bytes(load_png(png));
    const auto anchor = quantize_bytes(x);
    for (std::size_t i = 0; i < stored.size(); ++i)
      if (std::abs(int(stored[i]) - int(anchor[i])) > eps) {
        ++png_violations;
        break;
      }
  }
  const double secs = seconds_since(t0);
  verdict(1, "budget invariant", violations == 0 && png_violations == 0 && secs < 120,
          fmt("%d runs, %d in-memory and %d stored violations, %.1fs", runs, violations, png_violations, secs));
}

// 2 ------------------------------------------------------------------------
void gradient_audits() {
  const auto t0 = Clock::now();
  double ssim_worst = 0, ext_worst = 0, vjp_worst = 0, chain_worst = 0;
  const LandmarkExtractor landmarks;
  const ContentExtractor content;
  const auto names = fixture_names();
  for (int k = 0; k < 20; ++k) {
    // SSIMD with respect to its second argument.
    const Image a = oracle::random_image(1000 + k, 16, 16, 3, 0.1, 0.9);
    const Image b = oracle::random_image(2000 + k, 16, 16, 3, 0.1, 0.9);
    auto idx = oracle::sample_indices(k, a.size(), 24);
    ssim_worst = std::max(ssim_worst, audit(
        ssimd_gradient(a, b), idx,
        oracle::central_difference([&](const Tensor& t) { return ssimd(a, Image::from_tensor(t)).value; },
                                   b.tensor(), idx, 1e-4)));

    // Extractor gradients: landmarks on faces, content on scenes.
    const Image face = inner(gen_face(3000 + k, 32).image);
    const Image moved = apply_noise(face, oracle::random_tensor(k, face.shape(), -0.03, 0.03));
    const bool use_landmarks = k % 2 == 0;
    const KnowledgeExtractor& ex = use_landmarks ? static_cast<const KnowledgeExtractor&>(landmarks) : content;
    const Image probe = use_landmarks ? moved : gen_scene(4000 + k, 32).image;
    auto ref = ex.extract(use_landmarks ? face : oracle::random_image(5000 + k, 32, 32, 3));
    if (use_landmarks) ref.landmarks[k % 5].row += 2.0;
    idx = oracle::sample_indices(k + 50, probe.size(), 16);
    ext_worst = std::max(ext_worst, audit(
        domain_distance_gradient(ref, ex.extract(probe), ex, probe), idx,
        oracle::central_difference(
            [&](const Tensor& t) { return domain_distance(ref, ex.extract(Image::from_tensor(t))); },
            probe.tensor(), idx, 1e-5)));

    // Fixture vector-Jacobian products.
    const auto model = make_model(names[1 + k % (names.size() - 1)]);
    const Image x = oracle::random_image(6000 + k, 20, 20, 3, 0.05, 0.95);
    const Tensor up = oracle::random_tensor(7000 + k, x.shape(), -1, 1);
    idx = oracle::sample_indices(k + 80, x.size(), 24);
    vjp_worst = std::max(vjp_worst, audit(
        model->input_gradient(x, up), idx,
        oracle::central_difference(
            [&](const Tensor& t) {
              const Image y = model->forward(Image::from_tensor(t));
              double acc = 0;
              for (std::size_t i = 0; i < up.size(); ++i) acc += up[i] * y[i];
              return acc;
            },
            x.tensor(), idx, 1e-6)));

    // The whole chain: model, perception metric and extractor.
    const bool face_chain = k % 4 != 3;
    LossConfig cfg = face_chain ? LossConfig::face() : LossConfig::style();
    cfg.lambda = face_chain ? 50.0 : 1.0;
    const Image anchor = face_chain ? face : gen_scene(8000 + k, 32).image;
    const KgadObjective obj(anchor, {make_model(face_chain ? names[1 + k % 5] : names[6 + k % 5])}, cfg);
    const Tensor noise = oracle::random_tensor(9000 + k, anchor.shape(), -0.02, 0.02);
    idx = oracle::sample_indices(k + 110, anchor.size(), 12);
    chain_worst = std::max(chain_worst, audit(
        obj.evaluate(noise, true).gradient, idx,
        oracle::central_difference([&](const Tensor& n) { return obj.evaluate(n, false).losses.total; },
                                   noise, idx, 1e-6)));
  }
  const double secs = seconds_since(t0);
  verdict(2, "gradient audits",
          ssim_worst < 1e-4 && ext_worst < 1e-3 && vjp_worst < 1e-3 && chain_worst < 1e-3 && secs < 60,
          fmt("max rel err ssimd %.1e extractor %.1e vjp %.1e chain %.1e over 20 fixtures each, %.1fs",
              ssim_worst, ext_worst, vjp_worst, chain_worst, secs));
}

// 3 ------------------------------------------------------------------------
void metric_conformance() {
  bool ok = true;
  std::string why;
  const Image x = oracle::random_image(77, 32, 32, 3);
  const PerceptualDistance lp;
  const LandmarkExtractor lm;
  const ContentExtractor ct;
  ok &= ssim(x, x).value == 1.0 && fsim(x, x).value == 1.0;
  ok &= ssimd(x, x).value == 0.0 && fsimd(x, x).value == 0.0 && lp(x, x).value == 0.0 &&
        mse(x, x).value == 0.0 && contour_l2(x, x) == 0.0 &&
        domain_distance(lm.extract(x), lm.extract(x)) == 0.0 &&
        domain_distance(ct.extract(x), ct.extract(x)) == 0.0;
  if (!ok) why += " identity";
  const double c1 = SsimConfig{}.c1();
  const double closed = std::abs(ssim(Image(16, 16, 1, 0.0), Image(16, 16, 1, 1.0)).value - c1 / (1 + c1));
  if (closed >= 1e-9) ok = false, why += " closed-form";

  Tensor sq(32, 32, 1, 0.2);
  for (int r = 8; r < 24; ++r)
    for (int c = 8; c < 24; ++c) sq.at(r, c, 0) = 0.85;
  const Image square = Image::from_tensor(sq);
  int canny_mismatch = 0;
  for (const Image& img : {square, gen_face(5, 48).image, gen_scene(5, 40).image, x})
    canny_mismatch += !(canny_edges(img) == oracle::canny(img));
  if (canny_mismatch) ok = false, why += " canny";

  double fsim_err = 0;
  const Image blurred = apply_noise(square, oracle::random_tensor(3, sq.shape(), -0.05, 0.05));
  const Image pairs[3][2] = {{square, blurred}, {gen_face(6, 32).image, gen_face(7, 32).image}, {x, oracle::random_image(78, 32, 32, 3)}};
  for (const auto& p : pairs) fsim_err = std::max(fsim_err, std::abs(fsim(p[0], p[1]).value - oracle::fsim(p[0], p[1])));
  if (fsim_err >= 1e-6) ok = false, why += " fsim";
  verdict(3, "metric conformance", ok,
          fmt("identity exact, closed-form err %.1e, canny mismatches %d/4, fsim max err %.1e%s", closed,
              canny_mismatch, fsim_err, why.empty() ? "" : (" failed:" + why).c_str()));
}

// 4, 5, 6, 10 ------------------------------------------------------------------
struct FaceRuns {
  std::vector<SyntheticSample> faces;
  ProtocolReport kgad, itd, no_dk, no_pk;
  std::vector<Losses> initial, final;
  double kgad_seconds = 0;
};

FaceRuns face_runs() {
  FaceRuns fr;
  fr.faces = generate_all(build_manifest(SampleKind::kFace, 32, 7, 64));
  const auto model = make_model("attribute_edit");
  EvalSettings s;  // face profile, single worker
  fr.initial.resize(32);
  fr.final.resize(32);
  s.on_result = [&](std::size_t i, const ProtectionResult& r) {
    fr.initial[i] = r.initial;
    fr.final[i] = r.final;
  };
  const auto t0 = Clock::now();
  fr.kgad = run_distortion_eval(fr.faces, model, Defense::kKgad, s);
  fr.kgad_seconds = seconds_since(t0);
  s.on_result = nullptr;
  fr.itd = run_distortion_eval(fr.faces, model, Defense::kItd, s);
  EvalSettings v = s;
  v.loss = ablation_loss("kgad-no-dk", s.loss);
  fr.no_dk = run_distortion_eval(fr.faces, model, Defense::kKgad, v);
  v.loss = ablation_loss("kgad-no-pk", s.loss);
  fr.no_pk = run_distortion_eval(fr.faces, model, Defense::kKgad, v);
  return fr;
}

void progress(const FaceRuns& fr) {
  int improved = 0;
  for (std::size_t i = 0; i < fr.final.size(); ++i) improved += fr.final[i].total < fr.initial[i].total;
  const double s = fr.kgad.aggregates.ssimd;
  verdict(4, "optimizer progress",
          improved == 32 && fr.kgad.records.size() == 32 && s >= 0.15 && fr.kgad_seconds < 300,
          fmt("loss decreased on %d/32, mean SSIMD %.4f (>= 0.15), %.1fs single-threaded", improved, s,
              fr.kgad_seconds));
}

void ordering(const FaceRuns& fr) {
  const double k = fr.kgad.aggregates.ssimd, i = fr.itd.aggregates.ssimd;
  const double kd = fr.kgad.aggregates.keypoint_displacement, id = fr.itd.aggregates.keypoint_displacement;
  verdict(5, "KGAD over ITD", k > i * 1.03 && kd > id,
          fmt("SSIMD %.4f vs %.4f (margin %.1f%%), keypoint displacement %.5f vs %.5f", k, i,
              100 * (k - i) / i, kd, id));
}

void ablation(const FaceRuns& fr) {
  const double kd = fr.kgad.aggregates.keypoint_displacement, nd = fr.no_dk.aggregates.keypoint_displacement;
  const double ks = fr.kgad.aggregates.ssimd, ns = fr.no_pk.aggregates.ssimd;
  verdict(6, "ablation directions", kd > nd && ks > ns,
          fmt("displacement full %.5f vs no-dk %.5f, SSIMD full %.4f vs no-pk %.4f", kd, nd, ks, ns));
}

void blocking(const FaceRuns& fr) {
  const LandmarkExtractor ex;
  int detected = 0;
  for (const auto& s : fr.faces) {
    const KnowledgeFeatures f = ex.extract(make_model("identity")->forward(s.image));
    detected += is_detected(f, f);
  }
  const double kb = fr.kgad.blocking_rate.value_or(-1), ib = fr.itd.blocking_rate.value_or(-1);
  verdict(10, "blocking rate", detected == 32 && kb > ib,
          fmt("identity clean fakes detected %d/32, BR KGAD %.3f vs ITD %.3f", detected, kb, ib));
}

// 7 ------------------------------------------------------------------------
void universality(const FaceRuns& fr) {
  const auto model = make_model("attribute_edit");
  const EvalSettings s;
  const ProtocolReport u = run_universality_eval(fr.faces, model, Defense::kKgad, s);
  std::vector<SyntheticSample> twin{fr.faces[0], fr.faces[0]};
  const ProtocolReport t = run_universality_eval(twin, model, Defense::kKgad, s);
  const bool degenerate = t.records.size() == 1 && t.records[0] == fr.kgad.records[0];
  verdict(7, "universality", u.records.size() == 31 && u.aggregates.ssimd >= 0.05 && degenerate,
          fmt("31-sample mean SSIMD %.4f (>= 0.05), identical-pair case %s", u.aggregates.ssimd,
              degenerate ? "equals per-sample record" : "DIFFERS"));
}

// 8 ------------------------------------------------------------------------
void transferability(const FaceRuns& fr) {
  const auto source = make_model("attribute_edit");
  const std::vector<std::shared_ptr<const ManipulationModel>> targets{make_model("attribute_edit_1"),
                                                                      make_model("stylize")};
  const EvalSettings s;
  const auto k = run_transferability_eval(fr.faces, source, targets, Defense::kKgad, s);
  const auto i = run_transferability_eval(fr.faces, source, targets, Defense::kItd, s);
  bool ok = true;
  std::string detail;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const double ks = k[t].aggregates.ssimd, is = i[t].aggregates.ssimd;
    ok &= ks > 0 && is > 0 && ks >= is;
    detail += fmt("%s SSIMD KGAD %.4f vs ITD %.4f; ", targets[t]->name().c_str(), ks, is);
  }
  verdict(8, "transferability", ok, detail);
}

// 9 ------------------------------------------------------------------------
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int compare_outputs(const fs::path& a, const fs::path& b, bool skip_run_record, int* files) {
  int diffs = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    const auto ext = e.path().extension();
    if (ext != ".json" && ext != ".csv") continue;
    if (skip_run_record && e.path().filename() == "run.json") continue;
    ++*files;
    diffs += slurp(e.path()) != slurp(b / fs::relative(e.path(), a));
  }
  return diffs;
}

void determinism() {
  const fs::path root = fs::temp_directory_path() / "kgad_accept_cli";
  fs::remove_all(root);
  const std::string data = (root / "data").string();
  int status = cli::run({"kgad", "gen-data", "--count", "4", "--size", "32", "--seed", "9", "--out", data});
  const std::string manifest = data + "/manifest.json";
  const std::vector<std::vector<std::string>> commands{
      {"protect"}, {"compare"}, {"ablate"}, {"evaluate", "--protocol", "universality"},
      {"evaluate", "--protocol", "transferability"}};
  int files = 0, diffs = 0;
  for (std::size_t c = 0; c < commands.size(); ++c) {
    // Identical config means the same output directory too, since run.json
    // records it; earlier runs are moved aside before each repeat.
    const fs::path out = root / std::to_string(c);
    std::vector<fs::path> kept;
    for (const char* workers : {"3", "3", "1"}) {
      std::vector<std::string> args{"kgad"};
      args.insert(args.end(), commands[c].begin(), commands[c].end());
      for (const std::string& a : {std::string("--dataset"), manifest, std::string("--steps"), std::string("4"),
                                   std::string("--seed"), std::string("21"), std::string("--workers"),
                                   std::string(workers), std::string("--out"), out.string()})
        args.push_back(a);
      status |= cli::run(args);
      kept.push_back(root / (std::to_string(c) + "_run" + std::to_string(kept.size())));
      fs::rename(out, kept.back());
    }
    diffs += compare_outputs(kept[0], kept[1], false, &files);
    diffs += compare_outputs(kept[0], kept[2], true, &files);
  }
  verdict(9, "CLI determinism", status == 0 && diffs == 0 && files > 0,
          fmt("%d JSON/CSV comparisons across repeats and worker counts, %d differences", files, diffs));
}

}  // namespace

int main() {
  budget_invariant();
  gradient_audits();
  metric_conformance();
  const FaceRuns fr = face_runs();
  progress(fr);
  ordering(fr);
  ablation(fr);
  universality(fr);
  transferability(fr);
  determinism();
  blocking(fr);
  std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
