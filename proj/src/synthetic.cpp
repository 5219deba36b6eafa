#include "kgad/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kgad/errors.hpp"
#include "kgad/rng.hpp"

namespace kgad {
namespace {

constexpr int kSupersample = 4;

constexpr double kPartContrast = 0.6;

struct Rgb {
  double r, g, b;
};

void require_size(int size) {
  if (size < 32) {
    throw ConfigError("synthetic images need size >= 32, got " +
                      std::to_string(size));
  }
}

Point scale_about(Point p, Point center, double s, Point shift) {
  return {center.row + shift.row + s * (p.row - center.row),
          center.col + shift.col + s * (p.col - center.col)};
}

// Sample positions are in layout units (fraction of the image side).
bool in_ellipse(double r, double c, Point center, double rr, double rc) {
  const double dr = (r - center.row) / rr, dc = (c - center.col) / rc;
  return dr * dr + dc * dc <= 1.0;
}

bool in_disk(double r, double c, Point center, double radius) {
  const double dr = r - center.row, dc = c - center.col;
  return dr * dr + dc * dc <= radius * radius;
}

bool in_nose(double r, double c, const FaceLayout& f) {
  if (r < f.nose_apex.row || r > f.nose_base_row) return false;
  const double t = (r - f.nose_apex.row) / (f.nose_base_row - f.nose_apex.row);
  return std::abs(c - f.nose_apex.col) <= t * f.nose_half_width;
}

double mouth_curve(double c, const FaceLayout& f) {
  const double u = (c - f.face_center.col) / f.mouth_half_width;
  return f.mouth_row + f.mouth_sag * (1.0 - u * u);
}

bool in_mouth(double r, double c, const FaceLayout& f) {
  if (std::abs(c - f.face_center.col) > f.mouth_half_width) return false;
  return std::abs(r - mouth_curve(c, f)) <= 0.5 * f.mouth_thickness;
}

Image finish(Tensor t) { return quantize_to_grid(Image::clamped(std::move(t))); }

}  // namespace

std::string to_string(SampleKind kind) {
  return kind == SampleKind::kFace ? "face" : "scene";
}

SampleKind parse_sample_kind(const std::string& text) {
  if (text == "face") return SampleKind::kFace;
  if (text == "scene") return SampleKind::kScene;
  throw ConfigError("unknown sample kind '" + text + "'");
}

Point layout_to_pixel(Point p, int size) {
  return {p.row * size - 0.5, p.col * size - 0.5};
}

std::vector<Point> FaceLayout::landmarks(int size) const {
  const Point nose{(nose_apex.row + 2.0 * nose_base_row) / 3.0, nose_apex.col};
  const Point mouth_left{mouth_row, face_center.col - mouth_half_width};
  const Point mouth_right{mouth_row, face_center.col + mouth_half_width};
  std::vector<Point> out;
  for (Point p : {left_eye, right_eye, nose, mouth_left, mouth_right}) {
    out.push_back(layout_to_pixel(p, size));
  }
  return out;
}

FaceLayout face_layout(std::uint64_t seed, const FaceOptions& options) {
  FaceLayout f;
  if (options.jitter == 0.0) return f;
  SplitMix64 rng(derive_seed(seed, 1));
  const double j = options.jitter;
  const Point shift{j * rng.uniform(-0.03, 0.03), j * rng.uniform(-0.03, 0.03)};
  const double s = 1.0 + j * rng.uniform(-0.08, 0.08);
  const double eye_spread = j * rng.uniform(-0.015, 0.015);
  const Point c = f.face_center;
  f.left_eye.col -= eye_spread;
  f.right_eye.col += eye_spread;
  f.left_eye = scale_about(f.left_eye, c, s, shift);
  f.right_eye = scale_about(f.right_eye, c, s, shift);
  f.nose_apex = scale_about(f.nose_apex, c, s, shift);
  f.nose_base_row = c.row + shift.row + s * (f.nose_base_row - c.row);
  f.mouth_row = c.row + shift.row + s * (f.mouth_row - c.row);
  f.face_center = {c.row + shift.row, c.col + shift.col};
  f.face_radius_row *= s;
  f.face_radius_col *= s;
  f.eye_radius *= s;
  f.nose_half_width *= s;
  f.mouth_half_width *= s;
  f.mouth_sag *= s;
  return f;
}

SyntheticSample gen_face(std::uint64_t seed, int size,
                         const FaceOptions& options) {
  require_size(size);
  const FaceLayout f = face_layout(seed, options);
  SplitMix64 rng(derive_seed(seed, 2));
  const double j = options.jitter;
  auto jit = [&](double amount) { return j * rng.uniform(-amount, amount); };
  const Rgb bg{0.35 + jit(0.15), 0.45 + jit(0.15), 0.55 + jit(0.15)};
  const double skin_gain = 1.0 + jit(0.08);
  const Rgb skin{0.85 * skin_gain, 0.70 * skin_gain, 0.60 * skin_gain};
  const double eye_shade = 0.12 + jit(0.05);
  Rgb eye{eye_shade, eye_shade * 0.85, eye_shade * 0.85};
  Rgb nose{skin.r * 0.6, skin.g * 0.6, skin.b * 0.6};
  Rgb mouth{0.55 + jit(0.08), 0.15 + jit(0.05), 0.15 + jit(0.05)};
  // Parts sit at a fraction of their full contrast against the skin, closer
  // to the low-contrast detail of real faces.
  auto soften = [&](Rgb p) {
    return Rgb{skin.r + kPartContrast * (p.r - skin.r),
               skin.g + kPartContrast * (p.g - skin.g),
               skin.b + kPartContrast * (p.b - skin.b)};
  };
  eye = soften(eye); nose = soften(nose); mouth = soften(mouth);

  Tensor t(size, size, 3);
  const double step = 1.0 / kSupersample;
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      Rgb acc{0, 0, 0};
      for (int i = 0; i < kSupersample; ++i) {
        for (int k = 0; k < kSupersample; ++k) {
          const double ur = (r + (i + 0.5) * step) / size;
          const double uc = (c + (k + 0.5) * step) / size;
          Rgb px = bg;
          if (in_ellipse(ur, uc, f.face_center, f.face_radius_row,
                         f.face_radius_col)) {
            px = skin;
            if (in_disk(ur, uc, f.left_eye, f.eye_radius) ||
                in_disk(ur, uc, f.right_eye, f.eye_radius)) {
              px = eye;
            } else if (in_nose(ur, uc, f)) {
              px = nose;
            } else if (in_mouth(ur, uc, f)) {
              px = mouth;
            }
          }
          acc.r += px.r;
          acc.g += px.g;
          acc.b += px.b;
        }
      }
      const double n = kSupersample * kSupersample;
      t.at(r, c, 0) = acc.r / n;
      t.at(r, c, 1) = acc.g / n;
      t.at(r, c, 2) = acc.b / n;
    }
  }

  SyntheticSample sample;
  sample.kind = SampleKind::kFace;
  sample.seed = seed;
  sample.image = finish(std::move(t));
  sample.landmarks = f.landmarks(size);
  return sample;
}

SyntheticSample gen_scene(std::uint64_t seed, int size,
                          const SceneOptions& options) {
  require_size(size);
  SplitMix64 rng(derive_seed(seed, 3));
  const double a = options.amplitude;
  const Rgb sky_top{0.25 + rng.uniform(-0.1, 0.1), 0.45 + rng.uniform(-0.1, 0.1),
                    0.80 + rng.uniform(-0.1, 0.1)};
  const Rgb sky_low{0.80 + rng.uniform(-0.1, 0.1), 0.75 + rng.uniform(-0.1, 0.1),
                    0.65 + rng.uniform(-0.1, 0.1)};
  const Rgb hill{0.25 + rng.uniform(-0.1, 0.1), 0.35 + rng.uniform(-0.1, 0.1),
                 0.25 + rng.uniform(-0.1, 0.1)};
  const Rgb water{0.20 + rng.uniform(-0.1, 0.1), 0.35 + rng.uniform(-0.1, 0.1),
                  0.50 + rng.uniform(-0.1, 0.1)};
  double ridge_amp[3], ridge_freq[3], ridge_phase[3];
  for (int i = 0; i < 3; ++i) {
    ridge_amp[i] = a * rng.uniform(0.01, 0.06) / (i + 1);
    ridge_freq[i] = rng.uniform(1.0, 3.0) * (i + 1);
    ridge_phase[i] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  const double tex_freq_r = rng.uniform(12.0, 20.0);
  const double tex_freq_c = rng.uniform(4.0, 9.0);
  const double tex_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double ridge_base = 0.45, water_row = 0.72;

  auto ridge = [&](double uc) {
    double v = ridge_base;
    for (int i = 0; i < 3; ++i) {
      v += ridge_amp[i] *
           std::sin(2.0 * std::numbers::pi * ridge_freq[i] * uc + ridge_phase[i]);
    }
    return v;
  };

  Tensor t(size, size, 3);
  const double step = 1.0 / kSupersample;
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      Rgb acc{0, 0, 0};
      for (int i = 0; i < kSupersample; ++i) {
        for (int k = 0; k < kSupersample; ++k) {
          const double ur = (r + (i + 0.5) * step) / size;
          const double uc = (c + (k + 0.5) * step) / size;
          Rgb px;
          if (ur >= water_row) {
            const double tex =
                a * 0.08 * std::sin(2.0 * std::numbers::pi * tex_freq_r * ur) *
                std::sin(2.0 * std::numbers::pi * tex_freq_c * uc + tex_phase);
            const double depth = (ur - water_row) / (1.0 - water_row);
            px = {water.r * (1.0 - 0.3 * depth) + tex,
                  water.g * (1.0 - 0.3 * depth) + tex,
                  water.b * (1.0 - 0.3 * depth) + tex};
          } else if (ur >= ridge(uc)) {
            const double shade = 1.0 - 0.4 * (ur - ridge_base) / water_row;
            px = {hill.r * shade, hill.g * shade, hill.b * shade};
          } else {
            const double w = ur / ridge_base;
            px = {sky_top.r + (sky_low.r - sky_top.r) * w,
                  sky_top.g + (sky_low.g - sky_top.g) * w,
                  sky_top.b + (sky_low.b - sky_top.b) * w};
          }
          acc.r += px.r;
          acc.g += px.g;
          acc.b += px.b;
        }
      }
      const double n = kSupersample * kSupersample;
      t.at(r, c, 0) = acc.r / n;
      t.at(r, c, 1) = acc.g / n;
      t.at(r, c, 2) = acc.b / n;
    }
  }

  SyntheticSample sample;
  sample.kind = SampleKind::kScene;
  sample.seed = seed;
  sample.image = finish(std::move(t));
  return sample;
}

Manifest build_manifest(SampleKind kind, int count, std::uint64_t base_seed,
                        int size) {
  if (count < 1) throw ConfigError("manifest count must be >= 1");
  require_size(size);
  Manifest m;
  m.kind = kind;
  m.base_seed = base_seed;
  m.size = size;
  for (int i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "%s-%04d", to_string(kind).c_str(), i);
    m.samples.push_back(
        {id, derive_seed(base_seed, static_cast<std::uint64_t>(i)), kind, size,
         std::nullopt});
  }
  return m;
}

std::string manifest_to_json(const Manifest& m) {
  nlohmann::json j;
  j["kind"] = to_string(m.kind);
  j["base_seed"] = m.base_seed;
  j["size"] = m.size;
  j["count"] = m.samples.size();
  j["samples"] = nlohmann::json::array();
  for (const ManifestEntry& e : m.samples) {
    nlohmann::json s{{"id", e.id},
                     {"seed", e.seed},
                     {"kind", to_string(e.kind)},
                     {"size", e.size}};
    if (e.png) s["png"] = *e.png;
    j["samples"].push_back(std::move(s));
  }
  return j.dump(2);
}

Manifest manifest_from_json(const std::string& text) {
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    Manifest m;
    m.kind = parse_sample_kind(j.at("kind").get<std::string>());
    m.base_seed = j.at("base_seed").get<std::uint64_t>();
    m.size = j.at("size").get<int>();
    for (const auto& s : j.at("samples")) {
      ManifestEntry e;
      e.id = s.at("id").get<std::string>();
      e.seed = s.at("seed").get<std::uint64_t>();
      e.kind = parse_sample_kind(s.at("kind").get<std::string>());
      e.size = s.at("size").get<int>();
      if (s.contains("png")) e.png = s.at("png").get<std::string>();
      m.samples.push_back(std::move(e));
    }
    if (m.samples.empty()) throw ConfigError("manifest lists no samples");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
}

void save_manifest(const Manifest& manifest, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << manifest_to_json(manifest) << '\n';
}

Manifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return manifest_from_json(ss.str());
}

SyntheticSample generate(const ManifestEntry& entry) {
  SyntheticSample s = entry.kind == SampleKind::kFace
                          ? gen_face(entry.seed, entry.size)
                          : gen_scene(entry.seed, entry.size);
  s.id = entry.id;
  return s;
}

std::vector<SyntheticSample> generate_all(const Manifest& manifest) {
  std::vector<SyntheticSample> out;
  out.reserve(manifest.samples.size());
  for (const ManifestEntry& e : manifest.samples) out.push_back(generate(e));
  return out;
}

}  // namespace kgad
