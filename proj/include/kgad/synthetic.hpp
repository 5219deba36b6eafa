#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kgad/image.hpp"

namespace kgad {

// (row, col) in pixel units; pixel (r, c) is centred on (r, c).
struct Point {
  double row = 0.0;
  double col = 0.0;
  bool operator==(const Point&) const = default;
};

enum class SampleKind { kFace, kScene };

std::string to_string(SampleKind kind);
SampleKind parse_sample_kind(const std::string& text);

// Face layout in units of the image side. The landmark order is left eye,
// right eye, nose, left mouth corner, right mouth corner.
struct FaceLayout {
  static constexpr int kLandmarks = 5;
  Point face_center{0.52, 0.50};
  double face_radius_row = 0.40;
  double face_radius_col = 0.31;
  Point left_eye{0.40, 0.36};
  Point right_eye{0.40, 0.64};
  double eye_radius = 0.055;
  Point nose_apex{0.45, 0.50};
  double nose_base_row = 0.58;
  double nose_half_width = 0.05;
  double mouth_row = 0.70;
  double mouth_half_width = 0.11;
  double mouth_sag = 0.04;
  double mouth_thickness = 0.024;

  // Landmarks of this layout for a size x size image.
  std::vector<Point> landmarks(int size) const;
};

// Maps a unit-square layout coordinate to pixel coordinates.
Point layout_to_pixel(Point p, int size);

struct FaceOptions {
  double jitter = 1.0;  // 0 renders the canonical layout and colours
};

struct SceneOptions {
  double amplitude = 1.0;  // 0 flattens the ridge and removes texture
};

struct SyntheticSample {
  std::string id;
  SampleKind kind = SampleKind::kFace;
  std::uint64_t seed = 0;
  Image image;
  std::vector<Point> landmarks;  // face kind only
};

// Anti-aliased synthetic face quantized to the 1/255 grid. size >= 32.
SyntheticSample gen_face(std::uint64_t seed, int size,
                         const FaceOptions& options = {});
// Sky gradient, sinusoidal ridge and textured lower band. size >= 32.
SyntheticSample gen_scene(std::uint64_t seed, int size,
                          const SceneOptions& options = {});

// The jittered layout gen_face uses for `seed`.
FaceLayout face_layout(std::uint64_t seed, const FaceOptions& options = {});

struct ManifestEntry {
  std::string id;
  std::uint64_t seed = 0;
  SampleKind kind = SampleKind::kFace;
  int size = 0;
  std::optional<std::string> png;
  bool operator==(const ManifestEntry&) const = default;
};

struct Manifest {
  SampleKind kind = SampleKind::kFace;
  std::uint64_t base_seed = 0;
  int size = 64;
  std::vector<ManifestEntry> samples;
  bool operator==(const Manifest&) const = default;
};

Manifest build_manifest(SampleKind kind, int count, std::uint64_t base_seed,
                        int size);
std::string manifest_to_json(const Manifest& manifest);
Manifest manifest_from_json(const std::string& text);
void save_manifest(const Manifest& manifest, const std::string& path);
Manifest load_manifest(const std::string& path);

SyntheticSample generate(const ManifestEntry& entry);
std::vector<SyntheticSample> generate_all(const Manifest& manifest);

}  // namespace kgad
