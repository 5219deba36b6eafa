#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "kgad/errors.hpp"
#include "kgad/evaluation.hpp"
#include "kgad/knowledge.hpp"
#include "kgad/rng.hpp"
#include "kgad/synthetic.hpp"

using namespace kgad;

TEST(Faces, DeterministicAndOnGrid) {
  const SyntheticSample a = gen_face(123, 64), b = gen_face(123, 64);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.landmarks, b.landmarks);
  EXPECT_EQ(quantize_to_grid(a.image), a.image);
  EXPECT_NE(gen_face(124, 64).image, a.image);
  EXPECT_THROW(gen_face(1, 31), ConfigError);
}

TEST(Faces, ZeroJitterUsesCanonicalLayout) {
  const SyntheticSample s = gen_face(99, 64, FaceOptions{0.0});
  EXPECT_EQ(s.landmarks, FaceLayout{}.landmarks(64));
  EXPECT_EQ(FaceLayout{}.landmarks(64)[0], layout_to_pixel(FaceLayout{}.left_eye, 64));
}

TEST(Faces, LandmarksInsideAndSeparated) {
  for (int s = 0; s < 64; ++s) {
    const SyntheticSample f = gen_face(derive_seed(7, s), 64);
    ASSERT_EQ(f.landmarks.size(), 5u);
    for (std::size_t i = 0; i < 5; ++i) {
      EXPECT_GE(f.landmarks[i].row, 0.0);
      EXPECT_LE(f.landmarks[i].row, 63.0);
      EXPECT_GE(f.landmarks[i].col, 0.0);
      EXPECT_LE(f.landmarks[i].col, 63.0);
      for (std::size_t j = i + 1; j < 5; ++j)
        EXPECT_GE(std::hypot(f.landmarks[i].row - f.landmarks[j].row,
                             f.landmarks[i].col - f.landmarks[j].col), 6.0);
    }
  }
}

TEST(Scenes, DeterministicDiverseAndDegenerate) {
  EXPECT_EQ(gen_scene(5, 48).image, gen_scene(5, 48).image);
  const Image a = gen_scene(5, 48).image, b = gen_scene(6, 48).image;
  std::size_t differ = 0;
  for (std::size_t i = 0; i < a.size(); i += 3) {
    bool d = false;
    for (int ch = 0; ch < 3; ++ch) d = d || a[i + ch] != b[i + ch];
    differ += d;
  }
  EXPECT_GE(differ, a.size() / 3 / 100);
  const Image flat = gen_scene(5, 48, SceneOptions{0.0}).image;
  for (int r = 0; r < 48; ++r)
    for (int c = 1; c < 48; ++c)
      for (int ch = 0; ch < 3; ++ch) EXPECT_EQ(flat.at(r, c, ch), flat.at(r, 0, ch));
  EXPECT_TRUE(gen_scene(5, 48).landmarks.empty());
}

TEST(Manifest, RoundTripAndRegeneration) {
  const Manifest one = build_manifest(SampleKind::kFace, 1, 7, 64);
  EXPECT_EQ(manifest_from_json(manifest_to_json(one)), one);
  const Manifest m = build_manifest(SampleKind::kFace, 32, 7, 64);
  ASSERT_EQ(m.samples.size(), 32u);
  const auto path = (std::filesystem::temp_directory_path() / "kgad_manifest.json").string();
  save_manifest(m, path);
  const auto a = generate_all(m), b = generate_all(load_manifest(path));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].image, b[i].image);
  EXPECT_THROW(build_manifest(SampleKind::kFace, 0, 7, 64), ConfigError);
  EXPECT_THROW(manifest_from_json("{]"), FormatError);
}

TEST(Manifest, CleanFakesOfIdentityModelAreDetected) {
  const auto samples = generate_all(build_manifest(SampleKind::kFace, 32, 7, 64));
  const LandmarkExtractor ex;
  int detected = 0;
  for (const auto& s : samples) {
    const KnowledgeFeatures f = ex.extract(s.image);
    detected += is_detected(f, f);
  }
  EXPECT_EQ(detected, 32);
}
