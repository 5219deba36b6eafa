#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "kgad/errors.hpp"
#include "kgad/fsim.hpp"
#include "kgad/perceptual.hpp"
#include "kgad/ssim.hpp"
#include "kgad/tensor_file.hpp"
#include "oracles.hpp"

using namespace kgad;

namespace {

Image edge_fixture(int n) {
  Tensor t(n, n, 1);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const bool in_square = r >= n / 4 && r < 3 * n / 4 && c >= n / 4 && c < 3 * n / 4;
      t.at(r, c, 0) = in_square ? 0.8 : 0.2 + 0.01 * ((r * 7 + c * 3) % 5);
    }
  return Image::from_tensor(t);
}

Image box_blur(const Image& img) {
  Tensor t(img.height(), img.width(), img.channels());
  for (int r = 0; r < img.height(); ++r)
    for (int c = 0; c < img.width(); ++c)
      for (int ch = 0; ch < img.channels(); ++ch) {
        double acc = 0;
        int n = 0;
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            const int rr = r + dr, cc = c + dc;
            if (rr < 0 || rr >= img.height() || cc < 0 || cc >= img.width()) continue;
            acc += img.at(rr, cc, ch);
            ++n;
          }
        t.at(r, c, ch) = acc / n;
      }
  return Image::from_tensor(t);
}

}  // namespace

TEST(Ssim, IdentityIsOne) {
  const Image x = oracle::random_image(1, 20, 20, 3);
  EXPECT_EQ(ssim(x, x).value, 1.0);
  EXPECT_EQ(ssimd(x, x).value, 0.0);
}

TEST(Ssim, ConstantImagesClosedForm) {
  const SsimConfig cfg;
  const double c1 = cfg.c1();
  const double s = ssim(Image(16, 16, 1, 0.0), Image(16, 16, 1, 1.0)).value;
  EXPECT_NEAR(s, c1 / (1.0 + c1), 1e-9);
  EXPECT_NEAR(ssimd(Image(16, 16, 1, 0.0), Image(16, 16, 1, 1.0)).value, 1.0 - c1 / (1.0 + c1), 1e-9);
}

TEST(Ssim, HalfSplitMatchesWindowOracle) {
  Tensor t(12, 12, 1);
  for (int r = 0; r < 12; ++r)
    for (int c = 0; c < 12; ++c) t.at(r, c, 0) = c < 6 ? 0.0 : 1.0;
  const Image a = Image::from_tensor(t), b(12, 12, 1, 0.5);
  EXPECT_NEAR(ssim(a, b).value, oracle::ssim(a, b), 1e-12);
}

TEST(Ssim, RandomPairsMatchWindowOracleAndAreSymmetric) {
  for (int k = 0; k < 5; ++k) {
    const Image a = oracle::random_image(10 + k, 18, 17, 3), b = oracle::random_image(20 + k, 18, 17, 3);
    const double s = ssim(a, b).value;
    EXPECT_NEAR(s, oracle::ssim(a, b), 1e-12);
    EXPECT_NEAR(s, ssim(b, a).value, 1e-12);
    EXPECT_GE(s, -1.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(Ssim, ErrorsOnShapeAndSize) {
  EXPECT_THROW(ssim(Image(16, 16, 1), Image(16, 16, 3)), DimensionError);
  EXPECT_THROW(ssim(Image(10, 10, 1), Image(10, 10, 1)), SizeError);
}

TEST(SsimGradient, ZeroAtIdentity) {
  const Image a = oracle::random_image(4, 16, 16, 3);
  EXPECT_LT(ssimd_gradient(a, a).max_abs(), 1e-15);
}

TEST(SsimGradient, UniformForConstantPair) {
  // Pixels covered by every window offset (rows and columns 10..21 of a
  // 32 x 32 image) receive identical gradients; border pixels sit in fewer
  // valid windows.
  const Tensor g = ssimd_gradient(Image(32, 32, 1, 0.3), Image(32, 32, 1, 0.6));
  const double ref = g.at(10, 10, 0);
  EXPECT_NE(ref, 0.0);
  for (int r = 10; r <= 21; ++r)
    for (int c = 10; c <= 21; ++c) EXPECT_NEAR(g.at(r, c, 0), ref, 1e-15 + 1e-12 * std::abs(ref));
}

TEST(SsimGradient, MatchesCentralDifferences) {
  for (int k = 0; k < 20; ++k) {
    const Image a = oracle::random_image(100 + k, 16, 16, k % 2 ? 3 : 1, 0.1, 0.9);
    const Image b = oracle::random_image(200 + k, 16, 16, a.channels(), 0.1, 0.9);
    const Tensor g = ssimd_gradient(a, b);
    const auto idx = oracle::sample_indices(k, g.size(), 40);
    std::vector<double> analytic;
    for (auto i : idx) analytic.push_back(g[i]);
    const auto numeric = oracle::central_difference(
        [&](const Tensor& t) { return ssimd(a, Image::from_tensor(t)).value; }, b.tensor(), idx, 1e-4);
    EXPECT_LT(oracle::max_relative_error(analytic, numeric), 1e-4) << "fixture " << k;
  }
}

TEST(Ssim, MonotoneAlongNoiseDirection) {
  Tensor base(24, 24, 1);
  for (int r = 0; r < 24; ++r)
    for (int c = 0; c < 24; ++c) base.at(r, c, 0) = 0.5 + 0.2 * std::sin(r / 5.0) * std::cos(c / 7.0);
  const Image x = Image::from_tensor(base);
  const Tensor n = oracle::random_tensor(77, base.shape(), -1.0, 1.0);
  double prev = -1;
  for (double t : {0.0, 0.05, 0.1, 0.2}) {
    Tensor b = base;
    for (std::size_t i = 0; i < b.size(); ++i) b[i] += t * n[i];
    const double d = ssimd(x, Image::clamped(b)).value;
    EXPECT_GE(d, prev);
    prev = d;
  }
}

TEST(Fsim, IdentityAndConstants) {
  const Image x = oracle::random_image(2, 32, 32, 3);
  EXPECT_EQ(fsim(x, x).value, 1.0);
  EXPECT_EQ(fsimd(x, x).value, 0.0);
  EXPECT_EQ(fsim(Image(32, 32, 1, 0.2), Image(32, 32, 1, 0.7)).value, 1.0);
  EXPECT_THROW(fsim(Image(32, 32, 1), Image(32, 33, 1)), DimensionError);
}

TEST(Fsim, PhaseCongruencyMatchesDirectDft) {
  const Image img = edge_fixture(32);
  Tensor plane = luminance(img);
  for (double& v : plane.values()) v *= 255.0;
  const Tensor fast = phase_congruency(plane);
  const Tensor slow = oracle::phase_congruency(plane);
  for (std::size_t i = 0; i < fast.size(); ++i) EXPECT_NEAR(fast[i], slow[i], 1e-6);
}

TEST(Fsim, EdgeVersusBlurMatchesDirectOracle) {
  const Image a = edge_fixture(32), b = box_blur(a);
  const double got = fsim(a, b).value;
  EXPECT_NEAR(got, oracle::fsim(a, b), 1e-6);
  EXPECT_LT(got, 1.0);
  const Image c = oracle::random_image(8, 32, 32, 3), d = box_blur(c);
  EXPECT_NEAR(fsim(c, d).value, oracle::fsim(c, d), 1e-6);
  EXPECT_NEAR(fsim(c, d).value, fsim(d, c).value, 1e-12);
}

TEST(Perceptual, IdentitySymmetryAndOracle) {
  const PerceptualDistance dist;
  const Image a = oracle::random_image(11, 32, 32, 3), b = oracle::random_image(12, 32, 32, 3);
  EXPECT_EQ(dist(a, a).value, 0.0);
  EXPECT_NEAR(dist(a, b).value, dist(b, a).value, 1e-12);
  EXPECT_GT(dist(a, b).value, 0.0);
  EXPECT_NEAR(dist(a, b).value, oracle::perceptual_distance(dist.pyramid(), a, b), 1e-10);
  const Image g = oracle::random_image(13, 32, 32, 1);
  const Image g2 = oracle::random_image(14, 32, 32, 1);
  EXPECT_NEAR(dist(g, g2).value, oracle::perceptual_distance(dist.pyramid(), g, g2), 1e-10);
}

TEST(Perceptual, PyramidFeaturesMatchDirectConvolution) {
  const ConvPyramid p = ConvPyramid::seeded(5);
  const Tensor x = oracle::random_tensor(6, {16, 16, 3}, 0.0, 1.0);
  const auto acts = p.forward(x);
  const auto ref = oracle::pyramid_features(p, x);
  ASSERT_EQ(acts.features.size(), ref.size());
  for (std::size_t k = 0; k < ref.size(); ++k) {
    ASSERT_EQ(acts.features[k].shape(), ref[k].shape());
    for (std::size_t i = 0; i < ref[k].size(); ++i) EXPECT_NEAR(acts.features[k][i], ref[k][i], 1e-12);
  }
}

TEST(Perceptual, ExternalWeightsRoundTrip) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "kgad_test_weights";
  fs::create_directories(dir);
  const ConvPyramid p = ConvPyramid::seeded(99);
  write_tensor_file((dir / "w.f32").string(), p.to_bundle());
  const PerceptualDistance ext = PerceptualDistance::from_file((dir / "w.f32").string());
  const Image a = oracle::random_image(1, 32, 32, 3), b = oracle::random_image(2, 32, 32, 3);
  // Weights are narrowed to float32, so compare with the oracle on the loaded pyramid.
  EXPECT_NEAR(ext(a, b).value, oracle::perceptual_distance(ext.pyramid(), a, b), 1e-10);
  EXPECT_NEAR(ext(a, b).value, PerceptualDistance(p)(a, b).value, 1e-5);
}

TEST(Mse, ArithmeticAndPsnr) {
  EXPECT_EQ(mse(Image(4, 4, 1, 0.0), Image(4, 4, 1, 1.0)).value, 1.0);
  EXPECT_EQ(mse(Image(4, 4, 1, 0.0), Image(4, 4, 1, 0.5)).value, 0.25);
  EXPECT_NEAR(psnr(Image(4, 4, 1, 0.0), Image(4, 4, 1, 0.5)).value, 6.0206, 1e-4);
  const Image x = oracle::random_image(3, 4, 4, 3);
  EXPECT_EQ(mse(x, x).value, 0.0);
  EXPECT_TRUE(std::isinf(psnr(x, x).value));
}
