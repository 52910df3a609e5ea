#include <gtest/gtest.h>

#include <random>

#include "starnet/metrics.hpp"
#include "support/oracles.hpp"

using namespace starnet;

namespace {

ImageRGB random_image(std::mt19937_64& rng, int h, int w) {
  std::uniform_real_distribution<float> d(0, 1);
  ImageRGB im(h, w);
  for (auto& v : im.pixels()) v = d(rng);
  return im;
}

}  // namespace

TEST(Psnr, Anchors) {
  ImageRGB a(8, 8, 0.25f), b(8, 8, 0.75f), c(8, 8, 0.35f);
  EXPECT_EQ(psnr(a, a), kPsnrCap);
  EXPECT_NEAR(psnr(a, b), 6.0206, 1e-3);
  EXPECT_NEAR(psnr(a, c), 20.0, 1e-4);
  EXPECT_NEAR(psnr(a, b, PsnrMode::Luma), 6.0206, 1e-3);
}

TEST(Psnr, StrictlyDecreasesWithErrorScale) {
  std::mt19937_64 rng(1);
  ImageRGB gt(16, 16, 0.5f), e = random_image(rng, 16, 16);
  double prev = kPsnrCap + 1;
  for (double alpha : {0.05, 0.1, 0.2, 0.4, 0.8}) {
    ImageRGB p = gt;
    for (std::size_t i = 0; i < p.pixels().size(); ++i) p.pixels()[i] += static_cast<float>(alpha * (e.pixels()[i] - 0.5));
    const double v = psnr(p, gt);
    EXPECT_LT(v, prev);
    prev = v;
  }
}

TEST(Ssim, IdenticalIsOne) {
  std::mt19937_64 rng(2);
  auto a = random_image(rng, 20, 24);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
}

TEST(Ssim, ConstantsReduceToLuminanceTerm) {
  ImageRGB a(16, 16, 0.2f), b(16, 16, 0.6f);
  const double m1 = 0.2, m2 = 0.6, c1 = 1e-4;
  EXPECT_NEAR(ssim(a, b), (2 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1), 1e-5);
}

TEST(Ssim, InvertedBinaryImageDisagrees) {
  ImageRGB a(32, 32), b(32, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      for (int c = 0; c < 3; ++c) {
        a.at(y, x, c) = ((x / 3 + y / 5) % 2) ? 1.0f : 0.0f;
        b.at(y, x, c) = 1.0f - a.at(y, x, c);
      }
  EXPECT_LT(ssim(a, b), 0.2);
  EXPECT_NEAR(ssim(a, b), oracle::ssim(a, b), 1e-4);
}

TEST(Ssim, SymmetricAndMatchesOracle) {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 20; ++k) {
    auto a = random_image(rng, 11 + k % 5, 13 + k % 3), b = random_image(rng, 11 + k % 5, 13 + k % 3);
    EXPECT_DOUBLE_EQ(ssim(a, b), ssim(b, a));
    EXPECT_NEAR(ssim(a, b), oracle::ssim(a, b), 1e-4);
  }
}

TEST(Ssim, TooSmallIsContractViolation) { EXPECT_THROW(ssim(ImageRGB(10, 20), ImageRGB(10, 20)), ContractViolation); }

TEST(InterpError, Anchors) {
  ImageRGB a(6, 6, 0.4f), b(6, 6, 0.4f + 2.0f / 255.0f);
  EXPECT_EQ(interp_error(a, a), 0.0);
  EXPECT_NEAR(interp_error(a, b), 2.0, 1e-4);
}

TEST(InterpError, MatchesOracle) {
  std::mt19937_64 rng(4);
  for (int k = 0; k < 20; ++k) {
    auto a = random_image(rng, 7, 9), b = random_image(rng, 7, 9);
    EXPECT_NEAR(interp_error(a, b), oracle::interp_error(a, b), 1e-4);
  }
}

TEST(Metrics, SizeMismatchIsContractViolation) {
  EXPECT_THROW(psnr(ImageRGB(4, 4), ImageRGB(4, 5)), ContractViolation);
  EXPECT_THROW(interp_error(ImageRGB(4, 4), ImageRGB(5, 4)), ContractViolation);
}
