#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>

#include "starnet/flow.hpp"

using namespace starnet;
namespace fs = std::filesystem;

namespace {

// Periodic texture so a wrapped translation is an exact shift.
ImageRGB texture(int h, int w, int shift_x = 0) {
  ImageRGB im(h, w);
  const double k = 2 * M_PI / w, q = 2 * M_PI / h;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double xs = x - shift_x;
      const double v = 0.5 + 0.2 * std::sin(3 * k * xs + 2 * q * y) + 0.15 * std::cos(5 * k * xs - 3 * q * y) +
                       0.1 * std::sin(2 * k * xs + 7 * q * y + 1.0);
      for (int c = 0; c < 3; ++c) im.at(y, x, c) = static_cast<float>(v);
    }
  return im;
}

FlowField random_flow(std::mt19937_64& rng, int h, int w, float lo = -5, float hi = 5) {
  std::uniform_real_distribution<float> d(lo, hi);
  FlowField f(h, w);
  for (auto& x : f.vectors()) x = d(rng);
  return f;
}

fs::path tmp(const std::string& name) { return fs::temp_directory_path() / ("starnet_flow_test_" + name); }

}  // namespace

TEST(EstimateFlow, IdenticalFramesGiveZeroFlow) {
  auto im = texture(48, 64);
  auto f = estimate_flow(im, im);
  double mean = 0;
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x) mean += std::hypot(f.u(y, x), f.v(y, x));
  EXPECT_LE(mean / (f.height() * f.width()), 0.05);
}

TEST(EstimateFlow, RecoversTranslation) {
  auto a = texture(64, 64), b = texture(64, 64, 3);
  auto f = estimate_flow(a, b);
  std::vector<float> us;
  for (int y = 8; y < 56; ++y)
    for (int x = 8; x < 56; ++x) us.push_back(f.u(y, x));
  std::nth_element(us.begin(), us.begin() + us.size() / 2, us.end());
  EXPECT_NEAR(us[us.size() / 2], 3.0, 0.5);
}

TEST(EstimateFlow, TexturelessInputGivesFiniteZeroFlow) {
  ImageRGB a(32, 32, 0.4f);
  auto f = estimate_flow(a, a);
  for (float v : f.vectors()) {
    ASSERT_TRUE(std::isfinite(v));
    EXPECT_NEAR(v, 0.0f, 1e-6);
  }
}

TEST(EstimateFlow, DeterministicAndChecksDimensions) {
  auto a = texture(32, 40), b = texture(32, 40, 2);
  EXPECT_EQ(estimate_flow(a, b), estimate_flow(a, b));
  EXPECT_THROW(estimate_flow(a, texture(32, 32)), ContractViolation);
}

TEST(Flo, TwoByTwoIsFortyFourBytes) {
  FlowField f(2, 2, 1.5f, -2.0f);
  auto bytes = encode_flo(f);
  EXPECT_EQ(bytes.size(), 44u);
  EXPECT_EQ(detail::get_f32le(bytes.data()), 202021.25f);
  EXPECT_EQ(detail::get_u32le(bytes.data() + 4), 2u);
}

TEST(Flo, FileRoundTripIsBitExact) {
  std::mt19937_64 rng(1);
  auto f = random_flow(rng, 7, 5, -100, 100);
  f.u(0, 0) = -0.0f;
  f.v(1, 1) = 1e-38f;
  const auto p = tmp("rt.flo");
  write_flo(f, p.string());
  EXPECT_EQ(fs::file_size(p), 12u + 7 * 5 * 8);
  auto g = read_flo(p.string());
  ASSERT_EQ(g.height(), 7);
  ASSERT_EQ(g.width(), 5);
  for (std::size_t i = 0; i < f.vectors().size(); ++i)
    EXPECT_EQ(std::bit_cast<std::uint32_t>(f.vectors()[i]), std::bit_cast<std::uint32_t>(g.vectors()[i]));
  EXPECT_EQ(encode_flo(g), encode_flo(f));
  fs::remove(p);
}

TEST(Flo, BadMagicAndTruncationAreFormatErrors) {
  auto bytes = encode_flo(FlowField(3, 3, 1, 1));
  auto bad = bytes;
  bad[0] ^= 1;
  EXPECT_THROW(decode_flo(bad), FormatError);
  auto cut = bytes;
  cut.resize(cut.size() - 1);
  EXPECT_THROW(decode_flo(cut), FormatError);
  EXPECT_THROW(decode_flo(std::vector<char>(bytes.begin(), bytes.begin() + 8)), FormatError);
  EXPECT_THROW(read_flo("/nonexistent/x.flo"), IoError);
}

TEST(Compose, IsVectorAddition) {
  FlowField z(4, 4);
  EXPECT_EQ(compose_flows(z, z), z);
  auto c = compose_flows(FlowField(4, 4, 1, 0), FlowField(4, 4, 0, 2));
  EXPECT_EQ(c, FlowField(4, 4, 1, 2));
  std::mt19937_64 rng(2);
  auto f = random_flow(rng, 4, 4);
  auto neg = f;
  for (auto& v : neg.vectors()) v = -v;
  EXPECT_EQ(compose_flows(f, neg), z);
  EXPECT_THROW(compose_flows(z, FlowField(4, 5)), ContractViolation);
}

TEST(Compose, AssociativeAndCommutative) {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 20; ++k) {
    auto a = random_flow(rng, 5, 6), b = random_flow(rng, 5, 6), c = random_flow(rng, 5, 6);
    EXPECT_EQ(compose_flows(a, b), compose_flows(b, a));
    auto l = compose_flows(compose_flows(a, b), c), r = compose_flows(a, compose_flows(b, c));
    for (std::size_t i = 0; i < l.vectors().size(); ++i) EXPECT_NEAR(l.vectors()[i], r.vectors()[i], 1e-5);
  }
}

TEST(ResizeFlow, SameSizeIsIdentity) {
  std::mt19937_64 rng(4);
  auto f = random_flow(rng, 6, 9);
  auto g = resize_flow(f, 6, 9);
  for (std::size_t i = 0; i < f.vectors().size(); ++i) EXPECT_NEAR(g.vectors()[i], f.vectors()[i], 1e-6);
}

TEST(ResizeFlow, ScalingLaw) {
  for (int k : {2, 3, 4}) {
    auto g = resize_flow(FlowField(5, 7, 1, 1), 5 * k, 7 * k);
    for (float v : g.vectors()) EXPECT_FLOAT_EQ(v, static_cast<float>(k));
  }
  auto g = resize_flow(FlowField(8, 8, 1, -2), 8, 16);
  EXPECT_FLOAT_EQ(g.u(3, 3), 2.0f);
  EXPECT_FLOAT_EQ(g.v(3, 3), -2.0f);
}

TEST(ResizeFlow, SmoothFieldSurvivesDownUp) {
  FlowField f(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      f.u(y, x) = 3 * std::sin(2 * M_PI * x / 64.0) * std::cos(2 * M_PI * y / 64.0);
      f.v(y, x) = 2 * std::cos(2 * M_PI * (x + y) / 64.0);
    }
  auto back = resize_flow(resize_flow(f, 32, 32), 64, 64);
  double se = 0;
  for (std::size_t i = 0; i < f.vectors().size(); ++i) se += std::pow(back.vectors()[i] - f.vectors()[i], 2);
  EXPECT_LE(std::sqrt(se / f.vectors().size()), 0.1);
}

// A displacement field moves pixel p to p + f(p). After transforming both
// frames by g the transformed field must move g(p) to g(p + f(p)).
TEST(FlowTransforms, EquivariantWithRasterTransforms) {
  const int h = 6, w = 9;
  FlowField f(h, w);
  std::mt19937_64 rng(5);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      f.u(y, x) = static_cast<float>(rng() % 7) - 3;
      f.v(y, x) = static_cast<float>(rng() % 5) - 2;
    }
  using Map = std::function<std::pair<double, double>(double, double)>;  // (y, x) -> (y', x')
  struct Case {
    FlowField g;
    Map m;
  };
  std::vector<Case> cases = {
      {rotate_flow_cw(f), [&](double y, double x) { return std::pair{x, h - 1 - y}; }},
      {flip_flow(f, true), [&](double y, double x) { return std::pair{y, w - 1 - x}; }},
      {flip_flow(f, false), [&](double y, double x) { return std::pair{h - 1 - y, x}; }},
  };
  for (const auto& c : cases)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        auto [py, px] = c.m(y, x);
        auto [qy, qx] = c.m(y + f.v(y, x), x + f.u(y, x));
        const int iy = static_cast<int>(py), ix = static_cast<int>(px);
        EXPECT_FLOAT_EQ(c.g.u(iy, ix), qx - px);
        EXPECT_FLOAT_EQ(c.g.v(iy, ix), qy - py);
      }
  auto r = f;
  for (int k = 0; k < 4; ++k) r = rotate_flow_cw(r);
  EXPECT_EQ(r, f);
  EXPECT_EQ(flip_flow(flip_flow(f, true), true), f);
  auto cr = crop_flow(f, 1, 2, 3, 4);
  EXPECT_EQ(cr.u(0, 0), f.u(1, 2));
  EXPECT_THROW(crop_flow(f, 4, 0, 3, 3), ContractViolation);
}
