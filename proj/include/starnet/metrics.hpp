#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "starnet/image.hpp"

namespace starnet {

enum class PsnrMode { Rgb, Luma };

inline constexpr double kPsnrCap = 100.0;

// 10*log10(1/MSE) on [0,1] values; zero error reports kPsnrCap.
inline double psnr(const ImageRGB& pred, const ImageRGB& gt, PsnrMode mode = PsnrMode::Rgb) {
  STARNET_EXPECT(pred.height() == gt.height() && pred.width() == gt.width(), "psnr: image sizes differ");
  double se = 0;
  std::size_t count = 0;
  if (mode == PsnrMode::Rgb) {
    for (std::size_t i = 0; i < pred.pixels().size(); ++i) {
      const double d = static_cast<double>(pred.pixels()[i]) - gt.pixels()[i];
      se += d * d;
    }
    count = pred.pixels().size();
  } else {
    const auto a = luma_plane(pred), b = luma_plane(gt);
    for (std::size_t i = 0; i < a.size(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
    count = a.size();
  }
  const double mse = se / static_cast<double>(count);
  if (mse <= 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

struct SsimParams {
  static constexpr int window = 11;
  static constexpr double sigma = 1.5;
  static constexpr double k1 = 0.01;
  static constexpr double k2 = 0.03;
  static constexpr double dynamic_range = 1.0;
};

inline std::array<double, SsimParams::window> ssim_gaussian() {
  std::array<double, SsimParams::window> g{};
  double total = 0;
  const int half = SsimParams::window / 2;
  for (int i = 0; i < SsimParams::window; ++i) {
    const double x = i - half;
    g[i] = std::exp(-x * x / (2 * SsimParams::sigma * SsimParams::sigma));
    total += g[i];
  }
  for (auto& v : g) v /= total;
  return g;
}

// Single-scale SSIM on luma, Gaussian-weighted 11x11 windows, averaged over
// every window position that lies fully inside the image.
inline double ssim(const ImageRGB& pred, const ImageRGB& gt) {
  STARNET_EXPECT(pred.height() == gt.height() && pred.width() == gt.width(), "ssim: image sizes differ");
  constexpr int win = SsimParams::window;
  const int h = pred.height(), w = pred.width();
  STARNET_EXPECT(h >= win && w >= win, "ssim: image smaller than the 11x11 window");
  const auto g = ssim_gaussian();
  const auto a = luma_plane(pred), b = luma_plane(gt);
  const int oh = h - win + 1, ow = w - win + 1;

  // Horizontal pass over five moment planes, then vertical.
  std::array<std::vector<double>, 5> horiz;
  for (auto& p : horiz) p.assign(static_cast<std::size_t>(h) * ow, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s[5] = {0, 0, 0, 0, 0};
      for (int k = 0; k < win; ++k) {
        const double va = a[static_cast<std::size_t>(y) * w + x + k], vb = b[static_cast<std::size_t>(y) * w + x + k];
        s[0] += g[k] * va;
        s[1] += g[k] * vb;
        s[2] += g[k] * va * va;
        s[3] += g[k] * vb * vb;
        s[4] += g[k] * (va * vb);
      }
      for (int m = 0; m < 5; ++m) horiz[m][static_cast<std::size_t>(y) * ow + x] = s[m];
    }
  const double c1 = std::pow(SsimParams::k1 * SsimParams::dynamic_range, 2);
  const double c2 = std::pow(SsimParams::k2 * SsimParams::dynamic_range, 2);
  double total = 0;
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s[5] = {0, 0, 0, 0, 0};
      for (int k = 0; k < win; ++k)
        for (int m = 0; m < 5; ++m) s[m] += g[k] * horiz[m][static_cast<std::size_t>(y + k) * ow + x];
      const double mu_a = s[0], mu_b = s[1];
      const double var_a = s[2] - mu_a * mu_a, var_b = s[3] - mu_b * mu_b, cov = s[4] - mu_a * mu_b;
      total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
    }
  return total / (static_cast<double>(oh) * ow);
}

// Interpolation error: RMSE of 8-bit luma.
inline double interp_error(const ImageRGB& pred, const ImageRGB& gt) {
  STARNET_EXPECT(pred.height() == gt.height() && pred.width() == gt.width(), "interp_error: image sizes differ");
  const auto a = luma_plane(pred), b = luma_plane(gt);
  double se = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = 255.0 * (a[i] - b[i]);
    se += d * d;
  }
  return std::sqrt(se / static_cast<double>(a.size()));
}

}  // namespace starnet
