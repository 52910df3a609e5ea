#pragma once

// RGB images in [0,1], bicubic resampling, geometric augmentation and 8-bit
// quantization.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "starnet/errors.hpp"

namespace starnet {

class ImageRGB {
 public:
  ImageRGB() = default;
  ImageRGB(int height, int width, float fill = 0.0f) : h_(height), w_(width) {
    STARNET_EXPECT(height > 0 && width > 0, "image dimensions must be positive");
    px_.assign(static_cast<std::size_t>(height) * width * 3, fill);
  }

  int height() const { return h_; }
  int width() const { return w_; }
  bool empty() const { return px_.empty(); }

  float& at(int y, int x, int c) { return px_[(static_cast<std::size_t>(y) * w_ + x) * 3 + c]; }
  float at(int y, int x, int c) const { return px_[(static_cast<std::size_t>(y) * w_ + x) * 3 + c]; }

  std::vector<float>& pixels() { return px_; }
  const std::vector<float>& pixels() const { return px_; }

  void clamp() {
    for (auto& v : px_) v = std::clamp(v, 0.0f, 1.0f);
  }

  bool operator==(const ImageRGB& o) const = default;

 private:
  int h_ = 0;
  int w_ = 0;
  std::vector<float> px_;  // row-major, interleaved RGB
};

// ITU-R BT.601 luma.
inline float luma(const ImageRGB& img, int y, int x) {
  return 0.299f * img.at(y, x, 0) + 0.587f * img.at(y, x, 1) + 0.114f * img.at(y, x, 2);
}

inline std::vector<double> luma_plane(const ImageRGB& img) {
  std::vector<double> out(static_cast<std::size_t>(img.height()) * img.width());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      out[static_cast<std::size_t>(y) * img.width() + x] =
          0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
  return out;
}

// Keys cubic convolution kernel with a = -0.5 (Catmull-Rom).
inline double cubic_kernel(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

namespace detail {

struct ResampleTaps {
  std::vector<int> first;     // per output sample, first source index
  std::vector<int> count;
  std::vector<double> weights;  // out_len * max_taps
  int max_taps = 0;
};

// Pixel-area aligned 1-D weights. Downscaling stretches the kernel by the
// scale ratio so it also acts as the anti-aliasing low-pass; borders replicate.
inline ResampleTaps resample_taps(int in_len, int out_len) {
  const double scale = static_cast<double>(out_len) / in_len;
  const double stretch = scale < 1.0 ? 1.0 / scale : 1.0;
  const double support = 2.0 * stretch;
  ResampleTaps taps;
  taps.max_taps = static_cast<int>(std::ceil(2.0 * support)) + 2;
  taps.first.resize(out_len);
  taps.count.resize(out_len);
  taps.weights.assign(static_cast<std::size_t>(out_len) * taps.max_taps, 0.0);
  for (int o = 0; o < out_len; ++o) {
    const double center = (o + 0.5) / scale - 0.5;
    const int lo = static_cast<int>(std::floor(center - support)) + 1;
    const int hi = static_cast<int>(std::ceil(center + support)) - 1;
    const int n = std::min(hi - lo + 1, taps.max_taps);
    double total = 0.0;
    for (int k = 0; k < n; ++k) {
      const double wgt = cubic_kernel((lo + k - center) / stretch);
      taps.weights[static_cast<std::size_t>(o) * taps.max_taps + k] = wgt;
      total += wgt;
    }
    for (int k = 0; k < n; ++k) taps.weights[static_cast<std::size_t>(o) * taps.max_taps + k] /= total;
    taps.first[o] = lo;
    taps.count[o] = n;
  }
  return taps;
}

}  // namespace detail

// Separable resampling of `channels` interleaved float planes.
inline std::vector<float> bicubic_resize_planes(const std::vector<float>& src, int h, int w, int channels, int out_h,
                                                int out_w) {
  STARNET_EXPECT(out_h >= 1 && out_w >= 1, "bicubic_resize: target size must be positive");
  const auto tx = detail::resample_taps(w, out_w);
  const auto ty = detail::resample_taps(h, out_h);
  std::vector<double> tmp(static_cast<std::size_t>(h) * out_w * channels, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < out_w; ++x)
      for (int k = 0; k < tx.count[x]; ++k) {
        const int sx = std::clamp(tx.first[x] + k, 0, w - 1);
        const double wgt = tx.weights[static_cast<std::size_t>(x) * tx.max_taps + k];
        for (int c = 0; c < channels; ++c)
          tmp[(static_cast<std::size_t>(y) * out_w + x) * channels + c] +=
              wgt * src[(static_cast<std::size_t>(y) * w + sx) * channels + c];
      }
  std::vector<float> out(static_cast<std::size_t>(out_h) * out_w * channels);
  std::vector<double> acc(channels);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int k = 0; k < ty.count[y]; ++k) {
        const int sy = std::clamp(ty.first[y] + k, 0, h - 1);
        const double wgt = ty.weights[static_cast<std::size_t>(y) * ty.max_taps + k];
        for (int c = 0; c < channels; ++c) acc[c] += wgt * tmp[(static_cast<std::size_t>(sy) * out_w + x) * channels + c];
      }
      for (int c = 0; c < channels; ++c)
        out[(static_cast<std::size_t>(y) * out_w + x) * channels + c] = static_cast<float>(acc[c]);
    }
  return out;
}

inline ImageRGB bicubic_resize(const ImageRGB& img, int out_h, int out_w) {
  STARNET_EXPECT(out_h >= 1 && out_w >= 1, "bicubic_resize: target size must be positive");
  if (out_h == img.height() && out_w == img.width()) return img;
  ImageRGB out(out_h, out_w);
  out.pixels() = bicubic_resize_planes(img.pixels(), img.height(), img.width(), 3, out_h, out_w);
  out.clamp();
  return out;
}

struct AugmentSpec {
  int rotate_quarter_turns = 0;  // clockwise on screen
  bool flip_horizontal = false;
  bool flip_vertical = false;
  int crop_row = 0;
  int crop_col = 0;
  int crop_h = 0;  // 0 means "to the image edge"
  int crop_w = 0;

  static AugmentSpec identity() { return {}; }
};

// Generic raster transforms over interleaved planes, shared by images and flows.
namespace detail {

template <typename V>
std::vector<V> crop_planes(const std::vector<V>& src, int w, int channels, int row, int col, int ch, int cw) {
  std::vector<V> out(static_cast<std::size_t>(ch) * cw * channels);
  for (int y = 0; y < ch; ++y)
    std::copy_n(src.begin() + (static_cast<std::size_t>(row + y) * w + col) * channels, cw * channels,
                out.begin() + static_cast<std::size_t>(y) * cw * channels);
  return out;
}

template <typename V>
std::vector<V> flip_planes(const std::vector<V>& src, int h, int w, int channels, bool horizontal) {
  std::vector<V> out(src.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int sy = horizontal ? y : h - 1 - y;
      const int sx = horizontal ? w - 1 - x : x;
      for (int c = 0; c < channels; ++c)
        out[(static_cast<std::size_t>(y) * w + x) * channels + c] = src[(static_cast<std::size_t>(sy) * w + sx) * channels + c];
    }
  return out;
}

// One clockwise quarter turn: out[r][c] = in[h-1-c][r]; result is w x h.
template <typename V>
std::vector<V> rotate_planes_cw(const std::vector<V>& src, int h, int w, int channels) {
  std::vector<V> out(src.size());
  const int oh = w, ow = h;
  for (int r = 0; r < oh; ++r)
    for (int c = 0; c < ow; ++c)
      for (int k = 0; k < channels; ++k)
        out[(static_cast<std::size_t>(r) * ow + c) * channels + k] =
            src[(static_cast<std::size_t>(h - 1 - c) * w + r) * channels + k];
  return out;
}

inline void validate_crop(const AugmentSpec& spec, int h, int w) {
  const int ch = spec.crop_h > 0 ? spec.crop_h : h - spec.crop_row;
  const int cw = spec.crop_w > 0 ? spec.crop_w : w - spec.crop_col;
  STARNET_EXPECT(spec.crop_row >= 0 && spec.crop_col >= 0 && ch > 0 && cw > 0 && spec.crop_row + ch <= h &&
                     spec.crop_col + cw <= w,
                 "augment: crop window out of image bounds");
  STARNET_EXPECT(spec.rotate_quarter_turns >= 0 && spec.rotate_quarter_turns <= 3,
                 "augment: rotation must be 0..3 quarter turns");
}

}  // namespace detail

// Crop, then flips, then clockwise quarter turns.
inline ImageRGB apply_augment(const ImageRGB& img, const AugmentSpec& spec) {
  detail::validate_crop(spec, img.height(), img.width());
  int h = spec.crop_h > 0 ? spec.crop_h : img.height() - spec.crop_row;
  int w = spec.crop_w > 0 ? spec.crop_w : img.width() - spec.crop_col;
  auto px = detail::crop_planes(img.pixels(), img.width(), 3, spec.crop_row, spec.crop_col, h, w);
  if (spec.flip_horizontal) px = detail::flip_planes(px, h, w, 3, true);
  if (spec.flip_vertical) px = detail::flip_planes(px, h, w, 3, false);
  for (int t = 0; t < spec.rotate_quarter_turns; ++t) {
    px = detail::rotate_planes_cw(px, h, w, 3);
    std::swap(h, w);
  }
  ImageRGB out(h, w);
  out.pixels() = std::move(px);
  return out;
}

inline ImageRGB quantize_roundtrip(const ImageRGB& img) {
  ImageRGB out = img;
  for (auto& v : out.pixels()) v = std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f) / 255.0f;
  return out;
}

}  // namespace starnet
