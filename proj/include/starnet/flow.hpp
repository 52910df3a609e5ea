#pragma once

// Dense optical flow: representation, Middlebury .flo I/O, a coarse-to-fine
// estimator, resampling, and the additive composition used by the flow
// refinement loss.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "starnet/errors.hpp"
#include "starnet/image.hpp"

namespace starnet {

// (u, v) = (column displacement, row displacement) in pixels, source to target.
class FlowField {
 public:
  FlowField() = default;
  FlowField(int height, int width, float u = 0.0f, float v = 0.0f) : h_(height), w_(width) {
    STARNET_EXPECT(height > 0 && width > 0, "flow dimensions must be positive");
    uv_.resize(static_cast<std::size_t>(height) * width * 2);
    for (std::size_t i = 0; i < uv_.size(); i += 2) {
      uv_[i] = u;
      uv_[i + 1] = v;
    }
  }

  int height() const { return h_; }
  int width() const { return w_; }
  bool empty() const { return uv_.empty(); }
  float& u(int y, int x) { return uv_[(static_cast<std::size_t>(y) * w_ + x) * 2]; }
  float& v(int y, int x) { return uv_[(static_cast<std::size_t>(y) * w_ + x) * 2 + 1]; }
  float u(int y, int x) const { return uv_[(static_cast<std::size_t>(y) * w_ + x) * 2]; }
  float v(int y, int x) const { return uv_[(static_cast<std::size_t>(y) * w_ + x) * 2 + 1]; }
  std::vector<float>& vectors() { return uv_; }
  const std::vector<float>& vectors() const { return uv_; }

  bool operator==(const FlowField& o) const = default;

 private:
  int h_ = 0;
  int w_ = 0;
  std::vector<float> uv_;  // interleaved (u, v), row-major
};

struct FlowPyramidConfig {
  int levels = 4;
  double scale_per_level = 0.5;
  int iterations_per_level = 60;
  double smoothness_weight = 0.03;
  int warps_per_level = 3;
  static constexpr int min_level_side = 8;
};

inline FlowField compose_flows(const FlowField& f_ab, const FlowField& f_bc) {
  STARNET_EXPECT(f_ab.height() == f_bc.height() && f_ab.width() == f_bc.width(), "compose_flows: dimension mismatch");
  FlowField out = f_ab;
  for (std::size_t i = 0; i < out.vectors().size(); ++i) out.vectors()[i] += f_bc.vectors()[i];
  return out;
}

namespace detail {

// Bilinear sample of a single-channel plane with border clamping.
inline double sample_bilinear(const std::vector<double>& plane, int h, int w, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double fy = y - y0, fx = x - x0;
  auto at = [&](int yy, int xx) { return plane[static_cast<std::size_t>(yy) * w + xx]; };
  return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) + fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
}

}  // namespace detail

// Bilinear resampling of both components followed by rescaling of the vectors
// so displacements stay in output-grid pixels.
inline FlowField resize_flow(const FlowField& flow, int out_h, int out_w) {
  STARNET_EXPECT(out_h >= 1 && out_w >= 1, "resize_flow: target size must be positive");
  if (out_h == flow.height() && out_w == flow.width()) return flow;
  const int h = flow.height(), w = flow.width();
  std::vector<double> pu(static_cast<std::size_t>(h) * w), pv(pu.size());
  for (std::size_t i = 0; i < pu.size(); ++i) {
    pu[i] = flow.vectors()[2 * i];
    pv[i] = flow.vectors()[2 * i + 1];
  }
  const double sy = static_cast<double>(h) / out_h, sx = static_cast<double>(w) / out_w;
  FlowField out(out_h, out_w);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      const double src_y = (y + 0.5) * sy - 0.5, src_x = (x + 0.5) * sx - 0.5;
      out.u(y, x) = static_cast<float>(detail::sample_bilinear(pu, h, w, src_y, src_x) / sx);
      out.v(y, x) = static_cast<float>(detail::sample_bilinear(pv, h, w, src_y, src_x) / sy);
    }
  return out;
}

namespace detail {

struct GrayPlane {
  int h = 0, w = 0;
  std::vector<double> px;
};

inline GrayPlane to_gray(const ImageRGB& img) { return {img.height(), img.width(), luma_plane(img)}; }

inline GrayPlane resize_gray(const GrayPlane& g, int out_h, int out_w) {
  if (g.h == out_h && g.w == out_w) return g;
  std::vector<float> src(g.px.begin(), g.px.end());
  auto r = bicubic_resize_planes(src, g.h, g.w, 1, out_h, out_w);
  return {out_h, out_w, std::vector<double>(r.begin(), r.end())};
}

// Horn-Schunck style increments around the current flow, with the image
// constancy term linearized at the warped target.
inline void refine_level(const GrayPlane& src, const GrayPlane& dst, std::vector<double>& u, std::vector<double>& v,
                         const FlowPyramidConfig& cfg) {
  const int h = src.h, w = src.w;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  const double alpha2 = cfg.smoothness_weight * cfg.smoothness_weight;
  auto idx = [w](int y, int x) { return static_cast<std::size_t>(y) * w + x; };
  std::vector<double> warped(n), ix(n), iy(n), it(n), du(n), dv(n), nu(n), nv(n);
  for (int warp = 0; warp < cfg.warps_per_level; ++warp) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        warped[idx(y, x)] = sample_bilinear(dst.px, h, w, y + v[idx(y, x)], x + u[idx(y, x)]);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int xl = std::max(x - 1, 0), xr = std::min(x + 1, w - 1);
        const int yu = std::max(y - 1, 0), yd = std::min(y + 1, h - 1);
        const double gx_w = (warped[idx(y, xr)] - warped[idx(y, xl)]) / std::max(xr - xl, 1);
        const double gy_w = (warped[idx(yd, x)] - warped[idx(yu, x)]) / std::max(yd - yu, 1);
        const double gx_s = (src.px[idx(y, xr)] - src.px[idx(y, xl)]) / std::max(xr - xl, 1);
        const double gy_s = (src.px[idx(yd, x)] - src.px[idx(yu, x)]) / std::max(yd - yu, 1);
        ix[idx(y, x)] = 0.5 * (gx_w + gx_s);
        iy[idx(y, x)] = 0.5 * (gy_w + gy_s);
        it[idx(y, x)] = warped[idx(y, x)] - src.px[idx(y, x)];
      }
    std::fill(du.begin(), du.end(), 0.0);
    std::fill(dv.begin(), dv.end(), 0.0);
    for (int iter = 0; iter < cfg.iterations_per_level; ++iter) {
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          // Neighborhood mean of the total flow, clamped at the borders.
          double su = 0, sv = 0;
          int cnt = 0;
          const int ys[4] = {y - 1, y + 1, y, y};
          const int xs[4] = {x, x, x - 1, x + 1};
          for (int k = 0; k < 4; ++k) {
            if (ys[k] < 0 || ys[k] >= h || xs[k] < 0 || xs[k] >= w) continue;
            su += u[idx(ys[k], xs[k])] + du[idx(ys[k], xs[k])];
            sv += v[idx(ys[k], xs[k])] + dv[idx(ys[k], xs[k])];
            ++cnt;
          }
          const std::size_t i = idx(y, x);
          const double bu = su / cnt - u[i], bv = sv / cnt - v[i];
          const double r = (ix[i] * bu + iy[i] * bv + it[i]) / (alpha2 + ix[i] * ix[i] + iy[i] * iy[i]);
          nu[i] = bu - ix[i] * r;
          nv[i] = bv - iy[i] * r;
        }
      du.swap(nu);
      dv.swap(nv);
    }
    for (std::size_t i = 0; i < n; ++i) {
      u[i] += du[i];
      v[i] += dv[i];
    }
  }
}

}  // namespace detail

// Coarse-to-fine estimate of the flow taking `src` onto `dst`.
inline FlowField estimate_flow(const ImageRGB& src, const ImageRGB& dst, const FlowPyramidConfig& cfg = {}) {
  STARNET_EXPECT(src.height() == dst.height() && src.width() == dst.width(), "estimate_flow: frame dimension mismatch");
  STARNET_EXPECT(cfg.levels >= 1 && cfg.scale_per_level > 0 && cfg.scale_per_level < 1 && cfg.iterations_per_level >= 1 &&
                     cfg.smoothness_weight > 0,
                 "estimate_flow: invalid pyramid configuration");
  const auto g_src = detail::to_gray(src), g_dst = detail::to_gray(dst);
  std::vector<std::array<int, 2>> sizes;
  for (int l = 0; l < cfg.levels; ++l) {
    const double f = std::pow(cfg.scale_per_level, l);
    const int lh = static_cast<int>(std::lround(src.height() * f)), lw = static_cast<int>(std::lround(src.width() * f));
    if (l > 0 && std::min(lh, lw) < FlowPyramidConfig::min_level_side) break;
    sizes.push_back({lh, lw});
  }
  FlowField flow;
  for (auto it = sizes.rbegin(); it != sizes.rend(); ++it) {
    const int lh = (*it)[0], lw = (*it)[1];
    flow = flow.empty() ? FlowField(lh, lw) : resize_flow(flow, lh, lw);
    const auto s = detail::resize_gray(g_src, lh, lw), d = detail::resize_gray(g_dst, lh, lw);
    std::vector<double> u(static_cast<std::size_t>(lh) * lw), v(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
      u[i] = flow.vectors()[2 * i];
      v[i] = flow.vectors()[2 * i + 1];
    }
    detail::refine_level(s, d, u, v, cfg);
    for (std::size_t i = 0; i < u.size(); ++i) {
      flow.vectors()[2 * i] = static_cast<float>(u[i]);
      flow.vectors()[2 * i + 1] = static_cast<float>(v[i]);
    }
  }
  return flow;
}

// Geometric transforms matching apply_augment on the raster; the vectors
// rotate and reflect with it.
inline FlowField crop_flow(const FlowField& f, int row, int col, int h, int w) {
  STARNET_EXPECT(row >= 0 && col >= 0 && h > 0 && w > 0 && row + h <= f.height() && col + w <= f.width(),
                 "crop_flow: window out of bounds");
  FlowField out(h, w);
  out.vectors() = detail::crop_planes(f.vectors(), f.width(), 2, row, col, h, w);
  return out;
}

inline FlowField flip_flow(const FlowField& f, bool horizontal) {
  FlowField out(f.height(), f.width());
  out.vectors() = detail::flip_planes(f.vectors(), f.height(), f.width(), 2, horizontal);
  for (std::size_t i = horizontal ? 0 : 1; i < out.vectors().size(); i += 2) out.vectors()[i] = -out.vectors()[i];
  return out;
}

// Clockwise quarter turn: (u, v) -> (-v, u).
inline FlowField rotate_flow_cw(const FlowField& f) {
  FlowField out(f.width(), f.height());
  out.vectors() = detail::rotate_planes_cw(f.vectors(), f.height(), f.width(), 2);
  for (std::size_t i = 0; i < out.vectors().size(); i += 2) {
    const float u = out.vectors()[i], v = out.vectors()[i + 1];
    out.vectors()[i] = -v;
    out.vectors()[i + 1] = u;
  }
  return out;
}

// ---- Middlebury .flo ----

inline constexpr float kFloMagic = 202021.25f;

namespace detail {

inline void put_u32le(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32le(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

inline void put_f32le(std::vector<char>& out, float f) { put_u32le(out, std::bit_cast<std::uint32_t>(f)); }
inline float get_f32le(const char* p) { return std::bit_cast<float>(get_u32le(p)); }

inline std::vector<char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path);
}

}  // namespace detail

inline std::vector<char> encode_flo(const FlowField& flow) {
  std::vector<char> bytes;
  bytes.reserve(12 + flow.vectors().size() * 4);
  detail::put_f32le(bytes, kFloMagic);
  detail::put_u32le(bytes, static_cast<std::uint32_t>(flow.width()));
  detail::put_u32le(bytes, static_cast<std::uint32_t>(flow.height()));
  for (float f : flow.vectors()) detail::put_f32le(bytes, f);
  return bytes;
}

inline FlowField decode_flo(const std::vector<char>& bytes, const std::string& origin = "<memory>") {
  if (bytes.size() < 12) throw FormatError(origin + ": truncated .flo header");
  if (detail::get_f32le(bytes.data()) != kFloMagic) throw FormatError(origin + ": bad .flo magic");
  const auto w = static_cast<std::int32_t>(detail::get_u32le(bytes.data() + 4));
  const auto h = static_cast<std::int32_t>(detail::get_u32le(bytes.data() + 8));
  if (w <= 0 || h <= 0 || w > (1 << 20) || h > (1 << 20)) throw FormatError(origin + ": implausible .flo dimensions");
  const std::size_t need = 12 + static_cast<std::size_t>(w) * h * 8;
  if (bytes.size() < need) throw FormatError(origin + ": truncated .flo payload");
  FlowField flow(h, w);
  for (std::size_t i = 0; i < flow.vectors().size(); ++i) flow.vectors()[i] = detail::get_f32le(bytes.data() + 12 + 4 * i);
  return flow;
}

inline void write_flo(const FlowField& flow, const std::string& path) { detail::write_file_bytes(path, encode_flo(flow)); }

inline FlowField read_flo(const std::string& path) { return decode_flo(detail::read_file_bytes(path), path); }

}  // namespace starnet
