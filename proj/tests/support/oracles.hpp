#pragma once

// Brute-force reference implementations used only by tests. None of these
// share code with the library paths they check.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "starnet/image.hpp"

namespace oracle {

// out[n][co][y][x] = b[co] + sum_{ci,i,j} in[n][ci][y*s-p+i][x*s-p+j] * w[co][ci][i][j]
inline std::vector<double> conv2d(const std::vector<double>& in, int n, int cin, int h, int w,
                                  const std::vector<double>& wt, int cout, int kh, int kw, const std::vector<double>& b,
                                  int stride, int pad, int& oh, int& ow) {
  oh = (h + 2 * pad - kh) / stride + 1;
  ow = (w + 2 * pad - kw) / stride + 1;
  std::vector<double> out(static_cast<std::size_t>(n) * cout * oh * ow);
  for (int s = 0; s < n; ++s)
    for (int co = 0; co < cout; ++co)
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
          double acc = b[co];
          for (int ci = 0; ci < cin; ++ci)
            for (int i = 0; i < kh; ++i)
              for (int j = 0; j < kw; ++j) {
                const int iy = y * stride - pad + i, ix = x * stride - pad + j;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                acc += in[((static_cast<std::size_t>(s) * cin + ci) * h + iy) * w + ix] *
                       wt[((static_cast<std::size_t>(co) * cin + ci) * kh + i) * kw + j];
              }
          out[((static_cast<std::size_t>(s) * cout + co) * oh + y) * ow + x] = acc;
        }
  return out;
}

// Every input pixel scatters weight-scaled copies of itself into the output.
inline std::vector<double> conv_transpose2d(const std::vector<double>& in, int n, int cin, int h, int w,
                                            const std::vector<double>& wt, int cout, int kh, int kw,
                                            const std::vector<double>& b, int stride, int pad, int& oh, int& ow) {
  oh = (h - 1) * stride - 2 * pad + kh;
  ow = (w - 1) * stride - 2 * pad + kw;
  std::vector<double> out(static_cast<std::size_t>(n) * cout * oh * ow, 0.0);
  for (int s = 0; s < n; ++s)
    for (int co = 0; co < cout; ++co)
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) out[((static_cast<std::size_t>(s) * cout + co) * oh + y) * ow + x] = b[co];
  for (int s = 0; s < n; ++s)
    for (int ci = 0; ci < cin; ++ci)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double v = in[((static_cast<std::size_t>(s) * cin + ci) * h + y) * w + x];
          for (int co = 0; co < cout; ++co)
            for (int i = 0; i < kh; ++i)
              for (int j = 0; j < kw; ++j) {
                const int oy = y * stride - pad + i, ox = x * stride - pad + j;
                if (oy < 0 || oy >= oh || ox < 0 || ox >= ow) continue;
                out[((static_cast<std::size_t>(s) * cout + co) * oh + oy) * ow + ox] +=
                    v * wt[((static_cast<std::size_t>(ci) * cout + co) * kh + i) * kw + j];
              }
        }
  return out;
}

inline double keys_cubic(double x) {
  // Written from the piecewise definition with a = -0.5.
  const double a = -0.5, t = std::fabs(x);
  if (t < 1) return (a + 2) * t * t * t - (a + 3) * t * t + 1;
  if (t < 2) return a * t * t * t - 5 * a * t * t + 8 * a * t - 4 * a;
  return 0;
}

// Direct 2-D evaluation of the (upscaling) cubic interpolant at one output pixel.
inline double bicubic_upscale_at(const starnet::ImageRGB& img, int out_h, int out_w, int oy, int ox, int c) {
  const double sy = (oy + 0.5) * img.height() / out_h - 0.5;
  const double sx = (ox + 0.5) * img.width() / out_w - 0.5;
  double acc = 0, norm = 0;
  for (int y = static_cast<int>(std::floor(sy)) - 2; y <= static_cast<int>(std::floor(sy)) + 3; ++y)
    for (int x = static_cast<int>(std::floor(sx)) - 2; x <= static_cast<int>(std::floor(sx)) + 3; ++x) {
      const double k = keys_cubic(y - sy) * keys_cubic(x - sx);
      const int cy = std::min(std::max(y, 0), img.height() - 1), cx = std::min(std::max(x, 0), img.width() - 1);
      acc += k * img.at(cy, cx, c);
      norm += k;
    }
  return acc / norm;
}

inline double luma_at(const starnet::ImageRGB& im, int y, int x) {
  return 0.299 * im.at(y, x, 0) + 0.587 * im.at(y, x, 1) + 0.114 * im.at(y, x, 2);
}

// Per-window SSIM straight from the definition (weighted moments per window).
inline double ssim(const starnet::ImageRGB& a, const starnet::ImageRGB& b) {
  const int win = 11;
  std::vector<double> g(win);
  double gs = 0;
  for (int i = 0; i < win; ++i) {
    g[i] = std::exp(-(i - 5) * (i - 5) / (2 * 1.5 * 1.5));
    gs += g[i];
  }
  for (auto& v : g) v /= gs;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0;
  int count = 0;
  for (int y = 0; y + win <= a.height(); ++y)
    for (int x = 0; x + win <= a.width(); ++x) {
      double ma = 0, mb = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          ma += g[i] * g[j] * luma_at(a, y + i, x + j);
          mb += g[i] * g[j] * luma_at(b, y + i, x + j);
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          const double da = luma_at(a, y + i, x + j) - ma, db = luma_at(b, y + i, x + j) - mb;
          va += g[i] * g[j] * da * da;
          vb += g[i] * g[j] * db * db;
          cov += g[i] * g[j] * da * db;
        }
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return total / count;
}

inline double interp_error(const starnet::ImageRGB& a, const starnet::ImageRGB& b) {
  double se = 0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) {
      const double d = 255.0 * luma_at(a, y, x) - 255.0 * luma_at(b, y, x);
      se += d * d;
    }
  return std::sqrt(se / (a.height() * a.width()));
}

// Sum over samples of the per-sample mean absolute difference.
inline double l1(const std::vector<double>& p, const std::vector<double>& t, int samples) {
  const std::size_t per = p.size() / samples;
  double total = 0;
  for (int s = 0; s < samples; ++s) {
    double acc = 0;
    for (std::size_t i = 0; i < per; ++i) acc += std::fabs(p[s * per + i] - t[s * per + i]);
    total += acc / per;
  }
  return total;
}

struct AdaMaxRef {
  double m = 0, u = 0;
  int t = 0;
  double step(double theta, double g, double lr, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    u = std::max(b2 * u, std::fabs(g));
    return theta - lr / (1 - std::pow(b1, t)) * m / (u + eps);
  }
};

// Central differences of f at x along every coordinate in `coords`.
inline std::vector<double> central_diff(const std::function<double()>& f, std::vector<double*> coords, double eps) {
  std::vector<double> g;
  for (double* c : coords) {
    const double keep = *c;
    *c = keep + eps;
    const double fp = f();
    *c = keep - eps;
    const double fm = f();
    *c = keep;
    g.push_back((fp - fm) / (2 * eps));
  }
  return g;
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace oracle
