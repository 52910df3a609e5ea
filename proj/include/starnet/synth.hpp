#pragma once

// Synthetic triplets: a smooth random texture translated at constant
// velocity, sampled at t = 0, 1/2, 1. The texture is evaluated analytically
// at every frame, so no resampling error leaks into the ground truth.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "starnet/image.hpp"
#include "starnet/png_io.hpp"

namespace starnet {

struct SynthConfig {
  int height = 64;
  int width = 64;
  int waves = 6;               // sinusoids per channel
  double min_wavelength = 10;  // HR pixels
  double max_wavelength = 40;
  double max_speed = 4;        // HR pixels between t and t+1, per axis
};

class SynthTexture {
 public:
  SynthTexture(std::uint64_t seed, const SynthConfig& cfg) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0, 1);
    const double pi = std::acos(-1.0);
    for (int c = 0; c < 3; ++c) {
      for (int k = 0; k < cfg.waves; ++k) {
        Wave w;
        const double lambda = cfg.min_wavelength + (cfg.max_wavelength - cfg.min_wavelength) * unit(rng);
        const double theta = 2 * pi * unit(rng);
        w.kx = 2 * pi / lambda * std::cos(theta);
        w.ky = 2 * pi / lambda * std::sin(theta);
        w.phase = 2 * pi * unit(rng);
        w.amp = 0.4 / cfg.waves * (0.5 + unit(rng));
        waves_[c].push_back(w);
      }
      base_[c] = 0.35 + 0.3 * unit(rng);
    }
    vx_ = cfg.max_speed * (2 * unit(rng) - 1);
    vy_ = cfg.max_speed * (2 * unit(rng) - 1);
  }

  double velocity_x() const { return vx_; }
  double velocity_y() const { return vy_; }

  // Frame at time t in [0,1]; content moves by (vx, vy) * t.
  ImageRGB frame(int h, int w, double t) const {
    ImageRGB img(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double sx = x + 0.5 - vx_ * t, sy = y + 0.5 - vy_ * t;
        for (int c = 0; c < 3; ++c) {
          double v = base_[c];
          for (const auto& wv : waves_[c]) v += wv.amp * std::sin(wv.kx * sx + wv.ky * sy + wv.phase);
          img.at(y, x, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    return img;
  }

 private:
  struct Wave {
    double kx, ky, phase, amp;
  };
  std::array<std::vector<Wave>, 3> waves_;
  std::array<double, 3> base_{};
  double vx_ = 0, vy_ = 0;
};

inline std::array<ImageRGB, 3> synthetic_triplet(std::uint64_t seed, const SynthConfig& cfg = {}) {
  SynthTexture tex(seed, cfg);
  return {tex.frame(cfg.height, cfg.width, 0.0), tex.frame(cfg.height, cfg.width, 0.5),
          tex.frame(cfg.height, cfg.width, 1.0)};
}

// Writes `train` + `test` triplets as sequences/synth/NNNNN with both list
// files. Test sequences follow the training ones in numbering.
inline void write_synthetic_dataset(const std::filesystem::path& root, int train, int test, std::uint64_t seed,
                                    const SynthConfig& cfg = {}) {
  namespace fs = std::filesystem;
  fs::create_directories(root / "sequences" / "synth");
  std::ofstream train_list(root / "tri_trainlist.txt"), test_list(root / "tri_testlist.txt");
  if (!train_list || !test_list) throw IoError("cannot write list files under " + root.string());
  for (int i = 0; i < train + test; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "synth/%05d", i + 1);
    const fs::path dir = root / "sequences" / name;
    fs::create_directories(dir);
    auto frames = synthetic_triplet(seed * 1000003ull + static_cast<std::uint64_t>(i), cfg);
    for (int k = 0; k < 3; ++k) write_png(frames[k], (dir / ("im" + std::to_string(k + 1) + ".png")).string());
    (i < train ? train_list : test_list) << name << "\n";
  }
}

}  // namespace starnet
