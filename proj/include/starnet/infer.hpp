#pragma once

// Sequence inference. stsr turns N frames into 2N-1 frames at scale x the
// input size; cascade_t4 follows it with a temporal-only pass between every
// adjacent output pair, giving 4N-3 frames.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "starnet/convert.hpp"
#include "starnet/model.hpp"
#include "starnet/png_io.hpp"

namespace starnet {

enum class InferMode { Stsr, CascadeT4 };

inline InferMode parse_infer_mode(const std::string& s) {
  if (s == "stsr") return InferMode::Stsr;
  if (s == "cascade_t4") return InferMode::CascadeT4;
  throw UsageError("unknown inference mode '" + s + "' (expected stsr or cascade_t4)");
}

template <typename T>
StageOutputs<T> forward_pair(const Starnet<T>& model, const ImageRGB& a, const ImageRGB& b, const FlowPyramidConfig& fc) {
  ForwardInputs<T> in{image_to_tensor<T>(a), image_to_tensor<T>(b), {}, {}};
  if (model.config().ablation.use_flow_input) {
    in.F_fwd = flow_to_tensor<T>(estimate_flow(a, b, fc));
    in.F_bwd = flow_to_tensor<T>(estimate_flow(b, a, fc));
  }
  return model.forward(in);
}

// (I_sr_t, I_sr_tn) per adjacent pair, then the final I_sr_t1.
template <typename T>
std::vector<ImageRGB> infer_stsr(const Starnet<T>& model, const std::vector<ImageRGB>& frames,
                                 const FlowPyramidConfig& fc = {}) {
  if (frames.size() < 2) throw UsageError("inference needs at least 2 input frames, got " + std::to_string(frames.size()));
  NoGradGuard ng;
  std::vector<ImageRGB> out;
  for (std::size_t k = 0; k + 1 < frames.size(); ++k) {
    auto o = forward_pair(model, frames[k], frames[k + 1], fc);
    out.push_back(tensor_to_image(o.I_sr_t));
    out.push_back(tensor_to_image(o.I_sr_tn));
    if (k + 2 == frames.size()) out.push_back(tensor_to_image(o.I_sr_t1));
  }
  return out;
}

// Inserts the temporal-only middle frame (on the input grid) between every
// adjacent pair; the given frames pass through unchanged.
template <typename T>
std::vector<ImageRGB> infer_interpolate(const Starnet<T>& model, const std::vector<ImageRGB>& frames,
                                        const FlowPyramidConfig& fc = {}) {
  if (frames.size() < 2) throw UsageError("inference needs at least 2 input frames, got " + std::to_string(frames.size()));
  NoGradGuard ng;
  std::vector<ImageRGB> out;
  for (std::size_t k = 0; k + 1 < frames.size(); ++k) {
    auto o = forward_pair(model, frames[k], frames[k + 1], fc);
    out.push_back(frames[k]);
    out.push_back(tensor_to_image(o.I_l_tn));
  }
  out.push_back(frames.back());
  return out;
}

// `t_model` drives the second pass of cascade_t4; without one the first
// model is reused.
template <typename T>
std::vector<ImageRGB> infer(const Starnet<T>& model, const std::vector<ImageRGB>& frames, InferMode mode,
                            const Starnet<T>* t_model = nullptr, const FlowPyramidConfig& fc = {}) {
  auto st = infer_stsr(model, frames, fc);
  if (mode == InferMode::Stsr) return st;
  return infer_interpolate(t_model ? *t_model : model, st, fc);
}

inline std::vector<ImageRGB> read_frames_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw IoError("frames directory not found: " + dir.string());
  std::vector<std::filesystem::path> paths;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") paths.push_back(e.path());
  std::sort(paths.begin(), paths.end());
  std::vector<ImageRGB> frames;
  for (const auto& p : paths) {
    frames.push_back(read_png(p.string()));
    if (frames.back().height() != frames.front().height() || frames.back().width() != frames.front().width())
      throw FormatError(p.string() + ": frame size differs from " + paths.front().string());
  }
  return frames;
}

inline void write_frames(const std::filesystem::path& dir, const std::vector<ImageRGB>& frames) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%05zu.png", i);
    write_png(frames[i], (dir / name).string());
  }
}

}  // namespace starnet
