#pragma once

// Triplet datasets in the Vimeo layout:
//
//   <root>/sequences/<clip>/<seq>/im{1,2,3}.png
//   <root>/tri_trainlist.txt, <root>/tri_testlist.txt   (relative <clip>/<seq>)
//   <root>/flows/<clip>/<seq>/<name>.flo                (optional)

#include <algorithm>
#include <array>
#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "starnet/convert.hpp"
#include "starnet/flow.hpp"
#include "starnet/image.hpp"
#include "starnet/png_io.hpp"

namespace starnet {

namespace fs = std::filesystem;

enum class Split { Train, Test };
enum class FlowSource { Estimate, FloDir };

inline std::string flow_source_name(FlowSource s) { return s == FlowSource::Estimate ? "estimate" : "flo_dir"; }

inline FlowSource parse_flow_source(const std::string& s) {
  if (s == "estimate") return FlowSource::Estimate;
  if (s == "flo_dir") return FlowSource::FloDir;
  throw ConfigError("unknown flow source '" + s + "' (expected estimate or flo_dir)");
}

struct DatasetIndex {
  fs::path root;
  std::vector<std::string> entries;
  Split split = Split::Train;

  std::size_t size() const { return entries.size(); }
  fs::path sequence_dir(std::size_t i) const { return root / "sequences" / entries.at(i); }
  fs::path flow_dir(std::size_t i) const { return root / "flows" / entries.at(i); }
};

// Reads `list_file` (relative to root unless absolute). Every non-blank line
// must name a sequence directory holding im1..im3.
inline DatasetIndex scan_dataset(const fs::path& root, const fs::path& list_file, Split split) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw IoError("dataset root is not a readable directory: " + root.string());
  const fs::path list = list_file.is_absolute() ? list_file : root / list_file;
  std::ifstream in(list);
  if (!in) throw IoError("cannot read list file " + list.string());
  DatasetIndex idx{root, {}, split};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    line = line.substr(start);
    const fs::path dir = root / "sequences" / line;
    if (!fs::is_directory(dir, ec))
      throw IoError(list.string() + ":" + std::to_string(lineno) + ": sequence directory '" + line + "' not found (" +
                    dir.string() + ")");
    for (const char* f : {"im1.png", "im2.png", "im3.png"})
      if (!fs::is_regular_file(dir / f, ec))
        throw IoError(list.string() + ":" + std::to_string(lineno) + ": '" + line + "' lacks " + f);
    idx.entries.push_back(line);
  }
  if (idx.entries.empty()) throw ConfigError("dataset index from " + list.string() + " is empty");
  return idx;
}

// One sample. hr/lr hold (t, t+n, t+1). The middle LR frame is ground truth
// only. fwd = F_{t->t+1}, bwd = F_{t+1->t}; the remaining four relate the
// inputs to the middle frame and exist only for training records.
struct TripletRecord {
  std::string id;
  std::array<ImageRGB, 3> hr;
  std::array<ImageRGB, 3> lr;
  FlowField fwd, bwd;
  bool has_gt_flows = false;
  FlowField t_tn, tn_t1, t1_tn, tn_t;
};

// Names of the `.flo` files inside one flow directory.
inline constexpr std::array<const char*, 6> kFlowFiles = {"fwd", "bwd", "t_tn", "tn_t1", "t1_tn", "tn_t"};

struct LoadOptions {
  int scale = 4;
  FlowSource flow_source = FlowSource::Estimate;
  FlowPyramidConfig flow_cfg;
};

class IndivisibleSize : public FormatError {
 public:
  using FormatError::FormatError;
};

namespace detail {

inline void derive_lr(TripletRecord& r, int scale) {
  const int h = r.hr[0].height(), w = r.hr[0].width();
  for (const auto& im : r.hr)
    if (im.height() != h || im.width() != w) throw FormatError("triplet " + r.id + ": frames differ in size");
  if (h % scale != 0 || w % scale != 0)
    throw IndivisibleSize("triplet " + r.id + ": " + std::to_string(w) + "x" + std::to_string(h) +
                          " is not divisible by scale " + std::to_string(scale));
  for (int k = 0; k < 3; ++k) r.lr[k] = bicubic_resize(r.hr[k], h / scale, w / scale);
}

inline void estimate_flows(TripletRecord& r, bool gt_side, const FlowPyramidConfig& cfg) {
  r.fwd = estimate_flow(r.lr[0], r.lr[2], cfg);
  r.bwd = estimate_flow(r.lr[2], r.lr[0], cfg);
  r.has_gt_flows = gt_side;
  if (gt_side) {
    r.t_tn = estimate_flow(r.lr[0], r.lr[1], cfg);
    r.tn_t1 = estimate_flow(r.lr[1], r.lr[2], cfg);
    r.t1_tn = estimate_flow(r.lr[2], r.lr[1], cfg);
    r.tn_t = estimate_flow(r.lr[1], r.lr[0], cfg);
  }
}

inline std::array<FlowField*, 6> flow_slots(TripletRecord& r) { return {&r.fwd, &r.bwd, &r.t_tn, &r.tn_t1, &r.t1_tn, &r.tn_t}; }
inline std::array<const FlowField*, 6> flow_slots(const TripletRecord& r) {
  return {&r.fwd, &r.bwd, &r.t_tn, &r.tn_t1, &r.t1_tn, &r.tn_t};
}

}  // namespace detail

// Builds a record from three in-memory HR frames.
inline TripletRecord make_triplet(std::string id, std::array<ImageRGB, 3> hr, Split split, const LoadOptions& opt) {
  TripletRecord r;
  r.id = std::move(id);
  r.hr = std::move(hr);
  detail::derive_lr(r, opt.scale);
  STARNET_EXPECT(opt.flow_source == FlowSource::Estimate, "make_triplet: in-memory triplets estimate their flows");
  detail::estimate_flows(r, split == Split::Train, opt.flow_cfg);
  return r;
}

inline TripletRecord load_triplet(const DatasetIndex& index, std::size_t i, const LoadOptions& opt) {
  STARNET_EXPECT(i < index.size(), "load_triplet: index out of range");
  TripletRecord r;
  r.id = index.entries[i];
  const fs::path dir = index.sequence_dir(i);
  for (int k = 0; k < 3; ++k) r.hr[k] = read_png((dir / ("im" + std::to_string(k + 1) + ".png")).string());
  detail::derive_lr(r, opt.scale);
  const bool gt_side = index.split == Split::Train;
  if (opt.flow_source == FlowSource::Estimate) {
    detail::estimate_flows(r, gt_side, opt.flow_cfg);
  } else {
    auto slots = detail::flow_slots(r);
    const int count = gt_side ? 6 : 2;
    for (int k = 0; k < count; ++k) {
      const fs::path p = index.flow_dir(i) / (std::string(kFlowFiles[k]) + ".flo");
      std::error_code ec;
      if (!fs::is_regular_file(p, ec)) throw IoError("missing flow file, expected " + p.string());
      *slots[k] = read_flo(p.string());
      if (slots[k]->height() != r.lr[0].height() || slots[k]->width() != r.lr[0].width())
        throw FormatError(p.string() + ": flow size does not match the LR frames");
    }
    r.has_gt_flows = gt_side;
  }
  return r;
}

// Writes the six flows of every entry (two for a test index) under
// <root>/flows using the estimator.
inline void precompute_flows(const DatasetIndex& index, const LoadOptions& opt) {
  LoadOptions est = opt;
  est.flow_source = FlowSource::Estimate;
  for (std::size_t i = 0; i < index.size(); ++i) {
    auto r = load_triplet(index, i, est);
    fs::create_directories(index.flow_dir(i));
    auto slots = detail::flow_slots(r);
    const int count = r.has_gt_flows ? 6 : 2;
    for (int k = 0; k < count; ++k)
      write_flo(*slots[k], (index.flow_dir(i) / (std::string(kFlowFiles[k]) + ".flo")).string());
  }
}

// Applies one geometric transform to the HR frames (crop coordinates in HR
// pixels, aligned to the scale grid) and re-derives the LR frames. Flows are
// re-estimated for FlowSource::Estimate and transformed with the raster for
// FlowSource::FloDir.
inline TripletRecord augment_triplet(const TripletRecord& rec, const AugmentSpec& spec, const LoadOptions& opt) {
  const int s = opt.scale;
  const int H = rec.hr[0].height(), W = rec.hr[0].width();
  detail::validate_crop(spec, H, W);
  const int ch = spec.crop_h ? spec.crop_h : H - spec.crop_row;
  const int cw = spec.crop_w ? spec.crop_w : W - spec.crop_col;
  STARNET_EXPECT(spec.crop_row % s == 0 && spec.crop_col % s == 0 && ch % s == 0 && cw % s == 0,
                 "augment_triplet: crop window must be aligned to the scale grid");
  TripletRecord r;
  r.id = rec.id;
  for (int k = 0; k < 3; ++k) r.hr[k] = apply_augment(rec.hr[k], spec);
  detail::derive_lr(r, s);
  if (opt.flow_source == FlowSource::Estimate) {
    detail::estimate_flows(r, rec.has_gt_flows, opt.flow_cfg);
    return r;
  }
  r.has_gt_flows = rec.has_gt_flows;
  auto src = detail::flow_slots(rec);
  auto dst = detail::flow_slots(r);
  const int count = rec.has_gt_flows ? 6 : 2;
  for (int k = 0; k < count; ++k) {
    FlowField f = crop_flow(*src[k], spec.crop_row / s, spec.crop_col / s, ch / s, cw / s);
    if (spec.flip_horizontal) f = flip_flow(f, true);
    if (spec.flip_vertical) f = flip_flow(f, false);
    for (int t = 0; t < spec.rotate_quarter_turns; ++t) f = rotate_flow_cw(f);
    *dst[k] = std::move(f);
  }
  return r;
}

struct BatchSpec {
  int batch_size = 10;
  int patch_lr_w = 112;
  int patch_lr_h = 64;
  std::uint64_t seed = 0;
  bool shuffle = true;
  bool augment = true;
};

namespace detail {

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a combined key
  std::uint64_t z = a * 0x9E3779B97F4A7C15ull ^ (b + 0x632BE59BD9B4E019ull + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace detail

// Batches of entry indices for one epoch. The order is a pure function of
// (seed, epoch). Training drops a trailing partial batch, evaluation keeps it.
inline std::vector<std::vector<std::size_t>> make_batches(std::size_t count, const BatchSpec& spec, int epoch,
                                                          bool training) {
  STARNET_EXPECT(spec.batch_size > 0, "make_batches: batch size must be positive");
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  if (spec.shuffle && training) {
    std::mt19937_64 rng(detail::mix(spec.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = count; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  }
  std::vector<std::vector<std::size_t>> out;
  const std::size_t b = static_cast<std::size_t>(spec.batch_size);
  for (std::size_t i = 0; i < count; i += b) {
    if (i + b > count && training) break;
    out.emplace_back(order.begin() + i, order.begin() + std::min(count, i + b));
  }
  return out;
}

// Random training augmentation of an H x W HR triplet for one (seed, epoch,
// entry). Odd quarter turns are only drawn when the transposed crop fits.
inline AugmentSpec sample_augment(const BatchSpec& spec, int scale, int H, int W, int epoch, std::size_t entry) {
  std::mt19937_64 rng(detail::mix(detail::mix(spec.seed ^ 0xA5A5A5A5ull, static_cast<std::uint64_t>(epoch)), entry));
  const int ph = spec.patch_lr_h * scale, pw = spec.patch_lr_w * scale;
  STARNET_EXPECT(ph <= H && pw <= W, "training patch " + std::to_string(pw) + "x" + std::to_string(ph) +
                                         " exceeds the frame size " + std::to_string(W) + "x" + std::to_string(H));
  AugmentSpec a;
  const bool transposed_fits = pw <= H && ph <= W;
  a.rotate_quarter_turns = static_cast<int>(rng() % 4);
  if (a.rotate_quarter_turns % 2 == 1 && !transposed_fits && ph != pw) a.rotate_quarter_turns -= 1;
  a.flip_horizontal = rng() & 1;
  a.flip_vertical = rng() & 1;
  const bool odd = a.rotate_quarter_turns % 2 == 1;
  a.crop_h = odd ? pw : ph;
  a.crop_w = odd ? ph : pw;
  const int rows = (H - a.crop_h) / scale + 1, cols = (W - a.crop_w) / scale + 1;
  a.crop_row = static_cast<int>(rng() % rows) * scale;
  a.crop_col = static_cast<int>(rng() % cols) * scale;
  return a;
}

// Batched tensors for one step. LR tensors are N x 3 x h x w, HR tensors
// N x 3 x (scale h) x (scale w), flows N x 2 x h x w.
template <typename T = float>
struct Batch {
  std::vector<std::string> ids;
  BasicTensor<T> lr_t, lr_tn, lr_t1;
  BasicTensor<T> hr_t, hr_tn, hr_t1;
  BasicTensor<T> fwd, bwd;
  BasicTensor<T> t_tn, tn_t1, t1_tn, tn_t;  // undefined unless every record has them
};

template <typename T = float>
Batch<T> assemble_batch(const std::vector<TripletRecord>& recs) {
  STARNET_EXPECT(!recs.empty(), "assemble_batch: empty batch");
  Batch<T> b;
  auto images = [&](bool hr, int k) {
    std::vector<ImageRGB> v;
    for (const auto& r : recs) v.push_back(hr ? r.hr[k] : r.lr[k]);
    return images_to_tensor<T>(v);
  };
  auto flows = [&](FlowField TripletRecord::*m) {
    std::vector<FlowField> v;
    for (const auto& r : recs) v.push_back(r.*m);
    return flows_to_tensor<T>(v);
  };
  for (const auto& r : recs) b.ids.push_back(r.id);
  b.lr_t = images(false, 0), b.lr_tn = images(false, 1), b.lr_t1 = images(false, 2);
  b.hr_t = images(true, 0), b.hr_tn = images(true, 1), b.hr_t1 = images(true, 2);
  b.fwd = flows(&TripletRecord::fwd), b.bwd = flows(&TripletRecord::bwd);
  const bool gt = std::all_of(recs.begin(), recs.end(), [](const TripletRecord& r) { return r.has_gt_flows; });
  if (gt) {
    b.t_tn = flows(&TripletRecord::t_tn), b.tn_t1 = flows(&TripletRecord::tn_t1);
    b.t1_tn = flows(&TripletRecord::t1_tn), b.tn_t = flows(&TripletRecord::tn_t);
  }
  return b;
}

// Number of loader threads from STARNET_LOADER_THREADS (default 1).
inline int loader_threads_from_env() {
  const char* s = std::getenv("STARNET_LOADER_THREADS");
  if (!s || !*s) return 1;
  char* end = nullptr;
  const long v = std::strtol(s, &end, 10);
  if (*end != '\0' || v < 1 || v > 256) throw ConfigError(std::string("STARNET_LOADER_THREADS must be 1..256, got '") + s + "'");
  return static_cast<int>(v);
}

// Runs fn(i) for i in [0, count) on up to `threads` workers. Results land
// by position, so the outcome does not depend on scheduling. The first
// exception (lowest index) is rethrown.
template <typename R>
std::vector<R> parallel_map(std::size_t count, int threads, const std::function<R(std::size_t)>& fn) {
  std::vector<std::optional<R>> slots(count);
  std::vector<std::exception_ptr> errors(count);
  auto run = [&](std::size_t i) {
    try {
      slots[i] = fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t workers = std::min<std::size_t>(std::max(threads, 1), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next++) < count;) run(i);
      });
    for (auto& th : pool) th.join();
  }
  std::vector<R> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    out.push_back(std::move(*slots[i]));
  }
  return out;
}

// Produces the batches of one epoch on a background thread, one batch ahead
// of the consumer. Records within a batch load on `threads` workers.
template <typename T = float>
class BatchStream {
 public:
  using Loader = std::function<TripletRecord(std::size_t)>;

  BatchStream(std::vector<std::vector<std::size_t>> batches, Loader load, int threads, std::size_t depth = 2)
      : batches_(std::move(batches)), load_(std::move(load)), threads_(threads), depth_(depth) {
    producer_ = std::thread([this] { produce(); });
  }
  BatchStream(const BatchStream&) = delete;
  BatchStream& operator=(const BatchStream&) = delete;
  ~BatchStream() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    producer_.join();
  }

  std::size_t size() const { return batches_.size(); }

  // Next batch in order, or nullopt at the end of the epoch.
  std::optional<Batch<T>> next() {
    std::unique_lock<std::mutex> lk(mu_);
    cv_.wait(lk, [this] { return !queue_.empty() || done_; });
    if (queue_.empty()) {
      if (error_) std::rethrow_exception(std::exchange(error_, nullptr));
      return std::nullopt;
    }
    auto b = std::move(queue_.front());
    queue_.pop_front();
    cv_.notify_all();
    return b;
  }

 private:
  void produce() {
    try {
      for (const auto& ids : batches_) {
        auto recs = parallel_map<TripletRecord>(ids.size(), threads_, [&](std::size_t k) { return load_(ids[k]); });
        auto b = assemble_batch<T>(recs);
        std::unique_lock<std::mutex> lk(mu_);
        cv_.wait(lk, [this] { return queue_.size() < depth_ || stop_; });
        if (stop_) break;
        queue_.push_back(std::move(b));
        cv_.notify_all();
      }
    } catch (...) {
      std::lock_guard<std::mutex> lk(mu_);
      error_ = std::current_exception();
    }
    std::lock_guard<std::mutex> lk(mu_);
    done_ = true;
    cv_.notify_all();
  }

  std::vector<std::vector<std::size_t>> batches_;
  Loader load_;
  int threads_;
  std::size_t depth_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Batch<T>> queue_;
  bool done_ = false, stop_ = false;
  std::exception_ptr error_;
  std::thread producer_;
};

}  // namespace starnet
