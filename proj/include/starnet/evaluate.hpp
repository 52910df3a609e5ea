#pragma once

// Evaluation over a test index: PSNR / SSIM per output frame, IE on the
// interpolated frames, a text report and a tab-separated table.

#include <cstdint>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "starnet/checkpoint.hpp"
#include "starnet/metrics.hpp"
#include "starnet/train.hpp"

namespace starnet {

inline constexpr std::array<const char*, 4> kOutputNames = {"I_sr_t", "I_sr_tn", "I_sr_t1", "I_l_tn"};

struct EvalOptions {
  bool interpolation_error = true;
  PsnrMode psnr_mode = PsnrMode::Rgb;
  int loader_threads = 1;
  std::ostream* warnings = nullptr;
};

// Predictions and ground truth for the four outputs; absent entries are
// empty images.
struct OutputImages {
  std::array<ImageRGB, 4> pred;
  std::array<ImageRGB, 4> gt;
};

struct EvalReport {
  std::string dataset;
  std::size_t dataset_size = 0;
  std::string config_hash;
  std::vector<std::string> columns;
  std::vector<std::string> row_ids;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> skipped;

  std::vector<double> means() const {
    std::vector<double> m(columns.size(), 0.0);
    for (const auto& r : rows)
      for (std::size_t c = 0; c < r.size(); ++c) m[c] += r[c];
    for (auto& v : m) v = rows.empty() ? 0.0 : v / rows.size();
    return m;
  }

  double mean(const std::string& column) const {
    for (std::size_t c = 0; c < columns.size(); ++c)
      if (columns[c] == column) return means()[c];
    throw ContractViolation("EvalReport: no column " + column);
  }

  std::string text() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << "dataset      " << dataset << " (" << dataset_size << " entries)\n";
    os << "config hash  " << config_hash << "\n";
    os << "evaluated    " << rows.size() << "\n";
    os << "skipped      " << skipped.size() << "\n";
    for (const auto& s : skipped) os << "  skipped " << s << "\n";
    const auto m = means();
    os << "\noutput     metric      mean\n";
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const auto dot = columns[c].find('.');
      os << std::left << std::setw(11) << columns[c].substr(0, dot) << std::setw(8) << columns[c].substr(dot + 1)
         << std::right << std::setw(12) << m[c] << "\n";
    }
    return os.str();
  }

  // One row per evaluated entry plus a final "mean" row.
  std::string table() const {
    std::ostringstream os;
    os << std::setprecision(10);
    os << "id";
    for (const auto& c : columns) os << '\t' << c;
    os << '\n';
    for (std::size_t r = 0; r < rows.size(); ++r) {
      os << row_ids[r];
      for (double v : rows[r]) os << '\t' << v;
      os << '\n';
    }
    os << "mean";
    for (double v : means()) os << '\t' << v;
    os << '\n';
    return os.str();
  }
};

inline std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ull;
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline std::vector<std::string> eval_columns(const std::array<bool, 4>& present, bool ie) {
  std::vector<std::string> cols;
  for (int k = 0; k < 4; ++k) {
    if (!present[k]) continue;
    cols.push_back(std::string(kOutputNames[k]) + ".psnr");
    cols.push_back(std::string(kOutputNames[k]) + ".ssim");
    if (ie && (k == 1 || k == 3)) cols.push_back(std::string(kOutputNames[k]) + ".ie");
  }
  return cols;
}

// Metric row for one item, in eval_columns order.
inline std::vector<double> score_outputs(const OutputImages& o, const std::array<bool, 4>& present, const EvalOptions& opt) {
  std::vector<double> row;
  for (int k = 0; k < 4; ++k) {
    if (!present[k]) continue;
    row.push_back(psnr(o.pred[k], o.gt[k], opt.psnr_mode));
    row.push_back(ssim(o.pred[k], o.gt[k]));
    if (opt.interpolation_error && (k == 1 || k == 3)) row.push_back(interp_error(o.pred[k], o.gt[k]));
  }
  return row;
}

// Which outputs have ground truth. The T-SR-on-originals regime has no HR
// reference for its 4x outputs.
inline std::array<bool, 4> outputs_present(Variant v) {
  if (v == Variant::STAR_T_HR) return {false, false, false, true};
  return {true, true, true, true};
}

template <typename T>
OutputImages run_outputs(const Starnet<T>& model, const TripletRecord& r) {
  NoGradGuard ng;
  ForwardInputs<T> in{image_to_tensor<T>(r.lr[0]), image_to_tensor<T>(r.lr[2]), {}, {}};
  if (model.config().ablation.use_flow_input) in.F_fwd = flow_to_tensor<T>(r.fwd), in.F_bwd = flow_to_tensor<T>(r.bwd);
  auto out = model.forward(in);
  OutputImages o;
  o.pred = {tensor_to_image(out.I_sr_t), tensor_to_image(out.I_sr_tn), tensor_to_image(out.I_sr_t1),
            tensor_to_image(out.I_l_tn)};
  o.gt = {r.hr[0], r.hr[1], r.hr[2], r.lr[1]};
  return o;
}

// Evaluates `model` (restored from `ckpt`) on every entry of `index`. Items
// whose size is not divisible by the scale are skipped and listed.
template <typename T = float>
EvalReport evaluate(const Checkpoint& ckpt, const DatasetIndex& index, const DataConfig& data, const EvalOptions& opt = {}) {
  Starnet<T> model(ckpt.model);
  restore_parameters(ckpt, model);
  DatasetIndex test = index;
  test.split = Split::Test;
  const LoadOptions lo{ckpt.variant == Variant::STAR_T_HR ? 1 : ckpt.model.scale, data.flow_source, data.flow};
  const auto present = outputs_present(ckpt.variant);

  EvalReport rep;
  rep.dataset = index.root.string() + " [" + fnv1a_hex([&] {
                  std::string s;
                  for (const auto& e : index.entries) s += e + "\n";
                  return s;
                }()) + "]";
  rep.dataset_size = index.size();
  rep.config_hash = fnv1a_hex(checkpoint_metadata(ckpt).dump());
  rep.columns = eval_columns(present, opt.interpolation_error);

  // Load a few records ahead in parallel, score in order.
  const std::size_t chunk = static_cast<std::size_t>(std::max(1, opt.loader_threads)) * 2;
  for (std::size_t start = 0; start < test.size(); start += chunk) {
    const std::size_t n = std::min(chunk, test.size() - start);
    auto recs = parallel_map<std::optional<TripletRecord>>(n, opt.loader_threads, [&](std::size_t k) {
      try {
        return std::optional<TripletRecord>(load_triplet(test, start + k, lo));
      } catch (const IndivisibleSize&) {
        return std::optional<TripletRecord>();
      }
    });
    for (std::size_t k = 0; k < n; ++k) {
      const auto& id = test.entries[start + k];
      if (!recs[k]) {
        rep.skipped.push_back(id + " (size not divisible by " + std::to_string(lo.scale) + ")");
        if (opt.warnings) *opt.warnings << "warning: skipping " << id << ": frame size not divisible by the scale\n";
        continue;
      }
      rep.row_ids.push_back(id);
      rep.rows.push_back(score_outputs(run_outputs(model, *recs[k]), present, opt));
    }
  }
  return rep;
}

}  // namespace starnet
