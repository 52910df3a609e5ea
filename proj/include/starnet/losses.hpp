#pragma once

// Training objectives: per-pixel L1, a feature-space loss with a pluggable
// extractor, the flow composition loss, and their variant-masked sums.

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "starnet/model.hpp"

namespace starnet {

template <typename T>
BasicTensor<T> l1_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
  STARNET_EXPECT(pred.shape() == target.shape(),
                 "l1_loss: shape mismatch " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
  const T per_sample = static_cast<T>(pred.numel() / static_cast<std::size_t>(pred.dim(0)));
  return abs_error_sum(pred, target, per_sample);
}

// Differentiable map from N x 3 x H x W images to features at 1/32 resolution.
template <typename T>
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual BasicTensor<T> features(const BasicTensor<T>& images) const = 0;
  static constexpr int kMinSide = 32;
};

// Five stride-2 conv + ReLU stages with fixed random weights. The weights do
// not require gradients, so only the input is differentiated.
template <typename T>
class SeededConvExtractor final : public FeatureExtractor<T> {
 public:
  explicit SeededConvExtractor(std::uint64_t seed = 19, std::array<int, 5> widths = {16, 32, 32, 64, 64}) {
    std::mt19937_64 rng(seed);
    int cin = 3;
    for (int w : widths) {
      Conv<T> c;
      c.geo = {2, 1};
      c.weight = BasicTensor<T>::zeros({w, cin, 3, 3});
      c.bias = BasicTensor<T>::zeros({w});
      init_he_uniform(c.weight, cin * 9, rng, 0.0);
      stages_.push_back(c);
      cin = w;
    }
  }

  BasicTensor<T> features(const BasicTensor<T>& images) const override {
    STARNET_EXPECT(images.rank() == 4 && images.dim(2) >= this->kMinSide && images.dim(3) >= this->kMinSide,
                   "feature extractor: images must be at least 32x32, got " + shape_str(images.shape()));
    BasicTensor<T> x = images;
    for (const auto& c : stages_) x = relu(c(x));
    return x;
  }

 private:
  std::vector<Conv<T>> stages_;
};

// Mean squared feature distance per sample, summed over samples.
template <typename T>
BasicTensor<T> feature_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target, const FeatureExtractor<T>& fx) {
  STARNET_EXPECT(pred.shape() == target.shape(),
                 "feature_loss: shape mismatch " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
  auto fp = fx.features(pred);
  auto ft = fx.features(target);
  const T per_sample = static_cast<T>(fp.numel() / static_cast<std::size_t>(fp.dim(0)));
  return squared_error_sum(fp, ft, per_sample);
}

// ||F^_fwd - (F_t_tn + F_tn_t1)||^2 + ||F^_bwd - (F_t1_tn + F_tn_t)||^2, each
// averaged over pixels and summed over samples. Arguments are N x 2 x h x w.
template <typename T>
BasicTensor<T> flow_refine_loss(const BasicTensor<T>& refined_fwd, const BasicTensor<T>& refined_bwd,
                                const BasicTensor<T>& F_t_tn, const BasicTensor<T>& F_tn_t1,
                                const BasicTensor<T>& F_t1_tn, const BasicTensor<T>& F_tn_t) {
  for (const auto* f : {&refined_bwd, &F_t_tn, &F_tn_t1, &F_t1_tn, &F_tn_t})
    STARNET_EXPECT(f->shape() == refined_fwd.shape(), "flow_refine_loss: all six flow fields must share dimensions");
  STARNET_EXPECT(refined_fwd.rank() == 4 && refined_fwd.dim(1) == 2, "flow_refine_loss: expected N x 2 x h x w flows");
  const T pixels = static_cast<T>(refined_fwd.dim(2) * refined_fwd.dim(3));
  // The composed targets carry no gradient.
  auto target = [](const BasicTensor<T>& a, const BasicTensor<T>& b) {
    auto t = BasicTensor<T>::zeros(a.shape());
    for (std::size_t i = 0; i < t.numel(); ++i) t.data()[i] = a.data()[i] + b.data()[i];
    return t;
  };
  return add(squared_error_sum(refined_fwd, target(F_t_tn, F_tn_t1), pixels),
             squared_error_sum(refined_bwd, target(F_t1_tn, F_tn_t), pixels));
}

enum class Variant { STAR, STAR_ST, STAR_S, STAR_T_HR, STAR_T_LR };

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::STAR: return "STAR";
    case Variant::STAR_ST: return "STAR_ST";
    case Variant::STAR_S: return "STAR_S";
    case Variant::STAR_T_HR: return "STAR_T_HR";
    case Variant::STAR_T_LR: return "STAR_T_LR";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  for (Variant v : {Variant::STAR, Variant::STAR_ST, Variant::STAR_S, Variant::STAR_T_HR, Variant::STAR_T_LR})
    if (variant_name(v) == s) return v;
  throw ConfigError("unknown variant '" + s + "' (expected STAR, STAR_ST, STAR_S, STAR_T_HR or STAR_T_LR)");
}

// Which loss terms a variant optimizes. Space: I_sr_t and I_sr_t1 against
// HR; Time: I_l_tn against the LR middle frame; Space-Time: I_sr_tn against
// the HR middle frame.
struct VariantSpec {
  Variant name = Variant::STAR;
  bool space = true;
  bool time = true;
  bool space_time = true;

  static VariantSpec of(Variant v) {
    switch (v) {
      case Variant::STAR: return {v, true, true, true};
      case Variant::STAR_ST: return {v, true, false, true};
      case Variant::STAR_S: return {v, true, false, false};
      case Variant::STAR_T_HR:
      case Variant::STAR_T_LR: return {v, false, true, false};
    }
    return {};
  }
};

struct LossWeights {
  double w1 = 1.0;
  double w2 = 0.1;
  double w3 = 0.1;
};

enum class LossKind { Lr, Lf };

inline std::string loss_kind_name(LossKind k) { return k == LossKind::Lr ? "L_r" : "L_f"; }

inline LossKind parse_loss_kind(const std::string& s) {
  if (s == "L_r" || s == "Lr") return LossKind::Lr;
  if (s == "L_f" || s == "Lf") return LossKind::Lf;
  throw ConfigError("unknown loss kind '" + s + "' (expected L_r or L_f)");
}

template <typename T>
struct LossTargets {
  BasicTensor<T> hr_t, hr_tn, hr_t1;  // HR ground truth
  BasicTensor<T> lr_tn;               // middle frame on the input grid
  BasicTensor<T> F_t_tn, F_tn_t1, F_t1_tn, F_tn_t;  // ground-truth-side flows
};

template <typename T>
struct LossValue {
  BasicTensor<T> total;
  double l1 = 0;
  double flow = 0;
  double feature = 0;
};

// L_r = w1 * sum(L1 over active terms) + w2 * L_flow, and for L_f additionally
// + w3 * sum(feature loss over active HR terms). Inactive terms are never
// added to the graph.
template <typename T>
LossValue<T> compute_loss(const StageOutputs<T>& out, const LossTargets<T>& tgt, const LossWeights& weights,
                          const VariantSpec& variant, LossKind kind, const FeatureExtractor<T>* fx = nullptr) {
  STARNET_EXPECT(weights.w1 >= 0 && weights.w2 >= 0 && weights.w3 >= 0, "loss weights must be non-negative");
  std::vector<std::pair<BasicTensor<T>, BasicTensor<T>>> hr_terms;
  auto need = [](const BasicTensor<T>& t, const char* what) {
    STARNET_EXPECT(t.defined(), std::string("loss: variant requires target ") + what);
  };
  if (variant.space) {
    need(tgt.hr_t, "hr_t");
    need(tgt.hr_t1, "hr_t1");
    hr_terms.emplace_back(out.I_sr_t, tgt.hr_t);
    hr_terms.emplace_back(out.I_sr_t1, tgt.hr_t1);
  }
  if (variant.space_time) {
    need(tgt.hr_tn, "hr_tn");
    hr_terms.emplace_back(out.I_sr_tn, tgt.hr_tn);
  }
  BasicTensor<T> l1_total;
  auto accumulate = [](BasicTensor<T>& acc, const BasicTensor<T>& term) { acc = acc.defined() ? add(acc, term) : term; };
  for (const auto& [p, t] : hr_terms) accumulate(l1_total, l1_loss(p, t));
  if (variant.time) {
    need(tgt.lr_tn, "lr_tn");
    accumulate(l1_total, l1_loss(out.I_l_tn, tgt.lr_tn));
  }
  STARNET_EXPECT(l1_total.defined(), "loss: variant activates no terms");

  LossValue<T> v;
  v.l1 = l1_total.item();
  v.total = scale(l1_total, static_cast<T>(weights.w1));
  if (out.flow_refined && weights.w2 > 0) {
    need(tgt.F_t_tn, "F_t_tn");
    need(tgt.F_tn_t1, "F_tn_t1");
    need(tgt.F_t1_tn, "F_t1_tn");
    need(tgt.F_tn_t, "F_tn_t");
    auto lf = flow_refine_loss(out.F_fwd, out.F_bwd, tgt.F_t_tn, tgt.F_tn_t1, tgt.F_t1_tn, tgt.F_tn_t);
    v.flow = lf.item();
    v.total = add(v.total, scale(lf, static_cast<T>(weights.w2)));
  }
  if (kind == LossKind::Lf && !hr_terms.empty()) {
    STARNET_EXPECT(fx != nullptr, "loss: L_f needs a feature extractor");
    BasicTensor<T> feat;
    for (const auto& [p, t] : hr_terms) accumulate(feat, feature_loss(p, t, *fx));
    v.feature = feat.item();
    v.total = add(v.total, scale(feat, static_cast<T>(weights.w3)));
  }
  return v;
}

}  // namespace starnet
