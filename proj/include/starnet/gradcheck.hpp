#pragma once

// Finite-difference check of the full network gradient. Runs the double
// instantiation of the model on a small synthetic triplet and compares the
// backward pass against central differences at sampled coordinates of all
// eight weight groups, under both L_r and L_f.
//
// The network is piecewise smooth (relu, prelu, absolute error). A step of
// eps moves many pre-activations across zero, and the plain difference then
// measures a mix of linear pieces. The pass/fail verdict therefore uses
// differences taken with every kink side frozen at the base point (the piece
// whose derivative backward computes). Plain differences are reported too.

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "starnet/data.hpp"
#include "starnet/losses.hpp"
#include "starnet/synth.hpp"

namespace starnet {

struct GradcheckOptions {
  int coordinates = 240;     // spread evenly over the groups present
  double eps = 1e-3;
  double tolerance = 1e-3;
  // Relative error is |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  int lr_size = 16;
  std::uint64_t data_seed = 11;
  std::uint64_t sample_seed = 5;
};

struct GroupResult {
  std::string group;
  int checked = 0;
  double max_rel_error = 0;
  std::string worst;  // parameter[index] with the largest error
  double max_plain_error = 0;  // same coordinates, kinks not frozen
  bool pass = true;
};

struct GradcheckRun {
  LossKind kind = LossKind::Lr;
  std::vector<GroupResult> groups;
};

struct GradcheckReport {
  double tolerance = 0;
  std::vector<GradcheckRun> runs;

  bool pass() const {
    for (const auto& r : runs)
      for (const auto& g : r.groups)
        if (!g.pass) return false;
    return true;
  }

  int coordinates() const {
    int n = 0;
    for (const auto& r : runs)
      for (const auto& g : r.groups) n += g.checked;
    return n;
  }

  std::string text() const {
    std::ostringstream os;
    for (const auto& r : runs) {
      os << "loss " << loss_kind_name(r.kind) << "\n";
      for (const auto& g : r.groups) {
        os << "  " << std::left << std::setw(11) << g.group << std::right;
        if (g.checked == 0) {
          os << " absent\n";
          continue;
        }
        os << std::setw(4) << g.checked << " coords  max rel err " << std::scientific << std::setprecision(3)
           << g.max_rel_error << "  plain " << g.max_plain_error << std::defaultfloat << "  "
           << (g.pass ? "ok" : "FAIL") << "  (" << g.worst << ")\n";
      }
    }
    os << (pass() ? "PASS" : "FAIL") << " tolerance " << tolerance << "\n";
    return os.str();
  }
};

// The fixed inputs and targets of a gradcheck run.
struct GradcheckData {
  ForwardInputs<double> in;
  LossTargets<double> tgt;
};

inline GradcheckData gradcheck_data(const ModelConfig& cfg, const GradcheckOptions& opt) {
  SynthConfig sc;
  sc.height = sc.width = opt.lr_size * cfg.scale;
  auto rec = make_triplet("gradcheck", synthetic_triplet(opt.data_seed, sc), Split::Train, {cfg.scale, FlowSource::Estimate, {}});
  GradcheckData d;
  d.in = {image_to_tensor<double>(rec.lr[0]), image_to_tensor<double>(rec.lr[2]), {}, {}};
  if (cfg.ablation.use_flow_input) d.in.F_fwd = flow_to_tensor<double>(rec.fwd), d.in.F_bwd = flow_to_tensor<double>(rec.bwd);
  d.tgt = {image_to_tensor<double>(rec.hr[0]), image_to_tensor<double>(rec.hr[1]), image_to_tensor<double>(rec.hr[2]),
           image_to_tensor<double>(rec.lr[1]),  flow_to_tensor<double>(rec.t_tn),  flow_to_tensor<double>(rec.tn_t1),
           flow_to_tensor<double>(rec.t1_tn),   flow_to_tensor<double>(rec.tn_t)};
  return d;
}

// `prepare` may alter the model before checking (the harness tests use it to
// corrupt one backward rule).
inline GradcheckReport gradcheck(ModelConfig cfg, const GradcheckOptions& opt = {},
                                 const std::function<void(Starnet<double>&)>& prepare = {}) {
  STARNET_EXPECT(opt.lr_size <= 16, "gradcheck: toy sizes only (LR side <= 16)");
  // A zero flow head would leave the rest of the U-Net with exactly zero
  // gradient, which checks nothing.
  cfg.flow_head_zero_init = false;
  Starnet<double> model(cfg);
  if (prepare) prepare(model);
  const auto data = gradcheck_data(cfg, opt);
  SeededConvExtractor<double> fx;
  const auto variant = VariantSpec::of(Variant::STAR);
  const LossWeights weights;

  // Sample coordinates once; both losses see the same ones.
  struct Coord {
    BasicTensor<double> tensor;
    std::string name;
    std::size_t index;
  };
  std::vector<std::vector<Coord>> coords(kThetaGroups.size());
  std::mt19937_64 rng(opt.sample_seed);
  auto groups = model.params().groups();
  int present = 0;
  for (auto* g : groups) present += g->size() > 0;
  const int per_group = (opt.coordinates + std::max(present, 1) - 1) / std::max(present, 1);
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& items = groups[gi]->items();
    if (items.empty()) continue;
    std::vector<std::size_t> order(items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    for (int k = 0; k < per_group; ++k) {
      const auto& p = items[order[k % order.size()]];
      coords[gi].push_back({p.tensor, p.name, static_cast<std::size_t>(rng() % p.tensor.numel())});
    }
  }

  GradcheckReport rep;
  rep.tolerance = opt.tolerance;
  auto rel = [&](double a, double n) { return std::fabs(a - n) / std::max({std::fabs(a), std::fabs(n), opt.floor}); };
  for (LossKind kind : {LossKind::Lr, LossKind::Lf}) {
    auto loss = [&] {
      auto out = model.forward(data.in);
      return compute_loss(out, data.tgt, weights, variant, kind, &fx).total;
    };
    BranchTape tape;
    model.params().zero_grad();
    {
      BranchTapeScope rec(tape, BranchTape::Mode::Record);
      backward(loss());
    }
    auto eval = [&](bool frozen) {
      NoGradGuard ng;
      if (!frozen) return static_cast<double>(loss().item());
      BranchTapeScope replay(tape, BranchTape::Mode::Replay);
      return static_cast<double>(loss().item());
    };
    GradcheckRun run;
    run.kind = kind;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      GroupResult gr;
      gr.group = kThetaGroups[gi];
      for (auto& c : coords[gi]) {
        const double analytic = c.tensor.grad()[c.index];
        double& theta = c.tensor.data()[c.index];
        const double keep = theta;
        double diff[2];
        for (int frozen = 0; frozen < 2; ++frozen) {
          theta = keep + opt.eps;
          const double fp = eval(frozen);
          theta = keep - opt.eps;
          const double fm = eval(frozen);
          theta = keep;
          diff[frozen] = (fp - fm) / (2 * opt.eps);
        }
        const double err = rel(analytic, diff[1]);
        gr.max_plain_error = std::max(gr.max_plain_error, rel(analytic, diff[0]));
        ++gr.checked;
        if (err >= gr.max_rel_error) {
          gr.max_rel_error = err;
          std::ostringstream w;
          w << c.name << "[" << c.index << "] analytic " << std::setprecision(6) << analytic << " numeric " << diff[1];
          gr.worst = w.str();
        }
      }
      gr.pass = gr.max_rel_error <= opt.tolerance;
      run.groups.push_back(gr);
    }
    rep.runs.push_back(run);
  }
  return rep;
}

}  // namespace starnet
