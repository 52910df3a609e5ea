#pragma once

// Training and finetuning loops with per-epoch learning-rate decay, a
// non-finite guard and per-epoch checkpoints.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "starnet/checkpoint.hpp"
#include "starnet/config.hpp"
#include "starnet/data.hpp"
#include "starnet/losses.hpp"

namespace starnet {

struct StepStats {
  double total = 0, l1 = 0, flow = 0, feature = 0;
};

struct EpochLog {
  int epoch = 0;
  double lr = 0;
  int steps = 0;
  StepStats mean;  // averaged over the epoch's steps
};

// Network inputs of one batch. Flows are omitted when the model ignores them.
template <typename T>
ForwardInputs<T> batch_inputs(const Batch<T>& b, const ModelConfig& cfg) {
  ForwardInputs<T> in{b.lr_t, b.lr_t1, {}, {}};
  if (cfg.ablation.use_flow_input) in.F_fwd = b.fwd, in.F_bwd = b.bwd;
  return in;
}

template <typename T>
LossTargets<T> batch_targets(const Batch<T>& b) {
  return {b.hr_t, b.hr_tn, b.hr_t1, b.lr_tn, b.t_tn, b.tn_t1, b.t1_tn, b.tn_t};
}

// STAR_T_HR feeds the original frames to the network, so its data is loaded
// without downscaling.
inline LoadOptions load_options_for(const TrainConfig& cfg, Variant v) {
  return {v == Variant::STAR_T_HR ? 1 : cfg.model.scale, cfg.data.flow_source, cfg.data.flow};
}

// Names the first non-finite quantity: a parameter if one is corrupt,
// otherwise the earliest graph node.
template <typename T>
std::string diagnose_non_finite(const StarnetParams<T>& params, const BasicTensor<T>& out) {
  for (const auto* g : params.groups())
    for (const auto& p : g->items())
      for (T v : p.tensor.data())
        if (!std::isfinite(v)) return "parameter " + p.name;
  auto op = first_non_finite(out);
  return op.empty() ? std::string("none found") : "tensor from op " + op;
}

template <typename T = float>
struct TrainSession {
  TrainConfig cfg;
  Starnet<T> model;
  AdaMax<T> opt;
  int next_epoch = 0;

  explicit TrainSession(TrainConfig c)
      : cfg(std::move(c)), model(cfg.model), opt(AdaMaxHyper{cfg.lr_initial, cfg.beta1, cfg.beta2, cfg.epsilon}) {}
};

template <typename T>
StepStats train_step(TrainSession<T>& s, const Batch<T>& b, const FeatureExtractor<T>* fx, int epoch, int step) {
  auto& model = s.model;
  model.params().zero_grad();
  auto out = model.forward(batch_inputs(b, model.config()));
  auto lv = compute_loss(out, batch_targets(b), s.cfg.weights, VariantSpec::of(s.cfg.variant), s.cfg.loss_kind, fx);
  const auto where = "epoch " + std::to_string(epoch) + " step " + std::to_string(step);
  if (!std::isfinite(static_cast<double>(lv.total.item())))
    throw NumericalError("non-finite loss at " + where + "; first non-finite: " +
                         diagnose_non_finite(model.params(), lv.total));
  backward(lv.total);
  for (const auto* g : model.params().groups())
    for (const auto& p : g->items())
      for (T v : p.tensor.grad())
        if (!std::isfinite(v)) throw NumericalError("non-finite gradient at " + where + " in parameter " + p.name);
  auto groups = model.params().groups();
  s.opt.step(groups);
  return {static_cast<double>(lv.total.item()), lv.l1, lv.flow, lv.feature};
}

// Loads one training record with its epoch-specific augmentation.
inline TripletRecord load_training_record(const DatasetIndex& index, std::size_t i, const BatchSpec& spec,
                                          const LoadOptions& opt, int epoch) {
  TripletRecord base;
  base.id = index.entries.at(i);
  base.has_gt_flows = index.split == Split::Train;
  if (opt.flow_source == FlowSource::FloDir) {
    base = load_triplet(index, i, opt);
  } else {
    // Flows are estimated after cropping, so only the frames are read here.
    const fs::path dir = index.sequence_dir(i);
    for (int k = 0; k < 3; ++k) base.hr[k] = read_png((dir / ("im" + std::to_string(k + 1) + ".png")).string());
  }
  const int H = base.hr[0].height(), W = base.hr[0].width();
  AugmentSpec a;
  if (spec.augment) {
    a = sample_augment(spec, opt.scale, H, W, epoch, i);
  } else {
    a.crop_h = spec.patch_lr_h * opt.scale;
    a.crop_w = spec.patch_lr_w * opt.scale;
    STARNET_EXPECT(a.crop_h <= H && a.crop_w <= W, "training patch exceeds the frame size of " + base.id);
  }
  return augment_triplet(base, a, opt);
}

struct RunOptions {
  bool finetune = false;
  bool dry_run = false;         // walk the schedule without touching data
  std::string checkpoint_prefix = "star";
  int loader_threads = 1;
  std::function<void(const EpochLog&)> on_epoch;
  std::function<void(int epoch, int step, const StepStats&)> on_step;
};

template <typename T>
Checkpoint make_checkpoint(const TrainSession<T>& s) {
  Checkpoint c;
  capture_parameters(s.model, c);
  capture_optimizer(s.opt, c);
  c.epoch = s.next_epoch;
  c.variant = s.cfg.variant;
  // Batch order and augmentation are counter-based on (seed, epoch), so this
  // pair is the complete sampler state.
  c.rng_state = json{{"batch_seed", s.cfg.batch.seed}, {"next_epoch", s.next_epoch}}.dump();
  c.train_config = to_json_value(s.cfg);
  return c;
}

// Runs the remaining epochs of the schedule. Returns the per-epoch log.
template <typename T>
std::vector<EpochLog> run_epochs(TrainSession<T>& s, const DatasetIndex* index, const RunOptions& ro) {
  const auto& cfg = s.cfg;
  const int epochs = ro.finetune ? cfg.finetune_epochs : cfg.epochs_total;
  const int every = ro.finetune ? cfg.finetune_decay_every : cfg.lr_decay_every;
  std::vector<EpochLog> log;
  std::unique_ptr<FeatureExtractor<T>> fx;
  if (cfg.loss_kind == LossKind::Lf) fx = std::make_unique<SeededConvExtractor<T>>();
  const LoadOptions lo = load_options_for(cfg, cfg.variant);
  for (int epoch = s.next_epoch; epoch < epochs; ++epoch) {
    EpochLog el;
    el.epoch = epoch;
    el.lr = scheduled_lr(cfg.lr_initial, cfg.lr_decay_factor, every, epoch);
    s.opt.hyper().learning_rate = el.lr;
    if (!ro.dry_run) {
      STARNET_EXPECT(index != nullptr, "run_epochs: a dataset index is required");
      auto batches = make_batches(index->size(), cfg.batch, epoch, true);
      if (batches.empty())
        throw ConfigError("dataset has " + std::to_string(index->size()) + " entries, fewer than one batch of " +
                          std::to_string(cfg.batch.batch_size));
      if (cfg.steps_per_epoch > 0 && batches.size() > static_cast<std::size_t>(cfg.steps_per_epoch))
        batches.resize(cfg.steps_per_epoch);
      BatchStream<T> stream(
          std::move(batches), [&](std::size_t i) { return load_training_record(*index, i, cfg.batch, lo, epoch); },
          ro.loader_threads);
      while (auto b = stream.next()) {
        auto st = train_step(s, *b, fx.get(), epoch, el.steps);
        if (ro.on_step) ro.on_step(epoch, el.steps, st);
        el.mean.total += st.total, el.mean.l1 += st.l1, el.mean.flow += st.flow, el.mean.feature += st.feature;
        ++el.steps;
      }
      if (el.steps) {
        el.mean.total /= el.steps, el.mean.l1 /= el.steps, el.mean.flow /= el.steps, el.mean.feature /= el.steps;
      }
    }
    s.next_epoch = epoch + 1;
    log.push_back(el);
    if (ro.on_epoch) ro.on_epoch(el);
    if (!ro.dry_run && !cfg.checkpoint_dir.empty()) {
      fs::create_directories(cfg.checkpoint_dir);
      auto ck = make_checkpoint(s);
      char name[64];
      std::snprintf(name, sizeof name, "_epoch_%03d.ckpt", epoch);
      save_checkpoint(ck, (fs::path(cfg.checkpoint_dir) / (ro.checkpoint_prefix + name)).string());
      save_checkpoint(ck, (fs::path(cfg.checkpoint_dir) / (ro.checkpoint_prefix + "_latest.ckpt")).string());
    }
  }
  return log;
}

// From-scratch training always optimizes the full STAR objective.
template <typename T = float>
TrainSession<T> start_training(const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.variant != Variant::STAR)
    throw ConfigError("training from scratch uses variant STAR; use finetune for " + variant_name(cfg.variant));
  return TrainSession<T>(cfg);
}

// Continues a run from one of its own checkpoints.
template <typename T = float>
TrainSession<T> resume_training(const Checkpoint& ck, const TrainConfig& cfg) {
  cfg.validate();
  TrainSession<T> s(cfg);
  restore_parameters(ck, s.model);
  restore_optimizer(ck, s.opt);
  s.next_epoch = ck.epoch;
  return s;
}

// Finetuning starts from a base checkpoint with a fresh optimizer and the
// finetune schedule. The model section of `cfg` must match the checkpoint.
template <typename T = float>
TrainSession<T> start_finetune(const Checkpoint& base, const TrainConfig& cfg) {
  cfg.validate();
  auto diff = model_config_diff(base.model, cfg.model);
  if (!diff.empty()) {
    std::string msg = "refusing to finetune: model configuration differs from the checkpoint (checkpoint vs config):";
    for (const auto& d : diff) msg += "\n  " + d;
    throw ConfigError(msg);
  }
  TrainConfig c = cfg;
  c.model.seed = base.model.seed;
  TrainSession<T> s(c);
  restore_parameters(base, s.model);
  return s;
}

}  // namespace starnet
