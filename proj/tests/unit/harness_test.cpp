#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "starnet/evaluate.hpp"
#include "starnet/gradcheck.hpp"
#include "starnet/infer.hpp"
#include "starnet/synth.hpp"
#include "starnet/train.hpp"

using namespace starnet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("starnet_harness_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ModelConfig tiny_model() {
  ModelConfig m;
  m.c_h = 8;
  m.c_l = 8;
  m.s_residual_blocks = m.st_residual_blocks = m.fb_residual_blocks = m.m_residual_blocks = 1;
  m.flow_channels = {8, 8, 8};
  m.seed = 3;
  return m;
}

TrainConfig tiny_train(const fs::path& root) {
  TrainConfig c;
  c.model = tiny_model();
  c.batch.batch_size = 2;
  c.batch.patch_lr_h = 8;
  c.batch.patch_lr_w = 8;
  c.batch.seed = 4;
  c.steps_per_epoch = 1;
  c.epochs_total = 2;
  c.finetune_epochs = 2;
  c.data.root = root.string();
  c.checkpoint_dir = (root / "ckpt").string();
  return c;
}

SynthConfig synth(int side = 48) {
  SynthConfig s;
  s.height = s.width = side;
  return s;
}

std::vector<char> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<float> all_params(const Starnet<float>& m) {
  std::vector<float> v;
  for (const auto* g : m.params().groups())
    for (const auto& p : g->items()) v.insert(v.end(), p.tensor.data().begin(), p.tensor.data().end());
  return v;
}

}  // namespace

TEST(Schedule, TrainingDryRunMatchesClosedForm) {
  TrainConfig c;
  auto lr = schedule_dry_run(c, false);
  ASSERT_EQ(lr.size(), 70u);
  for (int e = 0; e < 70; ++e) EXPECT_EQ(lr[e], e < 30 ? 1e-4 : e < 60 ? 1e-5 : 1e-6) << e;
  auto ft = schedule_dry_run(c, true);
  ASSERT_EQ(ft.size(), 20u);
  for (int e = 0; e < 20; ++e) EXPECT_EQ(ft[e], e < 10 ? 1e-4 : 1e-5) << e;
}

TEST(Schedule, RunEpochsDryRunLogsTheSchedule) {
  TrainConfig c;
  c.model = tiny_model();
  auto s = start_training(c);
  RunOptions ro;
  ro.dry_run = true;
  auto log = run_epochs(s, nullptr, ro);
  ASSERT_EQ(log.size(), 70u);
  for (const auto& e : log) EXPECT_EQ(e.lr, scheduled_lr(1e-4, 10, 30, e.epoch));
  EXPECT_EQ(log[29].lr, 1e-4);
  EXPECT_EQ(log[30].lr, 1e-5);
  EXPECT_EQ(log[69].lr, 1e-6);
}

TEST(Config, JsonRoundTripAndStrictKeys) {
  TrainConfig c;
  c.model = tiny_model();
  c.loss_kind = LossKind::Lf;
  c.variant = Variant::STAR_ST;
  auto j = to_json_value(c);
  auto back = train_config_from_json(j);
  EXPECT_EQ(to_json_value(back).dump(), j.dump());
  EXPECT_EQ(back.model, c.model);
  j["model"]["c_hh"] = 3;
  EXPECT_THROW(train_config_from_json(j), ConfigError);
  json k = to_json_value(c);
  set_dotted(k, "model.c_h", "32");
  set_dotted(k, "loss_kind", "L_r");
  auto o = train_config_from_json(k);
  EXPECT_EQ(o.model.c_h, 32);
  EXPECT_EQ(o.loss_kind, LossKind::Lr);
  c.epochs_total = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  TempDir d("ckpt");
  write_synthetic_dataset(d.path, 2, 0, 1, synth(32));
  auto cfg = tiny_train(d.path);
  auto index = scan_dataset(d.path, "tri_trainlist.txt", Split::Train);
  auto s = start_training(cfg);
  run_epochs(s, &index, {});
  const auto first = d.path / "ckpt/star_epoch_000.ckpt";
  ASSERT_TRUE(fs::exists(first));
  auto ck = load_checkpoint((d.path / "ckpt/star_latest.ckpt").string());
  save_checkpoint(ck, (d.path / "again.ckpt").string());
  EXPECT_EQ(file_bytes(d.path / "again.ckpt"), file_bytes(d.path / "ckpt/star_latest.ckpt"));
  EXPECT_EQ(ck.epoch, 2);
  EXPECT_EQ(ck.parameter_tensor_count(), s.model.params().tensor_count());
  EXPECT_EQ(ck.parameter_numel(), s.model.params().numel());
  EXPECT_EQ(ck.optimizer_step, 2u);
  EXPECT_EQ(ck.model, cfg.model);
}

TEST(Checkpoint, RejectsBadMagicVersionAndTruncation) {
  Starnet<float> m(tiny_model());
  Checkpoint c;
  capture_parameters(m, c);
  auto bytes = encode_checkpoint(c);
  EXPECT_NO_THROW(decode_checkpoint(bytes));
  auto v = bytes;
  v[8] = 2;
  try {
    decode_checkpoint(v);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("unsupported checkpoint version 2"), std::string::npos) << e.what();
  }
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(magic), FormatError);
  auto cut = bytes;
  cut.resize(cut.size() - 3);
  EXPECT_THROW(decode_checkpoint(cut), FormatError);
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(decode_checkpoint(extra), FormatError);
}

TEST(Checkpoint, RestoreChecksConfigurationAndShapes) {
  Starnet<float> m(tiny_model());
  Checkpoint c;
  capture_parameters(m, c);
  auto other = tiny_model();
  other.c_h = 16;
  Starnet<float> wide(other);
  try {
    restore_parameters(c, wide);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("c_h"), std::string::npos) << e.what();
  }
  c.tensors.erase(c.tensors.begin());
  Starnet<float> same(tiny_model());
  EXPECT_THROW(restore_parameters(c, same), FormatError);
}

TEST(Training, NonFiniteParameterAborts) {
  TempDir d("nan");
  write_synthetic_dataset(d.path, 2, 0, 2, synth(32));
  auto cfg = tiny_train(d.path);
  auto index = scan_dataset(d.path, "tri_trainlist.txt", Split::Train);
  auto s = start_training(cfg);
  auto poisoned = s.model.params().theta_st.items()[0].tensor;
  poisoned.data()[5] = std::numeric_limits<float>::quiet_NaN();
  try {
    run_epochs(s, &index, {});
    FAIL();
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("non-finite loss at epoch 0 step 0"), std::string::npos) << msg;
    EXPECT_NE(msg.find("parameter net_st.lr_in.weight"), std::string::npos) << msg;
  }
}

TEST(Training, IdenticalStepsAreBitIdentical) {
  TempDir d("bits");
  write_synthetic_dataset(d.path, 2, 0, 3, synth(32));
  auto cfg = tiny_train(d.path);
  cfg.checkpoint_dir.clear();
  auto index = scan_dataset(d.path, "tri_trainlist.txt", Split::Train);
  auto a = start_training(cfg), b = start_training(cfg);
  run_epochs(a, &index, {});
  run_epochs(b, &index, {});
  const auto pa = all_params(a.model), pb = all_params(b.model);
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) ASSERT_EQ(pa[i], pb[i]) << "index " << i << " " << [&] {
    std::size_t off = 0;
    for (const auto* g : a.model.params().groups())
      for (const auto& p : g->items()) {
        if (i < off + p.tensor.numel()) return p.name + " @" + std::to_string(i - off);
        off += p.tensor.numel();
      }
    return std::string("?");
  }();
  EXPECT_NE(all_params(a.model), all_params(Starnet<float>(cfg.model)));
}

TEST(Training, ResumeReproducesUninterruptedRun) {
  TempDir d("resume");
  write_synthetic_dataset(d.path, 4, 0, 5, synth(32));
  auto cfg = tiny_train(d.path);
  cfg.epochs_total = 3;
  auto index = scan_dataset(d.path, "tri_trainlist.txt", Split::Train);
  auto straight = start_training(cfg);
  run_epochs(straight, &index, {});

  auto interrupted = start_training(cfg);
  cfg.epochs_total = 1;
  interrupted.cfg.epochs_total = 1;
  run_epochs(interrupted, &index, {});
  auto ck = load_checkpoint(cfg.checkpoint_dir + "/star_latest.ckpt");
  cfg.epochs_total = 3;
  auto resumed = resume_training(ck, cfg);
  EXPECT_EQ(resumed.next_epoch, 1);
  run_epochs(resumed, &index, {});
  EXPECT_EQ(all_params(resumed.model), all_params(straight.model));
}

TEST(Training, FromScratchRequiresStar) {
  TrainConfig c;
  c.model = tiny_model();
  c.variant = Variant::STAR_S;
  EXPECT_THROW(start_training(c), ConfigError);
}

TEST(Finetune, RefusesMismatchedModelWithDiff) {
  Starnet<float> m(tiny_model());
  Checkpoint base;
  capture_parameters(m, base);
  TrainConfig c;
  c.model = tiny_model();
  c.model.c_l = 16;
  c.model.ablation.use_stage2 = false;
  try {
    start_finetune(base, c);
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("c_l"), std::string::npos) << msg;
    EXPECT_NE(msg.find("use_stage2"), std::string::npos) << msg;
  }
  // The seed is not part of the comparison.
  c.model = tiny_model();
  c.model.seed = 99;
  EXPECT_NO_THROW(start_finetune(base, c));
}

TEST(Finetune, AllVariantsFromOneBaseWithoutTouchingIt) {
  TempDir d("finetune");
  write_synthetic_dataset(d.path, 2, 0, 6, synth(32));
  auto cfg = tiny_train(d.path);
  auto index = scan_dataset(d.path, "tri_trainlist.txt", Split::Train);
  auto s = start_training(cfg);
  cfg.epochs_total = 1;
  s.cfg.epochs_total = 1;
  run_epochs(s, &index, {});
  const auto base_path = d.path / "ckpt/star_latest.ckpt";
  const auto before = file_bytes(base_path);
  auto base = load_checkpoint(base_path.string());
  for (auto v : {Variant::STAR_ST, Variant::STAR_S, Variant::STAR_T_LR, Variant::STAR_T_HR}) {
    auto c = cfg;
    c.variant = v;
    c.finetune_epochs = 1;
    auto ft = start_finetune(base, c);
    EXPECT_EQ(ft.opt.step_count(), 0u);
    EXPECT_EQ(all_params(ft.model), all_params(s.model));
    RunOptions ro;
    ro.finetune = true;
    ro.checkpoint_prefix = "ft_" + variant_name(v);
    // STAR_T_HR trains on the original frames, so the patch is read at scale 1.
    auto log = run_epochs(ft, &index, ro);
    ASSERT_EQ(log.size(), 1u);
    EXPECT_TRUE(std::isfinite(log[0].mean.total));
    auto out = load_checkpoint(cfg.checkpoint_dir + "/" + ro.checkpoint_prefix + "_latest.ckpt");
    EXPECT_EQ(out.variant, v);
    if (v == Variant::STAR_S) {
      // Time-only parameters did not move.
      EXPECT_EQ(out.find("net_rec.lr.weight")->data, base.find("net_rec.lr.weight")->data);
      EXPECT_NE(out.find("net_rec.hr.weight")->data, base.find("net_rec.hr.weight")->data);
    }
    if (v == Variant::STAR_T_LR || v == Variant::STAR_T_HR)
      EXPECT_EQ(out.find("net_rec.hr.weight")->data, base.find("net_rec.hr.weight")->data);
  }
  EXPECT_EQ(file_bytes(base_path), before);
}

TEST(Evaluate, ReportColumnsDeterminismAndSkips) {
  TempDir d("eval");
  write_synthetic_dataset(d.path, 0, 2, 7, synth(48));
  // One extra sequence whose size is not divisible by 4.
  SynthConfig odd = synth(30);
  fs::create_directories(d.path / "sequences/odd/00001");
  auto frames = synthetic_triplet(1, odd);
  for (int k = 0; k < 3; ++k) write_png(frames[k], (d.path / ("sequences/odd/00001/im" + std::to_string(k + 1) + ".png")).string());
  std::ofstream(d.path / "tri_testlist.txt", std::ios::app) << "odd/00001\n";
  auto index = scan_dataset(d.path, "tri_testlist.txt", Split::Test);
  Starnet<float> m(tiny_model());
  Checkpoint ck;
  capture_parameters(m, ck);
  std::ostringstream warn;
  EvalOptions opt;
  opt.warnings = &warn;
  auto r1 = evaluate(ck, index, DataConfig{}, opt);
  opt.loader_threads = 3;
  auto r2 = evaluate(ck, index, DataConfig{}, opt);
  EXPECT_EQ(r1.text(), r2.text());
  EXPECT_EQ(r1.table(), r2.table());
  EXPECT_EQ(r1.rows.size(), 2u);
  ASSERT_EQ(r1.skipped.size(), 1u);
  EXPECT_NE(r1.text().find("skipped      1"), std::string::npos);
  EXPECT_NE(warn.str().find("odd/00001"), std::string::npos);
  EXPECT_EQ(r1.columns, (std::vector<std::string>{"I_sr_t.psnr", "I_sr_t.ssim", "I_sr_tn.psnr", "I_sr_tn.ssim",
                                                   "I_sr_tn.ie", "I_sr_t1.psnr", "I_sr_t1.ssim", "I_l_tn.psnr",
                                                   "I_l_tn.ssim", "I_l_tn.ie"}));
  EXPECT_EQ(r1.table().substr(0, 3), "id\t");
}

TEST(Evaluate, PerfectPredictionAnchors) {
  auto f = synthetic_triplet(2, synth(48));
  OutputImages o;
  o.pred = o.gt = {f[0], f[1], f[2], bicubic_resize(f[1], 12, 12)};
  const std::array<bool, 4> all{true, true, true, true};
  auto row = score_outputs(o, all, {});
  auto cols = eval_columns(all, true);
  ASSERT_EQ(row.size(), cols.size());
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (cols[i].ends_with(".psnr")) EXPECT_EQ(row[i], 100.0);
    if (cols[i].ends_with(".ssim")) EXPECT_NEAR(row[i], 1.0, 1e-12);
    if (cols[i].ends_with(".ie")) EXPECT_EQ(row[i], 0.0);
  }
}

TEST(Infer, OutputCounts) {
  Starnet<float> m(tiny_model());
  SynthTexture tex(4, synth());
  for (int n : {2, 3}) {
    std::vector<ImageRGB> frames;
    for (int i = 0; i < n; ++i) frames.push_back(tex.frame(8, 12, i));
    auto st = infer(m, frames, InferMode::Stsr);
    ASSERT_EQ(st.size(), static_cast<std::size_t>(2 * n - 1));
    EXPECT_EQ(st[0].height(), 32);
    EXPECT_EQ(st[0].width(), 48);
    auto c4 = infer(m, frames, InferMode::CascadeT4);
    ASSERT_EQ(c4.size(), static_cast<std::size_t>(4 * n - 3));
    for (const auto& f : c4) EXPECT_EQ(f.width(), 48);
  }
  EXPECT_THROW(infer(m, std::vector<ImageRGB>{tex.frame(8, 8, 0)}, InferMode::Stsr), UsageError);
  EXPECT_THROW(parse_infer_mode("cascade"), UsageError);
}

TEST(Infer, OutputsAreTheClampedReconstructions) {
  Starnet<float> m(tiny_model());
  SynthTexture tex(5, synth());
  std::vector<ImageRGB> frames{tex.frame(8, 8, 0), tex.frame(8, 8, 1)};
  auto st = infer(m, frames, InferMode::Stsr);
  auto o = forward_pair(m, frames[0], frames[1], {});
  EXPECT_EQ(st[0], tensor_to_image(o.I_sr_t));
  EXPECT_EQ(st[1], tensor_to_image(o.I_sr_tn));
  EXPECT_EQ(st[2], tensor_to_image(o.I_sr_t1));
  // The cascade keeps the first pass and inserts in-between frames.
  auto c4 = infer(m, frames, InferMode::CascadeT4);
  EXPECT_EQ(c4[0], st[0]);
  EXPECT_EQ(c4[2], st[1]);
  EXPECT_EQ(c4[4], st[2]);
  for (float v : c4[1].pixels()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(Infer, FramesDirectoryRoundTrip) {
  TempDir d("frames");
  SynthTexture tex(6, synth());
  std::vector<ImageRGB> frames{quantize_roundtrip(tex.frame(8, 8, 0)), quantize_roundtrip(tex.frame(8, 8, 1))};
  write_frames(d.path / "in", frames);
  auto back = read_frames_dir(d.path / "in");
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t k = 0; k < back[i].pixels().size(); ++k) EXPECT_NEAR(back[i].pixels()[k], frames[i].pixels()[k], 1e-6);
  write_png(tex.frame(4, 8, 2), (d.path / "in/frame_00009.png").string());
  EXPECT_THROW(read_frames_dir(d.path / "in"), FormatError);
}

TEST(Gradcheck, ReportListsEightGroupsAndLocalizesFaults) {
  GradcheckOptions opt;
  opt.coordinates = 32;
  opt.lr_size = 8;
  auto clean = gradcheck(tiny_model(), opt);
  ASSERT_EQ(clean.runs.size(), 2u);
  for (const auto& r : clean.runs) {
    ASSERT_EQ(r.groups.size(), 8u);
    for (std::size_t g = 0; g < 8; ++g) EXPECT_EQ(r.groups[g].group, kThetaGroups[g]);
  }
  EXPECT_TRUE(clean.pass()) << clean.text();
  EXPECT_GE(clean.coordinates(), 64);
  for (const char* g : kThetaGroups) EXPECT_NE(clean.text().find(g), std::string::npos);

  // Scale the gradient Net_M's layers write into their weights.
  auto corrupt = gradcheck(tiny_model(), opt, [](Starnet<double>& m) {
    for (const auto& p : m.params().theta_m.items()) p.tensor.node().grad_scale = 1.5;
  });
  EXPECT_FALSE(corrupt.pass());
  for (const auto& r : corrupt.runs)
    for (const auto& g : r.groups) EXPECT_EQ(g.pass, g.group != "theta_m") << corrupt.text();
}

TEST(Gradcheck, AblatedGroupsAreReportedAbsent) {
  GradcheckOptions opt;
  opt.coordinates = 16;
  opt.lr_size = 8;
  auto cfg = tiny_model();
  cfg.ablation.use_stage2 = false;
  auto rep = gradcheck(cfg, opt);
  EXPECT_TRUE(rep.pass());
  EXPECT_NE(rep.text().find("theta_f     absent"), std::string::npos) << rep.text();
}
