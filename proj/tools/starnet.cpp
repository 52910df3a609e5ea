// starnet command line: train, finetune, eval, infer, flow, gradcheck, synth.
//
// Configuration is layered: built-in defaults (or the checkpoint a command
// starts from), then the JSON file given with --config, then --set key=value
// pairs and the dedicated flags. Later layers win.
//
// Exit codes: 0 ok, 1 usage, 2 data/format/config, 3 numerical.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "starnet/evaluate.hpp"
#include "starnet/gradcheck.hpp"
#include "starnet/infer.hpp"
#include "starnet/synth.hpp"
#include "starnet/train.hpp"

namespace {

using namespace starnet;

struct Layers {
  std::string file;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> flags;  // dotted key, value

  void flag(const CLI::Option* opt, const std::string& key, const std::string& value) {
    if (opt->count()) flags.emplace_back(key, value);
  }
};

json resolve(json base, const Layers& l) {
  if (!l.file.empty()) base.merge_patch(read_json_file(l.file));
  for (const auto& s : l.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + s + "'");
    set_dotted(base, s.substr(0, eq), s.substr(eq + 1));
  }
  for (const auto& [k, v] : l.flags) set_dotted(base, k, v);
  return base;
}

TrainConfig resolve_train(json base, const Layers& l) {
  auto cfg = train_config_from_json(resolve(std::move(base), l));
  cfg.validate();
  return cfg;
}

void add_config_options(CLI::App* app, Layers& l) {
  app->add_option("-c,--config", l.file, "JSON config file")->check(CLI::ExistingFile);
  app->add_option("--set", l.sets, "override one config key, e.g. --set model.c_h=32")->take_all();
}

int loader_threads(int flag) { return flag > 0 ? flag : loader_threads_from_env(); }

void print_epoch(const EpochLog& e, bool dry) {
  if (dry) {
    std::printf("epoch %3d  lr %.0e\n", e.epoch, e.lr);
  } else {
    std::printf("epoch %3d  lr %.0e  steps %d  loss %.6f  l1 %.6f  flow %.6f  feature %.6f\n", e.epoch, e.lr, e.steps,
                e.mean.total, e.mean.l1, e.mean.flow, e.mean.feature);
  }
  std::fflush(stdout);
}

RunOptions run_options(bool finetune, bool dry, int threads, bool verbose, const std::string& prefix) {
  RunOptions ro;
  ro.finetune = finetune;
  ro.dry_run = dry;
  ro.loader_threads = threads;
  ro.checkpoint_prefix = prefix;
  ro.on_epoch = [dry](const EpochLog& e) { print_epoch(e, dry); };
  if (verbose)
    ro.on_step = [](int epoch, int step, const StepStats& s) {
      std::printf("  epoch %d step %d  loss %.6f\n", epoch, step, s.total);
    };
  return ro;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw UsageError("unknown split '" + s + "' (expected train or test)");
}

PsnrMode parse_psnr_mode(const std::string& s) {
  if (s == "rgb") return PsnrMode::Rgb;
  if (s == "luma") return PsnrMode::Luma;
  throw UsageError("unknown psnr mode '" + s + "' (expected rgb or luma)");
}

Starnet<float> model_from(const Checkpoint& ck) {
  Starnet<float> m(ck.model);
  restore_parameters(ck, m);
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"STARnet space-time video super-resolution"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");
  const CLI::IsMember kVariants({"STAR", "STAR_ST", "STAR_S", "STAR_T_HR", "STAR_T_LR"});
  const CLI::IsMember kLosses({"L_r", "L_f"});

  // train
  Layers train_l;
  std::string data_root, ckpt_dir, resume, loss;
  int epochs = 0, batch_size = 0, threads = 0, steps = 0;
  std::uint64_t seed = 0;
  bool dry = false, verbose = false, print_config = false;
  auto* train = app.add_subcommand("train", "train the full model from scratch (or resume a run)");
  add_config_options(train, train_l);
  auto* o_root = train->add_option("--data-root", data_root, "dataset root");
  auto* o_ckdir = train->add_option("--checkpoint-dir", ckpt_dir, "where checkpoints are written");
  auto* o_epochs = train->add_option("--epochs", epochs, "total epochs")->check(CLI::PositiveNumber);
  auto* o_batch = train->add_option("--batch-size", batch_size)->check(CLI::PositiveNumber);
  auto* o_steps = train->add_option("--steps-per-epoch", steps, "0 for a full pass")->check(CLI::NonNegativeNumber);
  auto* o_seed = train->add_option("--seed", seed, "batch order and augmentation seed");
  auto* o_loss = train->add_option("--loss", loss, "L_r or L_f")->check(kLosses);
  train->add_option("--resume", resume, "checkpoint of an interrupted run")->check(CLI::ExistingFile);
  train->add_option("--loader-threads", threads, "overrides STARNET_LOADER_THREADS")->check(CLI::PositiveNumber);
  train->add_flag("--dry-run", dry, "print the learning-rate schedule only");
  train->add_flag("-v,--verbose", verbose, "log every step");
  train->add_flag("--print-config", print_config, "print the resolved config and exit");

  // finetune
  Layers ft_l;
  std::string base_path, ft_root, ft_ckdir, ft_variant, ft_loss;
  int ft_epochs = 0, ft_threads = 0, ft_steps = 0;
  bool ft_dry = false, ft_verbose = false, ft_print = false;
  auto* finetune = app.add_subcommand("finetune", "finetune a trained STAR checkpoint into one variant");
  add_config_options(finetune, ft_l);
  finetune->add_option("--base", base_path, "checkpoint to start from (never modified)")->required()->check(CLI::ExistingFile);
  auto* o_var = finetune->add_option("--variant", ft_variant, "target variant")->check(kVariants);
  auto* o_ft_root = finetune->add_option("--data-root", ft_root);
  auto* o_ft_ckdir = finetune->add_option("--checkpoint-dir", ft_ckdir);
  auto* o_ft_epochs = finetune->add_option("--epochs", ft_epochs, "finetune epochs")->check(CLI::PositiveNumber);
  auto* o_ft_steps = finetune->add_option("--steps-per-epoch", ft_steps)->check(CLI::NonNegativeNumber);
  auto* o_ft_loss = finetune->add_option("--loss", ft_loss, "L_r or L_f")->check(kLosses);
  finetune->add_option("--loader-threads", ft_threads)->check(CLI::PositiveNumber);
  finetune->add_flag("--dry-run", ft_dry);
  finetune->add_flag("-v,--verbose", ft_verbose);
  finetune->add_flag("--print-config", ft_print);

  // eval
  Layers ev_l;
  std::string ev_ckpt, ev_root, ev_list, ev_report, ev_table, ev_psnr = "rgb", ev_flow;
  int ev_threads = 0;
  bool no_ie = false;
  auto* eval = app.add_subcommand("eval", "score a checkpoint on a test list");
  add_config_options(eval, ev_l);
  eval->add_option("--checkpoint", ev_ckpt)->required()->check(CLI::ExistingFile);
  auto* o_ev_root = eval->add_option("--data-root", ev_root);
  auto* o_ev_list = eval->add_option("--list", ev_list, "list file relative to the root (default: data.test_list)");
  auto* o_ev_flow = eval->add_option("--flow-source", ev_flow)->check(CLI::IsMember({"estimate", "flo_dir"}));
  eval->add_option("--report", ev_report, "write the summary here instead of stdout");
  eval->add_option("--table", ev_table, "write per-entry scores (tab separated) here");
  eval->add_option("--psnr", ev_psnr)->check(CLI::IsMember({"rgb", "luma"}));
  eval->add_flag("--no-ie", no_ie, "skip interpolation error columns");
  eval->add_option("--loader-threads", ev_threads)->check(CLI::PositiveNumber);

  // infer
  Layers in_l;
  std::string in_ckpt, in_t_ckpt, in_frames, in_out, in_mode = "stsr";
  auto* inf = app.add_subcommand("infer", "run a checkpoint over a directory of PNG frames");
  add_config_options(inf, in_l);
  inf->add_option("--checkpoint", in_ckpt)->required()->check(CLI::ExistingFile);
  inf->add_option("--t-checkpoint", in_t_ckpt, "model for the second pass of cascade_t4")->check(CLI::ExistingFile);
  inf->add_option("--frames", in_frames, "input directory, frames in name order")->required();
  inf->add_option("--out", in_out, "output directory")->required();
  inf->add_option("--mode", in_mode)->check(CLI::IsMember({"stsr", "cascade_t4"}));

  // flow
  Layers fl_l;
  std::string fl_root, fl_list, fl_split = "train";
  auto* flow = app.add_subcommand("flow", "precompute .flo files for a dataset");
  add_config_options(flow, fl_l);
  auto* o_fl_root = flow->add_option("--data-root", fl_root);
  flow->add_option("--list", fl_list, "list file (default: the split's list from the config)");
  flow->add_option("--split", fl_split, "train (six flows) or test (two)")->check(CLI::IsMember({"train", "test"}));

  // gradcheck
  Layers gc_l;
  GradcheckOptions gco;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the full network gradient");
  add_config_options(gc, gc_l);
  gc->add_option("--coordinates", gco.coordinates)->check(CLI::PositiveNumber);
  gc->add_option("--eps", gco.eps)->check(CLI::PositiveNumber);
  gc->add_option("--tolerance", gco.tolerance)->check(CLI::PositiveNumber);
  gc->add_option("--lr-size", gco.lr_size)->check(CLI::Range(4, 16));
  gc->add_option("--seed", gco.sample_seed, "coordinate sampling seed");

  // synth
  std::string sy_out;
  int sy_train = 50, sy_test = 10;
  std::uint64_t sy_seed = 1;
  SynthConfig sy;
  auto* synth = app.add_subcommand("synth", "write a synthetic triplet dataset");
  synth->add_option("--out", sy_out)->required();
  synth->add_option("--train", sy_train)->check(CLI::NonNegativeNumber);
  synth->add_option("--test", sy_test)->check(CLI::NonNegativeNumber);
  synth->add_option("--seed", sy_seed);
  synth->add_option("--height", sy.height)->check(CLI::PositiveNumber);
  synth->add_option("--width", sy.width)->check(CLI::PositiveNumber);
  synth->add_option("--max-speed", sy.max_speed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (train->parsed()) {
      train_l.flag(o_root, "data.root", json(data_root).dump());
      train_l.flag(o_ckdir, "checkpoint_dir", json(ckpt_dir).dump());
      train_l.flag(o_epochs, "epochs_total", std::to_string(epochs));
      train_l.flag(o_batch, "batch.batch_size", std::to_string(batch_size));
      train_l.flag(o_steps, "steps_per_epoch", std::to_string(steps));
      train_l.flag(o_seed, "batch.seed", std::to_string(seed));
      train_l.flag(o_loss, "loss_kind", json(loss).dump());
      std::optional<Checkpoint> ck;
      json base = to_json_value(TrainConfig{});
      if (!resume.empty()) {
        ck = load_checkpoint(resume);
        base.merge_patch(ck->train_config);
      }
      auto cfg = resolve_train(base, train_l);
      if (print_config) {
        std::cout << to_json_value(cfg).dump(2) << "\n";
        return 0;
      }
      auto s = ck ? resume_training(*ck, cfg) : start_training(cfg);
      auto ro = run_options(false, dry, loader_threads(threads), verbose, "star");
      if (dry) {
        run_epochs(s, nullptr, ro);
        return 0;
      }
      if (cfg.data.root.empty()) throw UsageError("no dataset root (use --data-root or data.root)");
      auto index = scan_dataset(cfg.data.root, cfg.data.train_list, Split::Train);
      std::printf("training on %zu triplets, %zu parameters\n", index.size(), s.model.params().numel());
      run_epochs(s, &index, ro);
      return 0;
    }

    if (finetune->parsed()) {
      auto base = load_checkpoint(base_path);
      ft_l.flag(o_var, "variant", json(ft_variant).dump());
      ft_l.flag(o_ft_root, "data.root", json(ft_root).dump());
      ft_l.flag(o_ft_ckdir, "checkpoint_dir", json(ft_ckdir).dump());
      ft_l.flag(o_ft_epochs, "finetune_epochs", std::to_string(ft_epochs));
      ft_l.flag(o_ft_steps, "steps_per_epoch", std::to_string(ft_steps));
      ft_l.flag(o_ft_loss, "loss_kind", json(ft_loss).dump());
      json defaults = to_json_value(TrainConfig{});
      defaults.merge_patch(base.train_config);
      defaults["model"] = to_json_value(base.model);
      auto cfg = resolve_train(defaults, ft_l);
      if (ft_print) {
        std::cout << to_json_value(cfg).dump(2) << "\n";
        return 0;
      }
      auto s = start_finetune(base, cfg);
      auto ro = run_options(true, ft_dry, loader_threads(ft_threads), ft_verbose, "ft_" + variant_name(cfg.variant));
      if (ft_dry) {
        run_epochs(s, nullptr, ro);
        return 0;
      }
      if (cfg.data.root.empty()) throw UsageError("no dataset root (use --data-root or data.root)");
      auto index = scan_dataset(cfg.data.root, cfg.data.train_list, Split::Train);
      std::printf("finetuning %s on %zu triplets\n", variant_name(cfg.variant).c_str(), index.size());
      run_epochs(s, &index, ro);
      return 0;
    }

    if (eval->parsed()) {
      auto ck = load_checkpoint(ev_ckpt);
      ev_l.flag(o_ev_root, "data.root", json(ev_root).dump());
      ev_l.flag(o_ev_list, "data.test_list", json(ev_list).dump());
      ev_l.flag(o_ev_flow, "data.flow_source", json(ev_flow).dump());
      auto cfg = resolve_train(to_json_value(TrainConfig{}), ev_l);
      if (cfg.data.root.empty()) throw UsageError("no dataset root (use --data-root or data.root)");
      auto index = scan_dataset(cfg.data.root, cfg.data.test_list, Split::Test);
      EvalOptions eo;
      eo.interpolation_error = !no_ie;
      eo.psnr_mode = parse_psnr_mode(ev_psnr);
      eo.loader_threads = loader_threads(ev_threads);
      eo.warnings = &std::cerr;
      auto rep = evaluate(ck, index, cfg.data, eo);
      if (ev_report.empty())
        std::cout << rep.text();
      else
        write_text(ev_report, rep.text());
      if (!ev_table.empty()) write_text(ev_table, rep.table());
      return 0;
    }

    if (inf->parsed()) {
      const auto mode = parse_infer_mode(in_mode);
      auto cfg = resolve_train(to_json_value(TrainConfig{}), in_l);
      auto frames = read_frames_dir(in_frames);
      auto model = model_from(load_checkpoint(in_ckpt));
      std::optional<Starnet<float>> t_model;
      if (!in_t_ckpt.empty()) t_model.emplace(model_from(load_checkpoint(in_t_ckpt)));
      auto out = infer(model, frames, mode, t_model ? &*t_model : nullptr, cfg.data.flow);
      write_frames(in_out, out);
      std::printf("%zu frames in, %zu frames written to %s\n", frames.size(), out.size(), in_out.c_str());
      return 0;
    }

    if (flow->parsed()) {
      fl_l.flag(o_fl_root, "data.root", json(fl_root).dump());
      auto cfg = resolve_train(to_json_value(TrainConfig{}), fl_l);
      if (cfg.data.root.empty()) throw UsageError("no dataset root (use --data-root or data.root)");
      const Split split = parse_split(fl_split);
      const std::string list = !fl_list.empty() ? fl_list : split == Split::Train ? cfg.data.train_list : cfg.data.test_list;
      auto index = scan_dataset(cfg.data.root, list, split);
      precompute_flows(index, LoadOptions{cfg.model.scale, FlowSource::Estimate, cfg.data.flow});
      std::printf("wrote flows for %zu entries under %s/flows\n", index.size(), cfg.data.root.c_str());
      return 0;
    }

    if (gc->parsed()) {
      // toy model unless the config says otherwise
      TrainConfig toy;
      toy.model.c_h = 16;
      toy.model.c_l = 32;
      auto cfg = resolve_train(to_json_value(toy), gc_l);
      auto rep = gradcheck(cfg.model, gco);
      std::cout << rep.text();
      return rep.pass() ? 0 : 3;
    }

    if (synth->parsed()) {
      write_synthetic_dataset(sy_out, sy_train, sy_test, sy_seed, sy);
      std::printf("wrote %d train and %d test triplets to %s\n", sy_train, sy_test, sy_out.c_str());
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "starnet: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "starnet: numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "starnet: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "starnet: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
