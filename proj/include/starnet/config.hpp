#pragma once

// Training configuration, its JSON form and the learning-rate schedule.
// Unknown keys are rejected so typos in config files do not pass silently.

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "starnet/data.hpp"
#include "starnet/losses.hpp"
#include "starnet/model.hpp"
#include "starnet/optim.hpp"

namespace starnet {

using json = nlohmann::json;

struct DataConfig {
  std::string root;
  std::string train_list = "tri_trainlist.txt";
  std::string test_list = "tri_testlist.txt";
  FlowSource flow_source = FlowSource::Estimate;
  FlowPyramidConfig flow;
};

struct TrainConfig {
  int epochs_total = 70;
  double lr_initial = 1e-4;
  double lr_decay_factor = 10;
  int lr_decay_every = 30;
  int finetune_epochs = 20;
  int finetune_decay_every = 10;
  int steps_per_epoch = 0;  // 0: one full pass over the index
  BatchSpec batch;
  LossWeights weights;
  LossKind loss_kind = LossKind::Lr;
  Variant variant = Variant::STAR;
  ModelConfig model;
  DataConfig data;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::string checkpoint_dir = "checkpoints";

  void validate() const {
    if (epochs_total <= 0 || finetune_epochs <= 0) throw ConfigError("epoch counts must be positive");
    if (!(lr_initial > 0)) throw ConfigError("lr_initial must be positive");
    if (!(lr_decay_factor > 0)) throw ConfigError("lr_decay_factor must be positive");
    if (lr_decay_every <= 0 || finetune_decay_every <= 0) throw ConfigError("decay intervals must be positive");
    if (steps_per_epoch < 0) throw ConfigError("steps_per_epoch must be >= 0");
    if (batch.batch_size <= 0 || batch.patch_lr_w <= 0 || batch.patch_lr_h <= 0)
      throw ConfigError("batch size and patch size must be positive");
    if (weights.w1 < 0 || weights.w2 < 0 || weights.w3 < 0) throw ConfigError("loss weights must be non-negative");
    try {
      model.validate();
    } catch (const ContractViolation& e) {
      throw ConfigError(e.what());
    }
  }
};

// lr0 / factor^floor(epoch / every)
inline double scheduled_lr(double lr0, double factor, int every, int epoch) {
  return lr0 / std::pow(factor, static_cast<double>(epoch / every));
}

inline std::vector<double> schedule_dry_run(const TrainConfig& cfg, bool finetune) {
  std::vector<double> out;
  const int epochs = finetune ? cfg.finetune_epochs : cfg.epochs_total;
  const int every = finetune ? cfg.finetune_decay_every : cfg.lr_decay_every;
  for (int e = 0; e < epochs; ++e) out.push_back(scheduled_lr(cfg.lr_initial, cfg.lr_decay_factor, every, e));
  return out;
}

namespace detail {

// Reads known keys from an object and rejects anything else.
class JsonFields {
 public:
  JsonFields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename V>
  JsonFields& get(const char* key, V& out) {
    seen_.insert(key);
    if (auto it = j_.find(key); it != j_.end()) {
      try {
        out = it->template get<V>();
      } catch (const json::exception& e) {
        throw ConfigError(where(key) + ": " + e.what());
      }
    }
    return *this;
  }

  template <typename F>
  JsonFields& with(const char* key, F&& fn) {
    seen_.insert(key);
    if (auto it = j_.find(key); it != j_.end()) fn(*it, where(key));
    return *this;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown config key " + where(it.key()));
  }

 private:
  std::string where(const std::string& key = {}) const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline std::string as_string(const json& j, const std::string& where) {
  if (!j.is_string()) throw ConfigError(where + " must be a string");
  return j.get<std::string>();
}

}  // namespace detail

inline json to_json_value(const AblationFlags& a) {
  return {{"use_stage2", a.use_stage2},
          {"use_flow_input", a.use_flow_input},
          {"use_flow_refinement", a.use_flow_refinement},
          {"tsr_hr_path", a.tsr_hr_path},
          {"tsr_lr_path", a.tsr_lr_path}};
}

inline json to_json_value(const ModelConfig& m) {
  return {{"scale", m.scale},
          {"n", m.n},
          {"c_h", m.c_h},
          {"c_l", m.c_l},
          {"s_residual_blocks", m.s_residual_blocks},
          {"st_residual_blocks", m.st_residual_blocks},
          {"fb_residual_blocks", m.fb_residual_blocks},
          {"m_residual_blocks", m.m_residual_blocks},
          {"flow_channels", m.flow_channels},
          {"flow_head_zero_init", m.flow_head_zero_init},
          {"ablation", to_json_value(m.ablation)},
          {"seed", m.seed}};
}

inline void from_json_value(const json& j, const std::string& path, AblationFlags& a) {
  detail::JsonFields(j, path)
      .get("use_stage2", a.use_stage2)
      .get("use_flow_input", a.use_flow_input)
      .get("use_flow_refinement", a.use_flow_refinement)
      .get("tsr_hr_path", a.tsr_hr_path)
      .get("tsr_lr_path", a.tsr_lr_path)
      .finish();
}

inline void from_json_value(const json& j, const std::string& path, ModelConfig& m) {
  detail::JsonFields(j, path)
      .get("scale", m.scale)
      .get("n", m.n)
      .get("c_h", m.c_h)
      .get("c_l", m.c_l)
      .get("s_residual_blocks", m.s_residual_blocks)
      .get("st_residual_blocks", m.st_residual_blocks)
      .get("fb_residual_blocks", m.fb_residual_blocks)
      .get("m_residual_blocks", m.m_residual_blocks)
      .get("flow_channels", m.flow_channels)
      .get("flow_head_zero_init", m.flow_head_zero_init)
      .with("ablation", [&](const json& v, const std::string& p) { from_json_value(v, p, m.ablation); })
      .get("seed", m.seed)
      .finish();
}

inline json to_json_value(const TrainConfig& c) {
  return {
      {"epochs_total", c.epochs_total},
      {"lr_initial", c.lr_initial},
      {"lr_decay_factor", c.lr_decay_factor},
      {"lr_decay_every", c.lr_decay_every},
      {"finetune_epochs", c.finetune_epochs},
      {"finetune_decay_every", c.finetune_decay_every},
      {"steps_per_epoch", c.steps_per_epoch},
      {"batch",
       {{"batch_size", c.batch.batch_size},
        {"patch_lr_w", c.batch.patch_lr_w},
        {"patch_lr_h", c.batch.patch_lr_h},
        {"seed", c.batch.seed},
        {"shuffle", c.batch.shuffle},
        {"augment", c.batch.augment}}},
      {"weights", {{"w1", c.weights.w1}, {"w2", c.weights.w2}, {"w3", c.weights.w3}}},
      {"loss_kind", loss_kind_name(c.loss_kind)},
      {"variant", variant_name(c.variant)},
      {"model", to_json_value(c.model)},
      {"data",
       {{"root", c.data.root},
        {"train_list", c.data.train_list},
        {"test_list", c.data.test_list},
        {"flow_source", flow_source_name(c.data.flow_source)},
        {"flow",
         {{"levels", c.data.flow.levels},
          {"scale_per_level", c.data.flow.scale_per_level},
          {"iterations_per_level", c.data.flow.iterations_per_level},
          {"smoothness_weight", c.data.flow.smoothness_weight},
          {"warps_per_level", c.data.flow.warps_per_level}}}}},
      {"optimizer", {{"beta1", c.beta1}, {"beta2", c.beta2}, {"epsilon", c.epsilon}}},
      {"checkpoint_dir", c.checkpoint_dir},
  };
}

inline void from_json_value(const json& j, const std::string& path, TrainConfig& c) {
  using detail::as_string;
  detail::JsonFields(j, path)
      .get("epochs_total", c.epochs_total)
      .get("lr_initial", c.lr_initial)
      .get("lr_decay_factor", c.lr_decay_factor)
      .get("lr_decay_every", c.lr_decay_every)
      .get("finetune_epochs", c.finetune_epochs)
      .get("finetune_decay_every", c.finetune_decay_every)
      .get("steps_per_epoch", c.steps_per_epoch)
      .with("batch",
            [&](const json& v, const std::string& p) {
              detail::JsonFields(v, p)
                  .get("batch_size", c.batch.batch_size)
                  .get("patch_lr_w", c.batch.patch_lr_w)
                  .get("patch_lr_h", c.batch.patch_lr_h)
                  .get("seed", c.batch.seed)
                  .get("shuffle", c.batch.shuffle)
                  .get("augment", c.batch.augment)
                  .finish();
            })
      .with("weights",
            [&](const json& v, const std::string& p) {
              detail::JsonFields(v, p).get("w1", c.weights.w1).get("w2", c.weights.w2).get("w3", c.weights.w3).finish();
            })
      .with("loss_kind", [&](const json& v, const std::string& p) { c.loss_kind = parse_loss_kind(as_string(v, p)); })
      .with("variant", [&](const json& v, const std::string& p) { c.variant = parse_variant(as_string(v, p)); })
      .with("model", [&](const json& v, const std::string& p) { from_json_value(v, p, c.model); })
      .with("data",
            [&](const json& v, const std::string& p) {
              detail::JsonFields(v, p)
                  .get("root", c.data.root)
                  .get("train_list", c.data.train_list)
                  .get("test_list", c.data.test_list)
                  .with("flow_source",
                        [&](const json& s, const std::string& q) { c.data.flow_source = parse_flow_source(as_string(s, q)); })
                  .with("flow",
                        [&](const json& f, const std::string& q) {
                          detail::JsonFields(f, q)
                              .get("levels", c.data.flow.levels)
                              .get("scale_per_level", c.data.flow.scale_per_level)
                              .get("iterations_per_level", c.data.flow.iterations_per_level)
                              .get("smoothness_weight", c.data.flow.smoothness_weight)
                              .get("warps_per_level", c.data.flow.warps_per_level)
                              .finish();
                        })
                  .finish();
            })
      .with("optimizer",
            [&](const json& v, const std::string& p) {
              detail::JsonFields(v, p).get("beta1", c.beta1).get("beta2", c.beta2).get("epsilon", c.epsilon).finish();
            })
      .get("checkpoint_dir", c.checkpoint_dir)
      .finish();
}

inline ModelConfig model_config_from_json(const json& j) {
  ModelConfig m;
  from_json_value(j, "model", m);
  return m;
}

inline TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  from_json_value(j, "", c);
  return c;
}

inline json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_json_text(ss.str(), path);
}

// Sets a dotted key ("model.c_h") inside `j`. The value is parsed as JSON
// when possible and taken as a plain string otherwise.
inline void set_dotted(json& j, const std::string& dotted, const std::string& value) {
  json* cur = &j;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("malformed config key '" + dotted + "'");
    if (dot == std::string::npos) {
      json v = json::parse(value, nullptr, false);
      (*cur)[key] = v.is_discarded() ? json(value) : v;
      return;
    }
    if (!cur->contains(key) || !(*cur)[key].is_object()) (*cur)[key] = json::object();
    cur = &(*cur)[key];
    start = dot + 1;
  }
}

// Field-by-field differences of the structural model settings; the seed is
// ignored since it only matters at construction.
inline std::vector<std::string> model_config_diff(const ModelConfig& a, const ModelConfig& b) {
  json ja = to_json_value(a), jb = to_json_value(b);
  ja.erase("seed");
  jb.erase("seed");
  std::vector<std::string> out;
  for (const auto& op : json::diff(ja, jb)) {
    const std::string p = op["path"].get<std::string>();
    const json ptr_a = ja.contains(json::json_pointer(p)) ? ja.at(json::json_pointer(p)) : json();
    const json ptr_b = jb.contains(json::json_pointer(p)) ? jb.at(json::json_pointer(p)) : json();
    out.push_back(p + ": " + ptr_a.dump() + " vs " + ptr_b.dump());
  }
  return out;
}

}  // namespace starnet
