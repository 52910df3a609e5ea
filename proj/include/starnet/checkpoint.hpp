#pragma once

// Checkpoint container:
//
//   "STARCKPT" | u32 version | u32 n | n bytes of UTF-8 JSON metadata
//   u32 tensor count | per tensor: u32 name length, name, u32 rank,
//   rank x u32 dims, f32 payload
//
// All integers and floats little-endian. Optimizer moments are stored as
// tensors named adamax.m/<param> and adamax.u/<param>.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "starnet/config.hpp"
#include "starnet/flow.hpp"
#include "starnet/model.hpp"
#include "starnet/optim.hpp"

namespace starnet {

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  static constexpr char kMagic[9] = "STARCKPT";

  ModelConfig model;
  int epoch = 0;  // completed epochs
  Variant variant = Variant::STAR;
  std::string rng_state;
  AdaMaxHyper optimizer;
  std::uint64_t optimizer_step = 0;
  json train_config = json::object();
  std::vector<NamedTensor> tensors;

  static bool is_optimizer_tensor(const std::string& name) { return name.rfind("adamax.", 0) == 0; }

  std::size_t parameter_tensor_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += !is_optimizer_tensor(t.name);
    return n;
  }
  std::size_t parameter_numel() const {
    std::size_t n = 0;
    for (const auto& t : tensors)
      if (!is_optimizer_tensor(t.name)) n += t.data.size();
    return n;
  }
  const NamedTensor* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
};

inline json checkpoint_metadata(const Checkpoint& c) {
  return {{"model", to_json_value(c.model)},
          {"epoch", c.epoch},
          {"variant", variant_name(c.variant)},
          {"rng_state", c.rng_state},
          {"optimizer",
           {{"learning_rate", c.optimizer.learning_rate},
            {"beta1", c.optimizer.beta1},
            {"beta2", c.optimizer.beta2},
            {"epsilon", c.optimizer.epsilon},
            {"step", c.optimizer_step}}},
          {"train_config", c.train_config}};
}

inline std::vector<char> encode_checkpoint(const Checkpoint& c) {
  std::vector<char> out(Checkpoint::kMagic, Checkpoint::kMagic + 8);
  detail::put_u32le(out, Checkpoint::kVersion);
  const std::string blob = checkpoint_metadata(c).dump();
  detail::put_u32le(out, static_cast<std::uint32_t>(blob.size()));
  out.insert(out.end(), blob.begin(), blob.end());
  detail::put_u32le(out, static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& t : c.tensors) {
    STARNET_EXPECT(shape_numel(t.shape) == t.data.size(), "checkpoint tensor " + t.name + " has inconsistent size");
    detail::put_u32le(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    detail::put_u32le(out, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) detail::put_u32le(out, static_cast<std::uint32_t>(d));
    for (float v : t.data) detail::put_f32le(out, v);
  }
  return out;
}

namespace detail {

class ByteReader {
 public:
  ByteReader(const std::vector<char>& b, std::string origin) : b_(b), origin_(std::move(origin)) {}
  const char* take(std::size_t n) {
    if (b_.size() - pos_ < n) throw FormatError(origin_ + ": truncated checkpoint");
    const char* p = b_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32() { return get_u32le(take(4)); }
  bool at_end() const { return pos_ == b_.size(); }

 private:
  const std::vector<char>& b_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Checkpoint decode_checkpoint(const std::vector<char>& bytes, const std::string& origin = "<memory>") {
  detail::ByteReader r(bytes, origin);
  if (bytes.size() < 8 || std::memcmp(bytes.data(), Checkpoint::kMagic, 8) != 0)
    throw FormatError(origin + ": not a checkpoint (bad magic)");
  r.take(8);
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::kVersion)
    throw FormatError(origin + ": unsupported checkpoint version " + std::to_string(version) + " (this build reads version " +
                      std::to_string(Checkpoint::kVersion) + ")");
  const std::uint32_t blob_len = r.u32();
  const char* blob = r.take(blob_len);
  json meta = json::parse(blob, blob + blob_len, nullptr, false);
  if (meta.is_discarded() || !meta.is_object()) throw FormatError(origin + ": corrupt checkpoint metadata");
  Checkpoint c;
  try {
    c.model = model_config_from_json(meta.at("model"));
    c.epoch = meta.at("epoch").get<int>();
    c.variant = parse_variant(meta.at("variant").get<std::string>());
    c.rng_state = meta.at("rng_state").get<std::string>();
    const auto& o = meta.at("optimizer");
    c.optimizer = {o.at("learning_rate").get<double>(), o.at("beta1").get<double>(), o.at("beta2").get<double>(),
                   o.at("epsilon").get<double>()};
    c.optimizer_step = o.at("step").get<std::uint64_t>();
    c.train_config = meta.at("train_config");
  } catch (const json::exception& e) {
    throw FormatError(origin + ": checkpoint metadata incomplete: " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(origin + ": checkpoint metadata invalid: " + e.what());
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const std::uint32_t len = r.u32();
    const char* name = r.take(len);
    t.name.assign(name, len);
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw FormatError(origin + ": tensor " + t.name + " has implausible rank");
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint32_t dim = r.u32();
      if (dim == 0 || dim > (1u << 30)) throw FormatError(origin + ": tensor " + t.name + " has invalid dimension");
      t.shape.push_back(static_cast<int>(dim));
      n *= dim;
    }
    const char* payload = r.take(n * 4);
    t.data.resize(n);
    for (std::size_t k = 0; k < n; ++k) t.data[k] = detail::get_f32le(payload + 4 * k);
    c.tensors.push_back(std::move(t));
  }
  if (!r.at_end()) throw FormatError(origin + ": trailing bytes after checkpoint payload");
  return c;
}

// Writes through a temporary file so a crash never leaves a half-written
// checkpoint under the final name.
inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
  const std::string tmp = path + ".tmp";
  detail::write_file_bytes(tmp, encode_checkpoint(c));
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path + ": " + ec.message());
}

inline Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(detail::read_file_bytes(path), path); }

template <typename T>
void capture_parameters(const Starnet<T>& model, Checkpoint& c) {
  c.model = model.config();
  for (const auto* g : model.params().groups())
    for (const auto& p : g->items())
      c.tensors.push_back({p.name, p.tensor.shape(), std::vector<float>(p.tensor.data().begin(), p.tensor.data().end())});
}

template <typename T>
void capture_optimizer(const AdaMax<T>& opt, Checkpoint& c) {
  c.optimizer = opt.hyper();
  c.optimizer_step = opt.step_count();
  for (const auto& [name, m] : opt.first_moment())
    c.tensors.push_back({"adamax.m/" + name, {static_cast<int>(m.size())}, std::vector<float>(m.begin(), m.end())});
  for (const auto& [name, u] : opt.inf_norm())
    c.tensors.push_back({"adamax.u/" + name, {static_cast<int>(u.size())}, std::vector<float>(u.begin(), u.end())});
}

// Copies parameter values into `model`, whose configuration must match.
template <typename T>
void restore_parameters(const Checkpoint& c, Starnet<T>& model) {
  auto diff = model_config_diff(c.model, model.config());
  if (!diff.empty()) {
    std::string msg = "checkpoint model configuration differs:";
    for (const auto& d : diff) msg += "\n  " + d;
    throw ConfigError(msg);
  }
  std::size_t matched = 0;
  for (auto* g : model.params().groups())
    for (auto p : g->items()) {
      const NamedTensor* t = c.find(p.name);
      if (!t) throw FormatError("checkpoint lacks parameter " + p.name);
      if (t->shape != p.tensor.shape())
        throw FormatError("checkpoint parameter " + p.name + " has shape " + shape_str(t->shape) + ", model expects " +
                          shape_str(p.tensor.shape()));
      auto dst = p.tensor.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(t->data[i]);
      ++matched;
    }
  if (matched != c.parameter_tensor_count())
    throw FormatError("checkpoint holds " + std::to_string(c.parameter_tensor_count()) + " parameter tensors, model has " +
                      std::to_string(matched));
}

template <typename T>
void restore_optimizer(const Checkpoint& c, AdaMax<T>& opt) {
  opt.hyper() = c.optimizer;
  opt.set_step_count(c.optimizer_step);
  opt.first_moment().clear();
  opt.inf_norm().clear();
  for (const auto& t : c.tensors) {
    if (t.name.rfind("adamax.m/", 0) == 0)
      opt.first_moment()[t.name.substr(9)] = std::vector<T>(t.data.begin(), t.data.end());
    else if (t.name.rfind("adamax.u/", 0) == 0)
      opt.inf_norm()[t.name.substr(9)] = std::vector<T>(t.data.begin(), t.data.end());
  }
}

}  // namespace starnet
