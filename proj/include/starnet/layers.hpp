#pragma once

#include <random>
#include <string>
#include <vector>

#include "starnet/ops.hpp"
#include "starnet/optim.hpp"

namespace starnet {

template <typename T>
struct Conv {
  BasicTensor<T> weight;
  BasicTensor<T> bias;
  Conv2dGeometry geo;
  bool transposed = false;

  BasicTensor<T> operator()(const BasicTensor<T>& x) const {
    return transposed ? conv_transpose2d(x, weight, bias, geo) : conv2d(x, weight, bias, geo);
  }
};

template <typename T>
struct PReLU {
  BasicTensor<T> slope;
  BasicTensor<T> operator()(const BasicTensor<T>& x) const { return prelu(x, slope); }
};

// conv3x3 -> PReLU -> conv3x3, plus identity skip.
template <typename T>
struct ResidualBlock {
  Conv<T> conv1;
  PReLU<T> act;
  Conv<T> conv2;

  BasicTensor<T> operator()(const BasicTensor<T>& x) const { return add(x, conv2(act(conv1(x)))); }
};

// Creates parameters inside one collection with deterministic initialization.
template <typename T>
class LayerFactory {
 public:
  LayerFactory(ParameterCollection<T>& params, std::mt19937_64& rng) : params_(params), rng_(rng) {}

  Conv<T> conv(const std::string& name, int cin, int cout, int k, int stride = 1, int pad = -1, double gain_scale = 1.0) {
    Conv<T> c;
    c.geo = {stride, pad < 0 ? k / 2 : pad};
    c.weight = params_.add(name + ".weight", {cout, cin, k, k});
    c.bias = params_.add(name + ".bias", {cout});
    init_he_uniform(c.weight, cin * k * k, rng_);
    if (gain_scale != 1.0)
      for (auto& v : c.weight.data()) v = static_cast<T>(v * gain_scale);
    return c;
  }

  Conv<T> deconv(const std::string& name, int cin, int cout, int k, int stride, int pad) {
    Conv<T> c;
    c.geo = {stride, pad};
    c.transposed = true;
    c.weight = params_.add(name + ".weight", {cin, cout, k, k});
    c.bias = params_.add(name + ".bias", {cout});
    // Each output pixel sees cin * (k/stride)^2 taps.
    init_he_uniform(c.weight, cin * (k / stride) * (k / stride), rng_);
    return c;
  }

  PReLU<T> prelu(const std::string& name, double init = 0.25) {
    PReLU<T> a{params_.add(name + ".slope", {1})};
    a.slope.data()[0] = static_cast<T>(init);
    return a;
  }

  // The second conv starts small so deep stacks begin close to identity.
  ResidualBlock<T> residual(const std::string& name, int channels) {
    ResidualBlock<T> b;
    b.conv1 = conv(name + ".conv1", channels, channels, 3);
    b.act = prelu(name + ".act");
    b.conv2 = conv(name + ".conv2", channels, channels, 3, 1, 1, 0.1);
    return b;
  }

  std::vector<ResidualBlock<T>> residual_stack(const std::string& name, int channels, int count) {
    std::vector<ResidualBlock<T>> blocks;
    for (int i = 0; i < count; ++i) blocks.push_back(residual(name + ".res" + std::to_string(i), channels));
    return blocks;
  }

 private:
  ParameterCollection<T>& params_;
  std::mt19937_64& rng_;
};

template <typename T>
BasicTensor<T> run_stack(const std::vector<ResidualBlock<T>>& blocks, BasicTensor<T> x) {
  for (const auto& b : blocks) x = b(x);
  return x;
}

}  // namespace starnet
