#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "starnet/tensor.hpp"

namespace starnet {

template <typename T>
struct Parameter {
  std::string name;
  BasicTensor<T> tensor;
};

// Ordered, name-unique set of trainable tensors.
template <typename T>
class ParameterCollection {
 public:
  explicit ParameterCollection(std::string prefix = {}) : prefix_(std::move(prefix)) {}

  const std::string& prefix() const { return prefix_; }

  BasicTensor<T> add(const std::string& local_name, Shape shape) {
    std::string name = prefix_.empty() ? local_name : prefix_ + "." + local_name;
    STARNET_EXPECT(index_.find(name) == index_.end(), "duplicate parameter name " + name);
    auto t = BasicTensor<T>::zeros(std::move(shape), true);
    index_[name] = params_.size();
    params_.push_back({name, t});
    return t;
  }

  const std::vector<Parameter<T>>& items() const { return params_; }
  std::size_t size() const { return params_.size(); }

  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
  }

  const Parameter<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

 private:
  std::string prefix_;
  std::vector<Parameter<T>> params_;
  std::map<std::string, std::size_t> index_;
};

// Fan-in scaled uniform initialization, He et al. gain for a leaky/parametric
// rectifier with negative slope `leak`.
template <typename T>
void init_he_uniform(BasicTensor<T>& t, int fan_in, std::mt19937_64& rng, double leak = 0.25) {
  const double bound = std::sqrt(6.0 / ((1.0 + leak * leak) * std::max(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
}

struct AdaMaxHyper {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// AdaMax: Adam with the second moment replaced by an exponentially weighted
// infinity norm. Only the first moment needs bias correction.
template <typename T>
class AdaMax {
 public:
  AdaMax() = default;
  explicit AdaMax(AdaMaxHyper hyper) : hyper_(hyper) {
    STARNET_EXPECT(hyper.beta1 > 0 && hyper.beta1 < 1 && hyper.beta2 > 0 && hyper.beta2 < 1,
                   "AdaMax betas must lie in (0,1)");
    STARNET_EXPECT(hyper.learning_rate > 0 && hyper.epsilon > 0, "AdaMax learning rate and epsilon must be positive");
  }

  AdaMaxHyper& hyper() { return hyper_; }
  const AdaMaxHyper& hyper() const { return hyper_; }
  std::uint64_t step_count() const { return step_; }
  void set_step_count(std::uint64_t s) { step_ = s; }

  // Moment buffers keyed by parameter name; created lazily on first step.
  std::map<std::string, std::vector<T>>& first_moment() { return m_; }
  std::map<std::string, std::vector<T>>& inf_norm() { return u_; }
  const std::map<std::string, std::vector<T>>& first_moment() const { return m_; }
  const std::map<std::string, std::vector<T>>& inf_norm() const { return u_; }

  template <typename Collections>
  void step(Collections& groups) {
    // Validate before mutating anything.
    for (auto* g : groups)
      for (const auto& p : g->items())
        STARNET_EXPECT(p.tensor.has_grad(), "AdaMax: parameter " + p.name + " has no gradient (zero_grad missing?)");
    ++step_;
    const double b1 = hyper_.beta1, b2 = hyper_.beta2;
    const double step_size = hyper_.learning_rate / (1.0 - std::pow(b1, static_cast<double>(step_)));
    for (auto* g : groups) {
      for (auto p : g->items()) {
        auto& m = m_[p.name];
        auto& u = u_[p.name];
        auto values = p.tensor.data();
        auto grads = p.tensor.grad();
        if (m.size() != values.size()) m.assign(values.size(), T(0));
        if (u.size() != values.size()) u.assign(values.size(), T(0));
        for (std::size_t i = 0; i < values.size(); ++i) {
          const double gi = grads[i];
          m[i] = static_cast<T>(b1 * m[i] + (1.0 - b1) * gi);
          u[i] = static_cast<T>(std::max(b2 * u[i], std::abs(gi)));
          values[i] = static_cast<T>(values[i] - step_size * m[i] / (u[i] + hyper_.epsilon));
        }
      }
    }
  }

 private:
  AdaMaxHyper hyper_;
  std::uint64_t step_ = 0;
  std::map<std::string, std::vector<T>> m_;
  std::map<std::string, std::vector<T>> u_;
};

}  // namespace starnet
