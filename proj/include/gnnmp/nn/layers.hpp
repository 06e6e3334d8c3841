#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gnnmp/nn/ops.hpp"
#include "gnnmp/rng.hpp"

namespace gnnmp::nn {

/// Owns every parameter and buffer of a network, addressed by hierarchical name ("explorer/f_x/l1/weight").
/// Parameters have stable addresses for the lifetime of the store.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore& other) { *this = other; }
  ParameterStore& operator=(const ParameterStore& other) {
    if (this == &other) return *this;
    // Copies values into existing slots when layouts match, so layer handles stay valid.
    if (params_.size() == other.params_.size()) {
      bool same = true;
      for (std::size_t i = 0; i < params_.size() && same; ++i) same = params_[i]->name == other.params_[i]->name;
      if (same) {
        for (std::size_t i = 0; i < params_.size(); ++i) *params_[i] = *other.params_[i];
        return *this;
      }
    }
    throw InvalidInput("parameter store layouts differ");
  }

  Parameter& add(const std::string& name, std::size_t rows, std::size_t cols, bool trainable = true) {
    if (index_.count(name)) throw InvalidInput("duplicate parameter name: " + name);
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->value = Matrix(rows, cols);
    p->grad = Matrix(rows, cols);
    p->trainable = trainable;
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Parameter* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }
  const Parameter* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }

  std::size_t size() const { return params_.size(); }
  Parameter& at(std::size_t i) { return *params_[i]; }
  const Parameter& at(std::size_t i) const { return *params_[i]; }

  void zero_grad() {
    for (auto& p : params_) std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0);
  }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& p : params_)
      if (p->trainable) n += p->value.size();
    return n;
  }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, std::size_t> index_;
};

inline void init_uniform(Parameter& p, double bound, Rng& rng) {
  for (double& v : p.value.data) v = rng.uniform(-bound, bound);
}

struct Linear {
  Parameter* weight = nullptr;  // in x out
  Parameter* bias = nullptr;    // 1 x out

  static Linear create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    Linear l;
    l.weight = &store.add(name + "/weight", in, out);
    l.bias = &store.add(name + "/bias", 1, out);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    init_uniform(*l.weight, bound, rng);
    init_uniform(*l.bias, bound, rng);
    return l;
  }

  std::size_t in() const { return weight->value.rows; }
  std::size_t out() const { return weight->value.cols; }

  Var operator()(const Var& x) const { return add_row(matmul(x, leaf(*weight)), leaf(*bias)); }
};

struct BatchNorm {
  Parameter* gain = nullptr;
  Parameter* bias = nullptr;
  Parameter* running_mean = nullptr;
  Parameter* running_var = nullptr;
  double momentum = 0.1;
  double eps = 1e-5;

  static BatchNorm create(ParameterStore& store, const std::string& name, std::size_t width) {
    BatchNorm bn;
    bn.gain = &store.add(name + "/gain", 1, width);
    bn.bias = &store.add(name + "/bias", 1, width);
    bn.running_mean = &store.add(name + "/running_mean", 1, width, false);
    bn.running_var = &store.add(name + "/running_var", 1, width, false);
    std::fill(bn.gain->value.data.begin(), bn.gain->value.data.end(), 1.0);
    std::fill(bn.running_var->value.data.begin(), bn.running_var->value.data.end(), 1.0);
    return bn;
  }

  Var operator()(const Var& x, bool training) const {
    return batch_norm(x, leaf(*gain), leaf(*bias), *running_mean, *running_var, training, momentum, eps);
  }
};

/// affine -> [batch norm] -> ReLU -> affine
struct Mlp {
  Linear first;
  std::optional<BatchNorm> norm;
  Linear second;

  static Mlp create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden, std::size_t out,
                    bool batch_norm, Rng& rng) {
    Mlp m;
    m.first = Linear::create(store, name + "/l1", in, hidden, rng);
    if (batch_norm) m.norm = BatchNorm::create(store, name + "/bn", hidden);
    m.second = Linear::create(store, name + "/l2", hidden, out, rng);
    return m;
  }

  Var hidden(const Var& pre_activation, bool training) const {
    Var h = norm ? (*norm)(pre_activation, training) : pre_activation;
    return relu(h);
  }

  Var operator()(const Var& x, bool training) const {
    if (x.cols() != first.in()) throw InvalidInput("mlp input width mismatch");
    return second(hidden(first(x), training));
  }
};

struct LayerNorm {
  Parameter* gain = nullptr;
  Parameter* bias = nullptr;

  static LayerNorm create(ParameterStore& store, const std::string& name, std::size_t width) {
    LayerNorm ln;
    ln.gain = &store.add(name + "/gain", 1, width);
    ln.bias = &store.add(name + "/bias", 1, width);
    std::fill(ln.gain->value.data.begin(), ln.gain->value.data.end(), 1.0);
    return ln;
  }

  Var operator()(const Var& x) const { return layer_norm(x, leaf(*gain), leaf(*bias)); }
};

/// Transformer block over an obstacle set:
///   a = LN(x + Att(f_K(O), f_Q(x), f_V(O)));  x' = LN(a + f_a(a))
struct AttentionBlock {
  Linear key;
  Linear query;
  Linear value;
  Mlp feed_forward;
  LayerNorm norm1;
  LayerNorm norm2;

  static AttentionBlock create(ParameterStore& store, const std::string& name, std::size_t width,
                               std::size_t obstacle_width, Rng& rng) {
    AttentionBlock b;
    b.key = Linear::create(store, name + "/f_k", obstacle_width, width, rng);
    b.query = Linear::create(store, name + "/f_q", width, width, rng);
    b.value = Linear::create(store, name + "/f_v", obstacle_width, width, rng);
    b.feed_forward = Mlp::create(store, name + "/f_a", width, width, width, false, rng);
    b.norm1 = LayerNorm::create(store, name + "/ln1", width);
    b.norm2 = LayerNorm::create(store, name + "/ln2", width);
    return b;
  }

  Var operator()(const Var& x, const Var& obstacles, bool training) const {
    Var att = obstacles.rows() == 0 ? constant(Matrix(x.rows(), x.cols()))
                                    : attention(key(obstacles), query(x), value(obstacles));
    Var a = norm1(add(x, att));
    return norm2(add(a, feed_forward(a, training)));
  }
};

/// Adam with bias correction, beta = (0.9, 0.999), eps = 1e-8.
class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParameterStore& store) {
    ++t_;
    if (m_.size() != store.size()) {
      m_.assign(store.size(), {});
      v_.assign(store.size(), {});
    }
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < store.size(); ++i) {
      Parameter& p = store.at(i);
      if (!p.trainable) continue;
      auto& m = m_[i];
      auto& v = v_[i];
      if (m.size() != p.value.size()) {
        m.assign(p.value.size(), 0.0);
        v.assign(p.value.size(), 0.0);
      }
      for (std::size_t j = 0; j < p.value.size(); ++j) {
        const double g = p.grad.size() == p.value.size() ? p.grad.data[j] : 0.0;
        m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
        v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
        const double mhat = m[j] / c1;
        const double vhat = v[j] / c2;
        p.value.data[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  std::uint64_t steps() const { return t_; }

 private:
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace gnnmp::nn
