#pragma once

#include <cmath>
#include <map>
#include <string>

#include "gmic/tape.hpp"
#include "gmic/tensor.hpp"

namespace gmic {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Named learnable tensors plus per-tensor Adam state. Non-trainable entries
// (batch-norm running stats) live here too so checkpoints capture them.
// Entries are kept in name order, which fixes every iteration order.
template <typename T>
class ParamStoreT {
 public:
  struct Entry {
    TensorT<T> value;
    bool trainable = true;
    i64 step = 0;
    TensorT<T> m, v;  // Adam moments, allocated at first step
  };

  TensorT<T>& create(const std::string& name, std::vector<i64> shape, bool trainable = true) {
    if (entries_.count(name)) throw ShapeError("param '" + name + "' already exists");
    Entry e;
    e.value = TensorT<T>(std::move(shape));
    e.trainable = trainable;
    return entries_.emplace(name, std::move(e)).first->second.value;
  }

  bool has(const std::string& name) const { return entries_.count(name) != 0; }

  Entry& entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ShapeError("unknown param '" + name + "'");
    return it->second;
  }
  const Entry& entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ShapeError("unknown param '" + name + "'");
    return it->second;
  }

  TensorT<T>& tensor(const std::string& name) { return entry(name).value; }
  const TensorT<T>& tensor(const std::string& name) const { return entry(name).value; }

  std::map<std::string, Entry>& entries() { return entries_; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  // One Adam update with bias correction. Missing grads are treated as zero
  // (moments still decay).
  void adam_step(const std::map<std::string, TensorT<T>>& grads, const AdamConfig& cfg) {
    for (auto& [name, e] : entries_) {
      if (!e.trainable) continue;
      const TensorT<T>* g = nullptr;
      auto it = grads.find(name);
      if (it != grads.end()) {
        if (!it->second.same_shape(e.value))
          throw ShapeError("adam_step: grad shape mismatch for '" + name + "'");
        g = &it->second;
      }
      if (e.m.v.empty()) {
        e.m = TensorT<T>::zeros(e.value.shape);
        e.v = TensorT<T>::zeros(e.value.shape);
      }
      e.step += 1;
      double bc1 = 1.0 - std::pow(cfg.beta1, double(e.step));
      double bc2 = 1.0 - std::pow(cfg.beta2, double(e.step));
      for (i64 i = 0; i < e.value.numel(); ++i) {
        double gi = g ? double((*g)[i]) : 0.0;
        double m = cfg.beta1 * double(e.m[i]) + (1.0 - cfg.beta1) * gi;
        double v = cfg.beta2 * double(e.v[i]) + (1.0 - cfg.beta2) * gi * gi;
        e.m[i] = T(m);
        e.v[i] = T(v);
        e.value[i] =
            T(double(e.value[i]) - cfg.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps));
      }
    }
  }

  template <typename U>
  ParamStoreT<U> cast() const {
    ParamStoreT<U> out;
    for (const auto& [name, e] : entries_) {
      auto& t = out.create(name, e.value.shape, e.trainable);
      for (i64 i = 0; i < t.numel(); ++i) t[i] = U(e.value[i]);
    }
    return out;
  }

 private:
  std::map<std::string, Entry> entries_;
};

using ParamStore = ParamStoreT<float>;

// Binds store entries to tape leaves, one leaf per name per tape. When
// with_grad is false the whole recorded graph is gradient-free (fast eval).
template <typename T>
struct Binder {
  TapeT<T>& tape;
  ParamStoreT<T>& store;
  bool with_grad = true;
  std::map<std::string, VarT<T>> bound;

  VarT<T> operator()(const std::string& name) {
    auto it = bound.find(name);
    if (it != bound.end()) return it->second;
    auto& e = store.entry(name);
    VarT<T> v = tape.leaf(e.value, with_grad && e.trainable);
    bound.emplace(name, v);
    return v;
  }

  // Gradients for every bound trainable param; zeros if untouched by backward.
  std::map<std::string, TensorT<T>> collect_grads() {
    std::map<std::string, TensorT<T>> out;
    for (auto& [name, var] : bound) {
      if (!var.requires_grad()) continue;
      if (tape.has_grad(var.id))
        out.emplace(name, tape.grad(var.id));
      else
        out.emplace(name, TensorT<T>::zeros(store.tensor(name).shape));
    }
    return out;
  }
};

// Checkpoint file I/O (32-bit float format; see README for the layout).
void save_checkpoint(const ParamStore& store, const std::string& path, bool include_adam);
void load_checkpoint(ParamStore& store, const std::string& path);

}  // namespace gmic
