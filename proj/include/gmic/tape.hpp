#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "gmic/common.hpp"
#include "gmic/tensor.hpp"

namespace gmic {

template <typename T>
class TapeT;

// Handle to a tensor recorded on a tape.
template <typename T>
struct VarT {
  TapeT<T>* tape = nullptr;
  i64 id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const TensorT<T>& value() const { return tape->value(id); }
  bool requires_grad() const { return tape->requires_grad(id); }
};

using Var = VarT<float>;
using VarD = VarT<double>;

// Reverse-mode tape. Records one forward pass; backward() may be called once,
// visits ops in exact reverse recording order and accumulates gradients
// additively. Values and gradients of interior nodes are released as backward
// consumes them, so peak memory during backward stays near the forward peak.
template <typename T>
class TapeT {
 public:
  using BackwardFn = std::function<void(TapeT&)>;

  VarT<T> leaf(TensorT<T> value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.is_leaf = true;
    nodes_.push_back(std::move(n));
    return {this, i64(nodes_.size()) - 1};
  }

  VarT<T> constant(TensorT<T> value) { return leaf(std::move(value), false); }

  VarT<T> op_node(TensorT<T> value, bool requires_grad, BackwardFn backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.is_leaf = false;
    if (requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, i64(nodes_.size()) - 1};
  }

  const TensorT<T>& value(i64 id) const { return nodes_[size_t(id)].value; }
  TensorT<T>& mutable_value(i64 id) { return nodes_[size_t(id)].value; }
  bool requires_grad(i64 id) const { return nodes_[size_t(id)].requires_grad; }

  bool has_grad(i64 id) const { return !nodes_[size_t(id)].grad.v.empty(); }

  // Gradient buffer, lazily allocated to zeros. Ops accumulate into it.
  TensorT<T>& grad(i64 id) {
    Node& n = nodes_[size_t(id)];
    if (n.grad.v.empty()) {
      n.grad.shape = n.value.shape;
      n.grad.v.assign(n.value.v.size(), T(0));
    }
    return n.grad;
  }

  void backward(VarT<T> loss) {
    if (consumed_) throw NumericError("tape already consumed: backward() is single-use");
    consumed_ = true;
    if (loss.tape != this) throw NumericError("loss recorded on a different tape");
    const Node& ln = nodes_[size_t(loss.id)];
    if (ln.value.numel() != 1) throw NumericError("backward() requires a scalar loss");
    if (!ln.requires_grad) throw NumericError("loss does not depend on any trainable input");
    grad(loss.id)[0] = T(1);
    for (i64 i = loss.id; i >= 0; --i) {
      Node& n = nodes_[size_t(i)];
      if (n.requires_grad && !n.is_leaf) {
        if (!n.grad.v.empty() && n.backward) n.backward(*this);
        // interior node fully consumed: release to cap peak memory
        n.value.v.clear();
        n.value.v.shrink_to_fit();
        n.grad.v.clear();
        n.grad.v.shrink_to_fit();
        n.backward = nullptr;
      }
    }
  }

  bool consumed() const { return consumed_; }
  i64 size() const { return i64(nodes_.size()); }

 private:
  struct Node {
    TensorT<T> value;
    TensorT<T> grad;
    BackwardFn backward;
    bool requires_grad = false;
    bool is_leaf = false;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

using Tape = TapeT<float>;
using TapeD = TapeT<double>;

}  // namespace gmic
