#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "gmic/blas.hpp"
#include "gmic/tape.hpp"
#include "gmic/threading.hpp"

namespace gmic::ops {

inline constexpr double kBceClamp = 1e-7;       // yhat clamped to [eps, 1-eps]
inline constexpr double kLregGradFloor = 1e-6;  // below this, beta<1 gradient is 0

namespace detail {

// Deterministic chunked traversal; parallel only when the tensor is large.
// Chunk boundaries are fixed, so results do not depend on thread count.
template <typename F>
void chunked(i64 n, F&& f) {
  constexpr i64 grain = 1 << 16;
  if (n <= grain) {
    f(i64(0), n);
    return;
  }
  i64 chunks = (n + grain - 1) / grain;
  parallel_for(chunks, [&](i64 c) { f(c * grain, std::min(n, (c + 1) * grain)); });
}

template <typename T>
void check_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename T>
VarT<T> add(VarT<T> a, VarT<T> b) {
  detail::check_same_shape(a.value(), b.value(), "add");
  TensorT<T> out(a.value().shape);
  const T* pa = a.value().data();
  const T* pb = b.value().data();
  T* po = out.data();
  detail::chunked(out.numel(), [&](i64 lo, i64 hi) {
    for (i64 i = lo; i < hi; ++i) po[i] = pa[i] + pb[i];
  });
  TapeT<T>* tp = a.tape;
  i64 aid = a.id, bid = b.id, oid = tp->size();
  return tp->op_node(std::move(out), a.requires_grad() || b.requires_grad(), [=](TapeT<T>& t) {
    const T* g = t.grad(oid).data();
    i64 n = t.grad(oid).numel();
    for (i64 which = 0; which < 2; ++which) {
      i64 id = which == 0 ? aid : bid;
      if (!t.requires_grad(id)) continue;
      T* gx = t.grad(id).data();
      detail::chunked(n, [&](i64 lo, i64 hi) {
        for (i64 i = lo; i < hi; ++i) gx[i] += g[i];
      });
    }
  });
}

template <typename T>
VarT<T> mul(VarT<T> a, VarT<T> b) {
  detail::check_same_shape(a.value(), b.value(), "elementwise_mul");
  TensorT<T> out(a.value().shape);
  const T* pa = a.value().data();
  const T* pb = b.value().data();
  T* po = out.data();
  detail::chunked(out.numel(), [&](i64 lo, i64 hi) {
    for (i64 i = lo; i < hi; ++i) po[i] = pa[i] * pb[i];
  });
  TapeT<T>* tp = a.tape;
  i64 aid = a.id, bid = b.id, oid = tp->size();
  return tp->op_node(std::move(out), a.requires_grad() || b.requires_grad(), [=](TapeT<T>& t) {
    const T* g = t.grad(oid).data();
    i64 n = t.grad(oid).numel();
    if (t.requires_grad(aid)) {
      const T* vb = t.value(bid).data();
      T* ga = t.grad(aid).data();
      detail::chunked(n, [&](i64 lo, i64 hi) {
        for (i64 i = lo; i < hi; ++i) ga[i] += g[i] * vb[i];
      });
    }
    if (t.requires_grad(bid)) {
      const T* va = t.value(aid).data();
      T* gb = t.grad(bid).data();
      detail::chunked(n, [&](i64 lo, i64 hi) {
        for (i64 i = lo; i < hi; ++i) gb[i] += g[i] * va[i];
      });
    }
  });
}

template <typename T>
VarT<T> scale(VarT<T> x, T c) {
  TensorT<T> out(x.value().shape);
  const T* px = x.value().data();
  T* po = out.data();
  detail::chunked(out.numel(), [&](i64 lo, i64 hi) {
    for (i64 i = lo; i < hi; ++i) po[i] = px[i] * c;
  });
  TapeT<T>* tp = x.tape;
  i64 xid = x.id, oid = tp->size();
  return tp->op_node(std::move(out), x.requires_grad(), [=](TapeT<T>& t) {
    const T* g = t.grad(oid).data();
    T* gx = t.grad(xid).data();
    i64 n = t.grad(oid).numel();
    detail::chunked(n, [&](i64 lo, i64 hi) {
      for (i64 i = lo; i < hi; ++i) gx[i] += g[i] * c;
    });
  });
}

template <typename T>
VarT<T> sigmoid(VarT<T> x) {
  TensorT<T> out(x.value().shape);
  const T* px = x.value().data();
  T* po = out.data();
  detail::chunked(out.numel(), [&](i64 lo, i64 hi) {
    for (i64 i = lo; i < hi; ++i) po[i] = T(1) / (T(1) + std::exp(-px[i]));
  });
  TapeT<T>* tp = x.tape;
  i64 xid = x.id, oid = tp->size();
  return tp->op_node(std::move(out), x.requires_grad(), [=](TapeT<T>& t) {
    const T* g = t.grad(oid).data();
    const T* y = t.value(oid).data();
    T* gx = t.grad(xid).data();
    detail::chunked(t.grad(oid).numel(), [&](i64 lo, i64 hi) {
      for (i64 i = lo; i < hi; ++i) gx[i] += g[i] * y[i] * (T(1) - y[i]);
    });
  });
}

template <typename T>
VarT<T> tanh_op(VarT<T> x) {
  TensorT<T> out(x.value().shape);
  const T* px = x.value().data();
  T* po = out.data();
  detail::chunked(out.numel(), [&](i64 lo, i64 hi) {
    for (i64 i = lo; i < hi; ++i) po[i] = std::tanh(px[i]);
  });
  TapeT<T>* tp = x.tape;
  i64 xid = x.id, oid = tp->size();
  return tp->op_node(std::move(out), x.requires_grad(), [=](TapeT<T>& t) {
    const T* g = t.grad(oid).data();
    const T* y = t.value(oid).data();
    T* gx = t.grad(xid).data();
    detail::chunked(t.grad(oid).numel(), [&](i64 lo, i64 hi) {
      for (i64 i = lo; i < hi; ++i) gx[i] += g[i] * (T(1) - y[i] * y[i]);
    });
  });
}

// Subgradient at 0 is 0.
template <typename T>
VarT<T> relu(VarT<T> x) {
  TensorT<T> out(x.value().shape);
  const T* px = x.value().data();
  T* po = out.data();
  detail::chunked(out.numel(), [&](i64 lo, i64 hi) {
    for (i64 i = lo; i < hi; ++i) po[i] = px[i] > T(0) ? px[i] : T(0);
  });
  TapeT<T>* tp = x.tape;
  i64 xid = x.id, oid = tp->size();
  return tp->op_node(std::move(out), x.requires_grad(), [=](TapeT<T>& t) {
    const T* g = t.grad(oid).data();
    const T* y = t.value(oid).data();
    T* gx = t.grad(xid).data();
    detail::chunked(t.grad(oid).numel(), [&](i64 lo, i64 hi) {
      for (i64 i = lo; i < hi; ++i)
        if (y[i] > T(0)) gx[i] += g[i];
    });
  });
}

// x: [N,C,H,W], b: [C] broadcast over N,H,W
template <typename T>
VarT<T> bias_channel(VarT<T> x, VarT<T> b) {
  const TensorT<T>& xv = x.value();
  if (xv.rank() != 4 || b.value().rank() != 1 || b.value().dim(0) != xv.dim(1))
    throw ShapeError("bias_channel: expected [N,C,H,W] and [C]");
  i64 n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  TensorT<T> out(xv.shape);
  const T* px = xv.data();
  const T* pb = b.value().data();
  T* po = out.data();
  parallel_for(n * c, [&](i64 nc) {
    T bias = pb[nc % c];
    const T* src = px + nc * hw;
    T* dst = po + nc * hw;
    for (i64 i = 0; i < hw; ++i) dst[i] = src[i] + bias;
  });
  TapeT<T>* tp = x.tape;
  i64 xid = x.id, bid = b.id, oid = tp->size();
  return tp->op_node(std::move(out), x.requires_grad() || b.requires_grad(), [=](TapeT<T>& t) {
    const T* g = t.grad(oid).data();
    if (t.requires_grad(xid)) {
      T* gx = t.grad(xid).data();
      detail::chunked(n * c * hw, [&](i64 lo, i64 hi) {
        for (i64 i = lo; i < hi; ++i) gx[i] += g[i];
      });
    }
    if (t.requires_grad(bid)) {
      T* gb = t.grad(bid).data();
      parallel_for(c, [&](i64 ci) {
        double acc = 0.0;
        for (i64 ni = 0; ni < n; ++ni) {
          const T* src = g + (ni * c + ci) * hw;
          for (i64 i = 0; i < hw; ++i) acc += double(src[i]);
        }
        gb[ci] += T(acc);
      });
    }
  });
}

// ---------------------------------------------------------------------------
// matrix ops
// ---------------------------------------------------------------------------

// a: [M,K], b: [K,N] -> [M,N]
template <typename T>
VarT<T> matmul(VarT<T> a, VarT<T> b) {
  const TensorT<T>& av = a.value();
  const TensorT<T>& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0))
    throw ShapeError("matmul: incompatible " + av.shape_str() + " x " + bv.shape_str());
  i64 m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  TensorT<T> out({m, n});
  gmic::detail::gemm(false, false, m, n, k, T(1), av.data(), k, bv.data(), n, T(0), out.data(), n);
  TapeT<T>* tp = a.tape;
  i64 aid = a.id, bid = b.id, oid = tp->size();
  return tp->op_node(std::move(out), a.requires_grad() || b.requires_grad(), [=](TapeT<T>& t) {
    const T* g = t.grad(oid).data();
    if (t.requires_grad(aid)) {
      // dA += dY * B^T
      gmic::detail::gemm(false, true, m, k, n, T(1), g, n, t.value(bid).data(), n, T(1),
                         t.grad(aid).data(), k);
    }
    if (t.requires_grad(bid)) {
      // dB += A^T * dY
      gmic::detail::gemm(true, false, k, n, m, T(1), t.value(aid).data(), k, g, n, T(1),
                         t.grad(bid).data(), n);
    }
  });
}

// x: [N,Din], w: [Dout,Din] -> [N,Dout] (y = x w^T)
template <typename T>
VarT<T> linear(VarT<T> x, VarT<T> w) {
  const TensorT<T>& xv = x.value();
  const TensorT<T>& wv = w.value();
  if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(1))
    throw ShapeError("linear: incompatible " + xv.shape_str() + " x " + wv.shape_str());
  i64 n = xv.dim(0), din = xv.dim(1), dout = wv.dim(0);
  TensorT<T> out({n, dout});
  gmic::detail::gemm(false, true, n, dout, din, T(1), xv.data(), din, wv.data(), din, T(0),
                     out.data(), dout);
  TapeT<T>* tp = x.tape;
  i64 xid = x.id, wid = w.id, oid = tp->size();
  return tp->op_node(std::move(out), x.requires_grad() || w.requires_grad(), [=](TapeT<T>& t) {
    const T* g = t.grad(oid).data();
    if (t.requires_grad(xid)) {
      // dX += dY * W
      gmic::detail::gemm(false, false, n, din, dout, T(1), g, dout, t.value(wid).data(), din, T(1),
                         t.grad(xid).data(), din);
    }
    if (t.requires_grad(wid)) {
      // dW += dY^T * X
      gmic::detail::gemm(true, false, dout, din, n, T(1), g, dout, t.value(xid).data(), din, T(1),
                         t.grad(wid).data(), din);
    }
  });
}

template <typename T>
VarT<T> linear(VarT<T> x, VarT<T> w, VarT<T> b) {
  VarT<T> y = linear(x, w);
  const TensorT<T>& bv = b.value();
  if (bv.rank() != 1 || bv.dim(0) != y.value().dim(1))
    throw ShapeError("linear: bias shape mismatch");
  i64 n = y.value().dim(0), dout = y.value().dim(1);
  TensorT<T> out(y.value().shape);
  const T* py = y.value().data();
  const T* pb = bv.data();
  T* po = out.data();
  for (i64 r = 0; r < n; ++r)
    for (i64 c = 0; c < dout; ++c) po[r * dout + c] = py[r * dout + c] + pb[c];
  TapeT<T>* tp = x.tape;
  i64 yid = y.id, bid = b.id, oid = tp->size();
  return tp->op_node(std::move(out), y.requires_grad() || b.requires_grad(), [=](TapeT<T>& t) {
    const T* g = t.grad(oid).data();
    if (t.requires_grad(yid)) {
      T* gy = t.grad(yid).data();
      for (i64 i = 0; i < n * dout; ++i) gy[i] += g[i];
    }
    if (t.requires_grad(bid)) {
      T* gb = t.grad(bid).data();
      for (i64 r = 0; r < n; ++r)
        for (i64 c = 0; c < dout; ++c) gb[c] += g[r * dout + c];
    }
  });
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <typename T>
VarT<T> reshape(VarT<T> x, std::vector<i64> new_shape) {
  if (TensorT<T>::numel_of(new_shape) != x.value().numel())
    throw ShapeError("reshape: element count mismatch");
  TensorT<T> out(std::move(new_shape), x.value().v);
  TapeT<T>* tp = x.tape;
  i64 xid = x.id, oid = tp->size();
  return tp->op_node(std::move(out), x.requires_grad(), [=](TapeT<T>& t) {
    const T* g = t.grad(oid).data();
    T* gx = t.grad(xid).data();
    i64 n = t.grad(oid).numel();
    for (i64 i = 0; i < n; ++i) gx[i] += g[i];
  });
}

// rows [r0, r1) of a [R,C] matrix
template <typename T>
VarT<T> slice_rows(VarT<T> x, i64 r0, i64 r1) {
  const TensorT<T>& xv = x.value();
  if (xv.rank() != 2 || r0 < 0 || r1 <= r0 || r1 > xv.dim(0))
    throw ShapeError("slice_rows: bad range");
  i64 c = xv.dim(1);
  TensorT<T> out({r1 - r0, c});
  std::copy(xv.data() + r0 * c, xv.data() + r1 * c, out.data());
  TapeT<T>* tp = x.tape;
  i64 xid = x.id, oid = tp->size();
  return tp->op_node(std::move(out), x.requires_grad(), [=](TapeT<T>& t) {
    const T* g = t.grad(oid).data();
    T* gx = t.grad(xid).data();
    for (i64 i = 0; i < (r1 - r0) * c; ++i) gx[r0 * c + i] += g[i];
  });
}

// one [h,w] spatial grid from [N,C,h,w]
template <typename T>
VarT<T> select_grid(VarT<T> x, i64 n, i64 c) {
  const TensorT<T>& xv = x.value();
  if (xv.rank() != 4 || n >= xv.dim(0) || c >= xv.dim(1))
    throw ShapeError("select_grid: index out of range");
  i64 h = xv.dim(2), w = xv.dim(3);
  i64 off = (n * xv.dim(1) + c) * h * w;
  TensorT<T> out({h, w});
  std::copy(xv.data() + off, xv.data() + off + h * w, out.data());
  TapeT<T>* tp = x.tape;
  i64 xid = x.id, oid = tp->size();
  return tp->op_node(std::move(out), x.requires_grad(), [=](TapeT<T>& t) {
    const T* g = t.grad(oid).data();
    T* gx = t.grad(xid).data();
    for (i64 i = 0; i < h * w; ++i) gx[off + i] += g[i];
  });
}

// single element as a scalar
template <typename T>
VarT<T> select_element(VarT<T> x, i64 index) {
  if (index < 0 || index >= x.value().numel()) throw ShapeError("select_element: out of range");
  TensorT<T> out = TensorT<T>::scalar(x.value()[index]);
  TapeT<T>* tp = x.tape;
  i64 xid = x.id, oid = tp->size();
  return tp->op_node(std::move(out), x.requires_grad(), [=](TapeT<T>& t) {
    t.grad(xid)[index] += t.grad(oid)[0];
  });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename T>
VarT<T> sum_all(VarT<T> x) {
  double acc = 0.0;
  for (i64 i = 0; i < x.value().numel(); ++i) acc += double(x.value()[i]);
  TensorT<T> out = TensorT<T>::scalar(T(acc));
  TapeT<T>* tp = x.tape;
  i64 xid = x.id, oid = tp->size();
  return tp->op_node(std::move(out), x.requires_grad(), [=](TapeT<T>& t) {
    T g = t.grad(oid)[0];
    T* gx = t.grad(xid).data();
    i64 n = t.grad(xid).numel();
    for (i64 i = 0; i < n; ++i) gx[i] += g;
  });
}

// [N,C,H,W] -> [N,C]
template <typename T>
VarT<T> global_avg_pool(VarT<T> x) {
  const TensorT<T>& xv = x.value();
  if (xv.rank() != 4) throw ShapeError("global_avg_pool: expected [N,C,H,W]");
  i64 n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  TensorT<T> out({n, c});
  const T* px = xv.data();
  T* po = out.data();
  parallel_for(n * c, [&](i64 nc) {
    double acc = 0.0;
    const T* src = px + nc * hw;
    for (i64 i = 0; i < hw; ++i) acc += double(src[i]);
    po[nc] = T(acc / double(hw));
  });
  TapeT<T>* tp = x.tape;
  i64 xid = x.id, oid = tp->size();
  return tp->op_node(std::move(out), x.requires_grad(), [=](TapeT<T>& t) {
    const T* g = t.grad(oid).data();
    T* gx = t.grad(xid).data();
    parallel_for(n * c, [&](i64 nc) {
      T gv = g[nc] / T(hw);
      T* dst = gx + nc * hw;
      for (i64 i = 0; i < hw; ++i) dst[i] += gv;
    });
  });
}

// softmax over all elements (used for attention scores, shape [K] or [K,1])
template <typename T>
VarT<T> softmax_flat(VarT<T> x) {
  const TensorT<T>& xv = x.value();
  i64 n = xv.numel();
  TensorT<T> out(xv.shape);
  T mx = *std::max_element(xv.v.begin(), xv.v.end());
  double denom = 0.0;
  for (i64 i = 0; i < n; ++i) denom += std::exp(double(xv[i] - mx));
  for (i64 i = 0; i < n; ++i) out[i] = T(std::exp(double(xv[i] - mx)) / denom);
  TapeT<T>* tp = x.tape;
  i64 xid = x.id, oid = tp->size();
  return tp->op_node(std::move(out), x.requires_grad(), [=](TapeT<T>& t) {
    const T* g = t.grad(oid).data();
    const T* y = t.value(oid).data();
    T* gx = t.grad(xid).data();
    double dot = 0.0;
    for (i64 i = 0; i < n; ++i) dot += double(g[i]) * double(y[i]);
    for (i64 i = 0; i < n; ++i) gx[i] += y[i] * (g[i] - T(dot));
  });
}

// ---------------------------------------------------------------------------
// objective pieces
// ---------------------------------------------------------------------------

// Mean of the m largest entries of a [h,w] grid. Ties at the selection
// threshold are broken row-major so exactly m cells are selected; the
// gradient is 1/m on selected cells and 0 elsewhere.
template <typename T>
VarT<T> top_fraction_pool(VarT<T> grid, i64 m) {
  const TensorT<T>& gv = grid.value();
  i64 n = gv.numel();
  if (n == 0) throw ShapeError("top_fraction_pool: empty grid");
  if (m < 1 || m > n) throw ShapeError("top_fraction_pool: m out of range");
  std::vector<i64> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), i64(0));
  std::partial_sort(idx.begin(), idx.begin() + m, idx.end(), [&](i64 a, i64 b) {
    if (gv[a] != gv[b]) return gv[a] > gv[b];
    return a < b;
  });
  idx.resize(size_t(m));
  double acc = 0.0;
  for (i64 i : idx) acc += double(gv[i]);
  TensorT<T> out = TensorT<T>::scalar(T(acc / double(m)));
  TapeT<T>* tp = grid.tape;
  i64 gid = grid.id, oid = tp->size();
  return tp->op_node(std::move(out), grid.requires_grad(),
                     [gid, oid, m, sel = std::move(idx)](TapeT<T>& t) {
                       T g = t.grad(oid)[0] / T(m);
                       T* gx = t.grad(gid).data();
                       for (i64 i : sel) gx[i] += g;
                     });
}

// sum_i |a_i|^beta. Entries are nonnegative in practice (sigmoid outputs);
// for beta < 1 the gradient is clipped to 0 below kLregGradFloor since
// a^(beta-1) diverges at 0.
template <typename T>
VarT<T> power_sum(VarT<T> grid, T beta) {
  if (!(beta > T(0))) throw ShapeError("power_sum: beta must be positive");
  const TensorT<T>& gv = grid.value();
  i64 n = gv.numel();
  double acc = 0.0;
  for (i64 i = 0; i < n; ++i) acc += std::pow(std::abs(double(gv[i])), double(beta));
  TensorT<T> out = TensorT<T>::scalar(T(acc));
  TapeT<T>* tp = grid.tape;
  i64 gid = grid.id, oid = tp->size();
  return tp->op_node(std::move(out), grid.requires_grad(), [=](TapeT<T>& t) {
    T g = t.grad(oid)[0];
    const TensorT<T>& xv = t.value(gid);
    T* gx = t.grad(gid).data();
    for (i64 i = 0; i < n; ++i) {
      double a = double(xv[i]);
      if (a <= 0.0) continue;  // subgradient 0 at 0; negatives do not occur
      if (beta < T(1) && a < kLregGradFloor) continue;
      gx[i] += g * T(double(beta) * std::pow(a, double(beta) - 1.0));
    }
  });
}

// Binary cross-entropy against a fixed 0/1 label; yhat is a scalar var.
template <typename T>
VarT<T> bce(T y, VarT<T> yhat) {
  if (yhat.value().numel() != 1) throw ShapeError("bce: yhat must be scalar");
  double p = double(yhat.value()[0]);
  double lo = kBceClamp, hi = 1.0 - kBceClamp;
  double pc = std::min(std::max(p, lo), hi);
  double loss = -(double(y) * std::log(pc) + (1.0 - double(y)) * std::log(1.0 - pc));
  TensorT<T> out = TensorT<T>::scalar(T(loss));
  TapeT<T>* tp = yhat.tape;
  i64 pid = yhat.id, oid = tp->size();
  bool clamped = (p < lo) || (p > hi);
  return tp->op_node(std::move(out), yhat.requires_grad(), [=](TapeT<T>& t) {
    if (clamped) return;  // gradient does not flow past the clamp
    T g = t.grad(oid)[0];
    t.grad(pid)[0] += g * T((pc - double(y)) / (pc * (1.0 - pc)));
  });
}

}  // namespace gmic::ops
