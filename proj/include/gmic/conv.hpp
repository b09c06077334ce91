#pragma once

#include <algorithm>
#include <limits>
#include <memory>
#include <vector>

#include "gmic/blas.hpp"
#include "gmic/tape.hpp"
#include "gmic/threading.hpp"

namespace gmic::ops {

namespace detail {

// im2col for output rows [r0,r1): cols is [Cin*kh*kw, (r1-r0)*Wo] row-major.
template <typename T>
void im2col_chunk(const T* x, i64 cin, i64 h, i64 w, i64 kh, i64 kw, i64 stride, i64 pad, i64 wo,
                  i64 r0, i64 r1, T* cols) {
  i64 chunk_cols = (r1 - r0) * wo;
  for (i64 c = 0; c < cin; ++c) {
    for (i64 u = 0; u < kh; ++u) {
      for (i64 v = 0; v < kw; ++v) {
        T* row = cols + ((c * kh + u) * kw + v) * chunk_cols;
        for (i64 oh = r0; oh < r1; ++oh) {
          T* dst = row + (oh - r0) * wo;
          i64 ih = oh * stride - pad + u;
          if (ih < 0 || ih >= h) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* src = x + (c * h + ih) * w;
          // valid ow range so that iw = ow*stride - pad + v stays in [0, w)
          i64 lo = pad > v ? (pad - v + stride - 1) / stride : 0;
          i64 hi = std::min(wo, (w - 1 - v + pad) / stride + 1);
          if (hi < lo) hi = lo;
          std::fill(dst, dst + lo, T(0));
          for (i64 ow = lo; ow < hi; ++ow) dst[ow] = src[ow * stride - pad + v];
          std::fill(dst + hi, dst + wo, T(0));
        }
      }
    }
  }
}

// scatter-add transpose of im2col_chunk
template <typename T>
void col2im_chunk(const T* cols, i64 cin, i64 h, i64 w, i64 kh, i64 kw, i64 stride, i64 pad,
                  i64 wo, i64 r0, i64 r1, T* dx) {
  i64 chunk_cols = (r1 - r0) * wo;
  for (i64 c = 0; c < cin; ++c) {
    for (i64 u = 0; u < kh; ++u) {
      for (i64 v = 0; v < kw; ++v) {
        const T* row = cols + ((c * kh + u) * kw + v) * chunk_cols;
        for (i64 oh = r0; oh < r1; ++oh) {
          const T* src = row + (oh - r0) * wo;
          i64 ih = oh * stride - pad + u;
          if (ih < 0 || ih >= h) continue;
          T* dst = dx + (c * h + ih) * w;
          i64 lo = pad > v ? (pad - v + stride - 1) / stride : 0;
          i64 hi = std::min(wo, (w - 1 - v + pad) / stride + 1);
          for (i64 ow = lo; ow < hi; ++ow) dst[ow * stride - pad + v] += src[ow];
        }
      }
    }
  }
}

inline i64 conv_chunk_rows(i64 k, i64 wo, i64 ho, i64 elem_size) {
  constexpr i64 budget = i64(4) << 20;  // per-thread im2col buffer cap
  i64 rows = budget / std::max<i64>(1, k * wo * elem_size);
  return std::clamp<i64>(rows, 1, ho);
}

}  // namespace detail

// Cross-correlation. x: [N,Cin,H,W], k: [Cout,Cin,kh,kw]. Output dims must be
// exact: (H + 2*pad - kh) divisible by stride.
template <typename T>
VarT<T> conv2d(VarT<T> x, VarT<T> kern, i64 stride, i64 pad) {
  const TensorT<T>& xv = x.value();
  const TensorT<T>& kv = kern.value();
  if (xv.rank() != 4 || kv.rank() != 4) throw ShapeError("conv2d: expected 4-D input and kernel");
  if (xv.dim(1) != kv.dim(1))
    throw ShapeError("conv2d: channel mismatch " + xv.shape_str() + " vs " + kv.shape_str());
  if (stride < 1 || pad < 0) throw ShapeError("conv2d: bad stride/pad");
  i64 n = xv.dim(0), cin = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  i64 cout = kv.dim(0), kh = kv.dim(2), kw = kv.dim(3);
  if (h + 2 * pad < kh || w + 2 * pad < kw) throw ShapeError("conv2d: kernel larger than input");
  if ((h + 2 * pad - kh) % stride != 0 || (w + 2 * pad - kw) % stride != 0)
    throw ShapeError("conv2d: output dims not integral for " + xv.shape_str());
  i64 ho = (h + 2 * pad - kh) / stride + 1;
  i64 wo = (w + 2 * pad - kw) / stride + 1;
  i64 kdim = cin * kh * kw;

  TensorT<T> out({n, cout, ho, wo});
  const T* px = xv.data();
  const T* pk = kv.data();
  T* po = out.data();
  i64 chunk = detail::conv_chunk_rows(kdim, wo, ho, i64(sizeof(T)));
  parallel_for(n, [&](i64 ni) {
    std::vector<T> cols(size_t(kdim * chunk * wo));
    for (i64 r0 = 0; r0 < ho; r0 += chunk) {
      i64 r1 = std::min(ho, r0 + chunk);
      detail::im2col_chunk(px + ni * cin * h * w, cin, h, w, kh, kw, stride, pad, wo, r0, r1,
                           cols.data());
      gmic::detail::gemm(false, false, cout, (r1 - r0) * wo, kdim, T(1), pk, kdim, cols.data(),
                         (r1 - r0) * wo, T(0), po + ni * cout * ho * wo + r0 * wo, ho * wo);
    }
  });

  TapeT<T>* tp = x.tape;
  i64 xid = x.id, kid = kern.id, oid = tp->size();
  return tp->op_node(std::move(out), x.requires_grad() || kern.requires_grad(), [=](TapeT<T>& t) {
    const T* g = t.grad(oid).data();
    const T* kp = t.value(kid).data();
    const T* xp = t.value(xid).data();
    bool need_dx = t.requires_grad(xid);
    bool need_dk = t.requires_grad(kid);
    T* dx = need_dx ? t.grad(xid).data() : nullptr;
    std::vector<std::vector<T>> dk_partial;
    if (need_dk) dk_partial.assign(size_t(n), std::vector<T>(size_t(cout * kdim), T(0)));
    parallel_for(n, [&](i64 ni) {
      std::vector<T> cols(size_t(kdim * chunk * wo));
      for (i64 r0 = 0; r0 < ho; r0 += chunk) {
        i64 r1 = std::min(ho, r0 + chunk);
        const T* gy = g + ni * cout * ho * wo + r0 * wo;  // [cout, (r1-r0)*wo], ld = ho*wo
        if (need_dk) {
          detail::im2col_chunk(xp + ni * cin * h * w, cin, h, w, kh, kw, stride, pad, wo, r0, r1,
                               cols.data());
          gmic::detail::gemm(false, true, cout, kdim, (r1 - r0) * wo, T(1), gy, ho * wo,
                             cols.data(), (r1 - r0) * wo, T(1), dk_partial[size_t(ni)].data(),
                             kdim);
        }
        if (need_dx) {
          // dcols = K^T * dY
          gmic::detail::gemm(true, false, kdim, (r1 - r0) * wo, cout, T(1), kp, kdim, gy, ho * wo,
                             T(0), cols.data(), (r1 - r0) * wo);
          detail::col2im_chunk(cols.data(), cin, h, w, kh, kw, stride, pad, wo, r0, r1,
                               dx + ni * cin * h * w);
        }
      }
    });
    if (need_dk) {
      T* dk = t.grad(kid).data();
      for (i64 ni = 0; ni < n; ++ni) {  // fixed reduction order
        const std::vector<T>& part = dk_partial[size_t(ni)];
        for (i64 i = 0; i < cout * kdim; ++i) dk[i] += part[size_t(i)];
      }
    }
  });
}

// Max pooling with floor output dims; padded cells never win. Ties within a
// window resolve to the first cell in row-major scan order.
template <typename T>
VarT<T> max_pool2d(VarT<T> x, i64 k, i64 stride, i64 pad = 0) {
  const TensorT<T>& xv = x.value();
  if (xv.rank() != 4) throw ShapeError("max_pool2d: expected [N,C,H,W]");
  if (k < 1 || stride < 1 || pad < 0 || pad >= k) throw ShapeError("max_pool2d: bad k/stride/pad");
  i64 n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  if (h + 2 * pad < k || w + 2 * pad < k) throw ShapeError("max_pool2d: window larger than input");
  i64 ho = (h + 2 * pad - k) / stride + 1;
  i64 wo = (w + 2 * pad - k) / stride + 1;

  TensorT<T> out({n, c, ho, wo});
  auto argmax = std::make_shared<std::vector<i64>>(size_t(n * c * ho * wo));
  const T* px = xv.data();
  T* po = out.data();
  i64* pa = argmax->data();
  parallel_for(n * c, [&](i64 nc) {
    const T* plane = px + nc * h * w;
    T* outp = po + nc * ho * wo;
    i64* argp = pa + nc * ho * wo;
    for (i64 oh = 0; oh < ho; ++oh) {
      for (i64 ow = 0; ow < wo; ++ow) {
        T best = -std::numeric_limits<T>::infinity();
        i64 best_idx = -1;
        for (i64 u = 0; u < k; ++u) {
          i64 ih = oh * stride - pad + u;
          if (ih < 0 || ih >= h) continue;
          for (i64 v = 0; v < k; ++v) {
            i64 iw = ow * stride - pad + v;
            if (iw < 0 || iw >= w) continue;
            T val = plane[ih * w + iw];
            if (val > best) {
              best = val;
              best_idx = ih * w + iw;
            }
          }
        }
        outp[oh * wo + ow] = best;
        argp[oh * wo + ow] = best_idx;
      }
    }
  });

  TapeT<T>* tp = x.tape;
  i64 xid = x.id, oid = tp->size();
  return tp->op_node(std::move(out), x.requires_grad(), [=](TapeT<T>& t) {
    const T* g = t.grad(oid).data();
    T* gx = t.grad(xid).data();
    const i64* arg = argmax->data();
    parallel_for(n * c, [&](i64 nc) {
      const T* gp = g + nc * ho * wo;
      const i64* ap = arg + nc * ho * wo;
      T* dst = gx + nc * h * w;
      for (i64 i = 0; i < ho * wo; ++i)
        if (ap[i] >= 0) dst[ap[i]] += gp[i];
    });
  });
}

}  // namespace gmic::ops
