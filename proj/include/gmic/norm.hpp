#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "gmic/tape.hpp"
#include "gmic/threading.hpp"

namespace gmic::ops {

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.1;

// Batch normalization over [N,C,H,W]. Train mode normalizes by batch
// statistics and updates running stats in place (running_var holds the
// unbiased estimate); eval mode normalizes by the provided running stats.
// Train mode requires N*H*W >= 2 per channel.
template <typename T>
VarT<T> batch_norm2d(VarT<T> x, VarT<T> gamma, VarT<T> beta, TensorT<T>* running_mean,
                     TensorT<T>* running_var, bool train) {
  const TensorT<T>& xv = x.value();
  if (xv.rank() != 4) throw ShapeError("batch_norm2d: expected [N,C,H,W]");
  i64 n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  if (gamma.value().numel() != c || beta.value().numel() != c)
    throw ShapeError("batch_norm2d: gamma/beta must be [C]");
  if (!running_mean || !running_var || running_mean->numel() != c || running_var->numel() != c)
    throw ShapeError("batch_norm2d: running stats must be [C]");
  i64 count = n * h * w;
  if (train && count < 2) throw ShapeError("batch_norm2d: train mode needs N*H*W >= 2");

  auto mean = std::make_shared<std::vector<double>>(size_t(c));
  auto inv = std::make_shared<std::vector<double>>(size_t(c));
  const T* px = xv.data();

  if (train) {
    parallel_for(c, [&](i64 ci) {
      double s = 0.0, s2 = 0.0;
      for (i64 ni = 0; ni < n; ++ni) {
        const T* plane = px + (ni * c + ci) * h * w;
        for (i64 i = 0; i < h * w; ++i) {
          double v = double(plane[i]);
          s += v;
          s2 += v * v;
        }
      }
      double mu = s / double(count);
      double var = std::max(0.0, s2 / double(count) - mu * mu);
      (*mean)[size_t(ci)] = mu;
      (*inv)[size_t(ci)] = 1.0 / std::sqrt(var + kBnEps);
      double unbiased = var * double(count) / double(count - 1);
      (*running_mean)[ci] = T((1.0 - kBnMomentum) * double((*running_mean)[ci]) + kBnMomentum * mu);
      (*running_var)[ci] =
          T((1.0 - kBnMomentum) * double((*running_var)[ci]) + kBnMomentum * unbiased);
    });
  } else {
    for (i64 ci = 0; ci < c; ++ci) {
      (*mean)[size_t(ci)] = double((*running_mean)[ci]);
      (*inv)[size_t(ci)] = 1.0 / std::sqrt(double((*running_var)[ci]) + kBnEps);
    }
  }

  TensorT<T> out(xv.shape);
  T* po = out.data();
  const T* pg = gamma.value().data();
  const T* pb = beta.value().data();
  parallel_for(n * c, [&](i64 nc) {
    i64 ci = nc % c;
    T a = T(double(pg[ci]) * (*inv)[size_t(ci)]);
    T b = T(double(pb[ci]) - double(pg[ci]) * (*inv)[size_t(ci)] * (*mean)[size_t(ci)]);
    const T* src = px + nc * h * w;
    T* dst = po + nc * h * w;
    for (i64 i = 0; i < h * w; ++i) dst[i] = a * src[i] + b;
  });

  TapeT<T>* tp = x.tape;
  i64 xid = x.id, gid = gamma.id, bid = beta.id, oid = tp->size();
  bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  return tp->op_node(std::move(out), rg, [=](TapeT<T>& t) {
    const T* g = t.grad(oid).data();
    const T* xp = t.value(xid).data();
    const T* gammap = t.value(gid).data();
    bool need_dx = t.requires_grad(xid);
    bool need_dg = t.requires_grad(gid);
    bool need_db = t.requires_grad(bid);
    // per-channel reductions: s1 = sum(dy), s2 = sum(dy * xhat)
    std::vector<double> s1(size_t(c), 0.0), s2(size_t(c), 0.0);
    parallel_for(c, [&](i64 ci) {
      double mu = (*mean)[size_t(ci)], iv = (*inv)[size_t(ci)];
      double a1 = 0.0, a2 = 0.0;
      for (i64 ni = 0; ni < n; ++ni) {
        const T* gp = g + (ni * c + ci) * h * w;
        const T* vp = xp + (ni * c + ci) * h * w;
        for (i64 i = 0; i < h * w; ++i) {
          double gv = double(gp[i]);
          a1 += gv;
          a2 += gv * (double(vp[i]) - mu) * iv;
        }
      }
      s1[size_t(ci)] = a1;
      s2[size_t(ci)] = a2;
    });
    if (need_dg) {
      T* dg = t.grad(gid).data();
      for (i64 ci = 0; ci < c; ++ci) dg[ci] += T(s2[size_t(ci)]);
    }
    if (need_db) {
      T* db = t.grad(bid).data();
      for (i64 ci = 0; ci < c; ++ci) db[ci] += T(s1[size_t(ci)]);
    }
    if (need_dx) {
      T* dx = t.grad(xid).data();
      parallel_for(n * c, [&](i64 nc) {
        i64 ci = nc % c;
        double mu = (*mean)[size_t(ci)], iv = (*inv)[size_t(ci)];
        double k = double(gammap[ci]) * iv;
        const T* gp = g + nc * h * w;
        const T* vp = xp + nc * h * w;
        T* dp = dx + nc * h * w;
        if (train) {
          double m1 = s1[size_t(ci)] / double(count);
          double m2 = s2[size_t(ci)] / double(count);
          for (i64 i = 0; i < h * w; ++i) {
            double xhat = (double(vp[i]) - mu) * iv;
            dp[i] += T(k * (double(gp[i]) - m1 - xhat * m2));
          }
        } else {
          for (i64 i = 0; i < h * w; ++i) dp[i] += T(k * double(gp[i]));
        }
      });
    }
  });
}

}  // namespace gmic::ops
