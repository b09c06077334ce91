// Independent reference implementations used only by tests. Everything here
// is deliberately naive (loops, enumeration, central differences) and shares
// no code with the library paths it checks.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "gmic/roi.hpp"
#include "gmic/tensor.hpp"

namespace oracle {

using gmic::i64;
using gmic::TensorD;

// --------------------------------------------------------------------------
// central finite differences
// --------------------------------------------------------------------------

struct GradCheck {
  double max_rel_err = 0.0;
  i64 coords_checked = 0;
};

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// loss_fn: evaluates the scalar loss from scratch on the given inputs.
// analytic: gradient produced by the implementation under test, same layout.
// Checks every coordinate if max_coords <= 0, otherwise a deterministic
// stride-spread subset per input.
inline GradCheck finite_difference_check(
    std::vector<TensorD> inputs, const std::function<double(const std::vector<TensorD>&)>& loss_fn,
    const std::vector<TensorD>& analytic, i64 max_coords = -1) {
  GradCheck res;
  for (size_t t = 0; t < inputs.size(); ++t) {
    i64 n = inputs[t].numel();
    i64 step = 1;
    if (max_coords > 0 && n > max_coords) step = n / max_coords;
    for (i64 i = 0; i < n; i += step) {
      double x0 = inputs[t][i];
      double h = 1e-5 * std::max(1.0, std::abs(x0));
      inputs[t][i] = x0 + h;
      double lp = loss_fn(inputs);
      inputs[t][i] = x0 - h;
      double lm = loss_fn(inputs);
      inputs[t][i] = x0;
      double numeric = (lp - lm) / (2.0 * h);
      res.max_rel_err = std::max(res.max_rel_err, rel_err(analytic[t][i], numeric));
      res.coords_checked += 1;
    }
  }
  return res;
}

// --------------------------------------------------------------------------
// quadruple-loop convolution
// --------------------------------------------------------------------------

inline TensorD conv2d_naive(const TensorD& x, const TensorD& k, i64 stride, i64 pad) {
  i64 n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  i64 cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  i64 ho = (h + 2 * pad - kh) / stride + 1;
  i64 wo = (w + 2 * pad - kw) / stride + 1;
  TensorD out({n, cout, ho, wo});
  for (i64 ni = 0; ni < n; ++ni)
    for (i64 co = 0; co < cout; ++co)
      for (i64 oh = 0; oh < ho; ++oh)
        for (i64 ow = 0; ow < wo; ++ow) {
          double acc = 0.0;
          for (i64 ci = 0; ci < cin; ++ci)
            for (i64 u = 0; u < kh; ++u)
              for (i64 v = 0; v < kw; ++v) {
                i64 ih = oh * stride - pad + u;
                i64 iw = ow * stride - pad + v;
                if (ih < 0 || ih >= h || iw < 0 || iw >= w) continue;
                acc += x[x.at4(ni, ci, ih, iw)] * k[k.at4(co, ci, u, v)];
              }
          out[out.at4(ni, co, oh, ow)] = acc;
        }
  return out;
}

// --------------------------------------------------------------------------
// window sums and greedy retrieval
// --------------------------------------------------------------------------

inline double window_sum_naive(const TensorD& grid, const gmic::SmWindow& win) {
  double acc = 0.0;
  for (i64 i = win.i; i < win.i + win.h_cells; ++i)
    for (i64 j = win.j; j < win.j + win.w_cells; ++j) acc += grid[i * grid.dim(1) + j];
  return acc;
}

struct GreedyPick {
  gmic::SmWindow window;
  double criterion;
};

// Brute-force greedy: every round enumerates every window, recomputes sums
// naively, applies the same tie rule (max sum, then fewest previously reset
// cells, then row-major) and zeroes the chosen cells.
inline std::vector<GreedyPick> greedy_retrieval_naive(TensorD ahat, i64 wh, i64 ww, int k) {
  i64 h = ahat.dim(0), w = ahat.dim(1);
  std::vector<char> reset(size_t(h * w), 0);
  std::vector<GreedyPick> out;
  for (int round = 0; round < k; ++round) {
    bool have = false;
    gmic::SmWindow best;
    double best_sum = 0.0;
    i64 best_overlap = 0;
    for (i64 i = 0; i + wh <= h; ++i)
      for (i64 j = 0; j + ww <= w; ++j) {
        gmic::SmWindow win{i, j, wh, ww};
        double s = window_sum_naive(ahat, win);
        i64 ov = 0;
        for (i64 a = i; a < i + wh; ++a)
          for (i64 b = j; b < j + ww; ++b) ov += reset[size_t(a * w + b)];
        if (!have || s > best_sum || (s == best_sum && ov < best_overlap)) {
          have = true;
          best = win;
          best_sum = s;
          best_overlap = ov;
        }
      }
    out.push_back({best, best_sum});
    for (i64 a = best.i; a < best.i + wh; ++a)
      for (i64 b = best.j; b < best.j + ww; ++b) {
        ahat[a * w + b] = 0.0;
        reset[size_t(a * w + b)] = 1;
      }
  }
  return out;
}

// --------------------------------------------------------------------------
// metrics
// --------------------------------------------------------------------------

// O(n^2) pairwise AUC with ties counted one half.
inline double auc_pairwise(const std::vector<double>& scores, const std::vector<int>& labels) {
  i64 wins = 0, ties = 0, np = 0, nn = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 1) {
      ++np;
      for (size_t j = 0; j < scores.size(); ++j) {
        if (labels[j] != 0) continue;
        if (scores[i] > scores[j]) ++wins;
        else if (scores[i] == scores[j]) ++ties;
      }
    } else {
      ++nn;
    }
  }
  return (double(wins) + 0.5 * double(ties)) / (double(np) * double(nn));
}

// sort-and-average top-m pooling
inline double top_m_mean(std::vector<double> values, i64 m) {
  std::sort(values.begin(), values.end(), std::greater<double>());
  double acc = 0.0;
  for (i64 i = 0; i < m; ++i) acc += values[size_t(i)];
  return acc / double(m);
}

// scalar-loop gated attention: alpha_k over w.(tanh(V h) * sigm(U h))
inline std::vector<double> gated_attention_scalar(const std::vector<std::vector<double>>& h,
                                                  const std::vector<std::vector<double>>& V,
                                                  const std::vector<std::vector<double>>& U,
                                                  const std::vector<double>& w) {
  size_t k = h.size(), da = V.size(), l = h[0].size();
  std::vector<double> scores(k, 0.0);
  for (size_t i = 0; i < k; ++i) {
    for (size_t d = 0; d < da; ++d) {
      double tv = 0.0, uv = 0.0;
      for (size_t j = 0; j < l; ++j) {
        tv += V[d][j] * h[i][j];
        uv += U[d][j] * h[i][j];
      }
      scores[i] += w[d] * std::tanh(tv) * (1.0 / (1.0 + std::exp(-uv)));
    }
  }
  double mx = *std::max_element(scores.begin(), scores.end());
  double denom = 0.0;
  for (double s : scores) denom += std::exp(s - mx);
  std::vector<double> alpha(k);
  for (size_t i = 0; i < k; ++i) alpha[i] = std::exp(scores[i] - mx) / denom;
  return alpha;
}

}  // namespace oracle
