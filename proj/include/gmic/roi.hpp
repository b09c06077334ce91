#pragma once

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "gmic/common.hpp"
#include "gmic/tensor.hpp"

namespace gmic {

struct RetrievalConfig {
  int num_rois = 6;   // K
  i64 patch_h = 256;  // h_c
  i64 patch_w = 256;  // w_c

  void validate() const {
    if (num_rois < 1) throw ConfigError("retrieval: K must be >= 1");
    if (patch_h < 1 || patch_w < 1) throw ConfigError("retrieval: patch dims must be positive");
  }
};

// Rectangular window on the saliency grid: top-left cell and size in cells.
struct SmWindow {
  i64 i = 0, j = 0;
  i64 h_cells = 1, w_cells = 1;
};

struct InputRect {
  i64 y0 = 0, x0 = 0;
  i64 h = 0, w = 0;
};

template <typename T>
struct RoiProposalT {
  SmWindow window;
  InputRect rect;
  TensorT<T> patch;  // [1,1,h_c,w_c], pixels copied from the input image
  double criterion = 0.0;
  int rank = 0;
};

using RoiProposal = RoiProposalT<float>;

// (v - min) / (max - min); a constant grid maps to all zeros.
template <typename T>
TensorT<T> minmax_normalize(const TensorT<T>& grid) {
  TensorT<T> out(grid.shape);
  T lo = grid[0], hi = grid[0];
  for (i64 i = 1; i < grid.numel(); ++i) {
    lo = std::min(lo, grid[i]);
    hi = std::max(hi, grid[i]);
  }
  if (hi == lo) return out;
  T range = hi - lo;
  for (i64 i = 0; i < grid.numel(); ++i) out[i] = (grid[i] - lo) / range;
  return out;
}

template <typename T>
TensorT<T> class_sum(const std::vector<TensorT<T>>& grids) {
  if (grids.empty()) throw ShapeError("class_sum: no grids");
  TensorT<T> out(grids[0].shape);
  for (const auto& g : grids) {
    if (!g.same_shape(out)) throw ShapeError("class_sum: shape mismatch");
    for (i64 i = 0; i < out.numel(); ++i) out[i] += g[i];
  }
  return out;
}

// Summed-area table over a [h,w] grid: every window sum in O(1).
class WindowSums {
 public:
  template <typename T>
  explicit WindowSums(const TensorT<T>& grid) {
    if (grid.rank() != 2) throw ShapeError("WindowSums: expected [h,w] grid");
    h_ = grid.dim(0);
    w_ = grid.dim(1);
    sat_.assign(size_t((h_ + 1) * (w_ + 1)), 0.0);
    for (i64 i = 0; i < h_; ++i)
      for (i64 j = 0; j < w_; ++j)
        at(i + 1, j + 1) = double(grid[i * w_ + j]) + at(i, j + 1) + at(i + 1, j) - at(i, j);
  }

  double sum(const SmWindow& win) const {
    if (win.i < 0 || win.j < 0 || win.h_cells < 1 || win.w_cells < 1 ||
        win.i + win.h_cells > h_ || win.j + win.w_cells > w_)
      throw ShapeError("window out of bounds");
    i64 i1 = win.i + win.h_cells, j1 = win.j + win.w_cells;
    return at(i1, j1) - at(win.i, j1) - at(i1, win.j) + at(win.i, win.j);
  }

  i64 grid_h() const { return h_; }
  i64 grid_w() const { return w_; }

 private:
  double& at(i64 i, i64 j) { return sat_[size_t(i * (w_ + 1) + j)]; }
  const double& at(i64 i, i64 j) const { return sat_[size_t(i * (w_ + 1) + j)]; }
  i64 h_ = 0, w_ = 0;
  std::vector<double> sat_;
};

// f_c(l, A): sum of the cells covered by the window.
template <typename T>
double window_criterion(const TensorT<T>& grid, const SmWindow& win) {
  return WindowSums(grid).sum(win);
}

// Saliency cells are snapped to multiples of 2^-20 before the greedy search.
// Window sums over such values are exact in double for any realistic grid, so
// argmax decisions (and oracle comparisons) cannot be perturbed by summation
// rounding.
inline constexpr double kCriterionQuantum = 1048576.0;  // 2^20

inline TensorT<double> quantize_grid(const TensorT<double>& grid) {
  TensorT<double> out(grid.shape);
  for (i64 i = 0; i < grid.numel(); ++i)
    out[i] = std::round(grid[i] * kCriterionQuantum) / kCriterionQuantum;
  return out;
}

// Window size in SM cells: max(1, round(patch * grid / image)).
inline std::pair<i64, i64> window_cell_dims(const RetrievalConfig& cfg, i64 image_h, i64 image_w,
                                            i64 grid_h, i64 grid_w) {
  i64 hc = std::max<i64>(1, std::llround(double(cfg.patch_h) * double(grid_h) / double(image_h)));
  i64 wc = std::max<i64>(1, std::llround(double(cfg.patch_w) * double(grid_w) / double(image_w)));
  if (hc > grid_h || wc > grid_w)
    throw ShapeError("retrieval: SM window larger than the saliency grid");
  return {hc, wc};
}

// Input-space rectangle for a window: top-left at (i*s, j*s), always full
// patch size; rectangles overhanging the image are shifted back inside.
inline InputRect map_window_to_input(const SmWindow& win, i64 downsample, i64 image_h,
                                     i64 image_w, const RetrievalConfig& cfg) {
  if (cfg.patch_h > image_h || cfg.patch_w > image_w)
    throw ShapeError("retrieval: image smaller than the patch size");
  InputRect r;
  r.h = cfg.patch_h;
  r.w = cfg.patch_w;
  r.y0 = std::min(win.i * downsample, image_h - cfg.patch_h);
  r.x0 = std::min(win.j * downsample, image_w - cfg.patch_w);
  if (r.y0 < 0) r.y0 = 0;
  if (r.x0 < 0) r.x0 = 0;
  return r;
}

template <typename T>
TensorT<T> crop_patch(const TensorT<T>& image, const InputRect& r) {
  i64 ih = image.dim(image.rank() - 2), iw = image.dim(image.rank() - 1);
  if (r.y0 < 0 || r.x0 < 0 || r.y0 + r.h > ih || r.x0 + r.w > iw)
    throw ShapeError("crop_patch: rect outside image");
  TensorT<T> out({1, 1, r.h, r.w});
  const T* src = image.data();
  for (i64 y = 0; y < r.h; ++y)
    std::copy(src + (r.y0 + y) * iw + r.x0, src + (r.y0 + y) * iw + r.x0 + r.w,
              out.data() + y * r.w);
  return out;
}

// Greedy window selection on an already built (normalized, class-summed)
// map. Each round picks the window maximizing the covered-cell sum, then
// zeroes those cells. Ties on the criterion prefer the window overlapping the
// fewest already-reset cells, then the row-major first position, so repeated
// picks of a dead window never happen on degenerate (all-tied) grids.
// Window sums come from a summed-area table rebuilt per round.
inline std::vector<std::pair<SmWindow, double>> greedy_windows(TensorT<double> ahat, i64 wh,
                                                               i64 ww, int k) {
  i64 gh = ahat.dim(0), gw = ahat.dim(1);
  if (wh < 1 || ww < 1 || wh > gh || ww > gw) throw ShapeError("greedy_windows: bad window dims");
  TensorT<double> reset_grid({gh, gw});
  std::vector<std::pair<SmWindow, double>> out;
  for (int round = 0; round < k; ++round) {
    WindowSums sums(ahat);
    WindowSums overlap(reset_grid);
    SmWindow best{0, 0, wh, ww};
    double best_sum = -std::numeric_limits<double>::infinity();
    double best_overlap = 0.0;
    for (i64 i = 0; i + wh <= gh; ++i) {
      for (i64 j = 0; j + ww <= gw; ++j) {
        SmWindow win{i, j, wh, ww};
        double s = sums.sum(win);
        if (s > best_sum) {
          best = win;
          best_sum = s;
          best_overlap = overlap.sum(win);
        } else if (s == best_sum) {
          double ov = overlap.sum(win);
          if (ov < best_overlap) {
            best = win;
            best_overlap = ov;
          }
        }
      }
    }
    out.emplace_back(best, best_sum);
    for (i64 i = best.i; i < best.i + wh; ++i) {
      for (i64 j = best.j; j < best.j + ww; ++j) {
        ahat[i * gw + j] = 0.0;
        reset_grid[i * gw + j] = 1.0;
      }
    }
  }
  return out;
}

// Full ROI retrieval: per-class min-max normalization, class sum,
// quantization, greedy window selection, and patch extraction from the input.
//
// image: [1,1,H,W] (or [H,W]); saliency: [C,h,w] (or [1,C,h,w]).
template <typename T>
std::vector<RoiProposalT<T>> retrieve_rois(const TensorT<T>& image, const TensorT<T>& saliency,
                                           const RetrievalConfig& cfg, i64 downsample) {
  cfg.validate();
  i64 image_h = image.dim(image.rank() - 2), image_w = image.dim(image.rank() - 1);
  i64 rank = saliency.rank();
  if (rank != 3 && rank != 4) throw ShapeError("retrieve_rois: saliency must be [C,h,w]");
  i64 classes = saliency.dim(rank - 3), gh = saliency.dim(rank - 2), gw = saliency.dim(rank - 1);
  if (cfg.patch_h > image_h || cfg.patch_w > image_w)
    throw ShapeError("retrieve_rois: image smaller than the patch size");

  TensorT<double> ahat({gh, gw});
  for (i64 c = 0; c < classes; ++c) {
    TensorT<double> grid({gh, gw});
    const T* src = saliency.data() + c * gh * gw;
    for (i64 i = 0; i < gh * gw; ++i) grid[i] = double(src[i]);
    grid = minmax_normalize(grid);
    for (i64 i = 0; i < gh * gw; ++i) ahat[i] += grid[i];
  }
  ahat = quantize_grid(ahat);

  auto [wh, ww] = window_cell_dims(cfg, image_h, image_w, gh, gw);
  auto picks = greedy_windows(std::move(ahat), wh, ww, cfg.num_rois);

  std::vector<RoiProposalT<T>> out;
  out.reserve(picks.size());
  for (size_t k = 0; k < picks.size(); ++k) {
    RoiProposalT<T> p;
    p.window = picks[k].first;
    p.criterion = picks[k].second;
    p.rank = int(k);
    p.rect = map_window_to_input(p.window, downsample, image_h, image_w, cfg);
    p.patch = crop_patch(image, p.rect);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace gmic
