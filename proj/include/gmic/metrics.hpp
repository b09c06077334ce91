#pragma once

#include <vector>

#include "gmic/png_io.hpp"
#include "gmic/tensor.hpp"

namespace gmic {

// Breast-level AUC via the Mann-Whitney statistic, ties counted one half.
// Win/tie counts are integers, so the result is exactly (wins + ties/2)/(np*nn).
// Throws NumericError when only one class is present.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct PrfScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Continuous precision/recall against a binary mask:
//   P = sum_{mask} A / sum A   (0 when the map is all zero)
//   R = sum_{mask} A / |mask|
//   F1 = 2PR/(P+R), 0 when P+R = 0.
// The mask must be nonempty.
PrfScore continuous_prf(const TensorD& upsampled, const ImageU8& mask);

// Nearest-neighbour upsampling with floor index mapping: out(y,x) = grid(y*h/H, x*w/W).
template <typename T>
TensorT<T> upsample_nearest(const TensorT<T>& grid, i64 target_h, i64 target_w) {
  if (grid.rank() != 2) throw ShapeError("upsample_nearest: expected [h,w] grid");
  i64 h = grid.dim(0), w = grid.dim(1);
  TensorT<T> out({target_h, target_w});
  for (i64 y = 0; y < target_h; ++y) {
    i64 sy = y * h / target_h;
    for (i64 x = 0; x < target_w; ++x) out[y * target_w + x] = grid[sy * w + x * w / target_w];
  }
  return out;
}

}  // namespace gmic
