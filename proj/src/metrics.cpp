#include "gmic/metrics.hpp"

#include <algorithm>
#include <numeric>

namespace gmic {

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw ShapeError("roc_auc: size mismatch");
  i64 np = 0, nn = 0;
  for (int l : labels) (l ? np : nn) += 1;
  if (np == 0 || nn == 0)
    throw NumericError("roc_auc undefined: need both classes present");

  std::vector<i64> order(scores.size());
  std::iota(order.begin(), order.end(), i64(0));
  std::sort(order.begin(), order.end(),
            [&](i64 a, i64 b) { return scores[size_t(a)] < scores[size_t(b)]; });

  i64 wins = 0, ties = 0, neg_below = 0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    i64 gp = 0, gn = 0;
    while (j < order.size() && scores[size_t(order[j])] == scores[size_t(order[i])]) {
      (labels[size_t(order[j])] ? gp : gn) += 1;
      ++j;
    }
    wins += gp * neg_below;
    ties += gp * gn;
    neg_below += gn;
    i = j;
  }
  return (double(wins) + 0.5 * double(ties)) / (double(np) * double(nn));
}

PrfScore continuous_prf(const TensorD& upsampled, const ImageU8& mask) {
  if (upsampled.rank() != 2 || upsampled.dim(0) != mask.h || upsampled.dim(1) != mask.w)
    throw ShapeError("continuous_prf: map and mask dims differ");
  double in_mask = 0.0, total = 0.0;
  i64 mask_px = 0;
  for (i64 i = 0; i < upsampled.numel(); ++i) {
    total += upsampled[i];
    if (mask.px[size_t(i)]) {
      in_mask += upsampled[i];
      ++mask_px;
    }
  }
  if (mask_px == 0) throw ShapeError("continuous_prf: empty mask");
  PrfScore s;
  s.precision = total > 0.0 ? in_mask / total : 0.0;
  s.recall = in_mask / double(mask_px);
  s.f1 = (s.precision + s.recall) > 0.0
             ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
             : 0.0;
  return s;
}

}  // namespace gmic
