#pragma once

#include <cmath>

#include "gmic/ops.hpp"

namespace gmic {

// Top-t% pooling: the mean of the m largest saliency cells. t = 100 is
// global average pooling, m = 1 is global max pooling.
struct PoolingConfig {
  double t_percent = 2.0;  // in (0, 100]

  void validate() const {
    if (!(t_percent > 0.0) || t_percent > 100.0)
      throw ConfigError("pooling: t must be in (0, 100]");
  }

  i64 cells(i64 grid_cells) const {
    i64 m = i64(std::ceil(t_percent / 100.0 * double(grid_cells)));
    return std::max<i64>(1, std::min(m, grid_cells));
  }
};

struct LossConfig {
  double lambda = 1e-4;  // regularizer weight, >= 0
  double beta = 2.0;     // regularizer exponent, > 0

  void validate() const {
    if (lambda < 0.0) throw ConfigError("loss: lambda must be nonnegative");
    if (!(beta > 0.0)) throw ConfigError("loss: beta must be positive");
  }
};

template <typename T>
VarT<T> f_agg(VarT<T> grid, const PoolingConfig& cfg) {
  return ops::top_fraction_pool(grid, cfg.cells(grid.value().numel()));
}

template <typename T>
VarT<T> l_reg(VarT<T> grid, T beta) {
  return ops::power_sum(grid, beta);
}

// Per-image composite objective:
//   sum_c BCE(y_c, yloc_c) + BCE(y_c, ymil_c) + lambda * sum_ij |A_c|^beta
// y_loc/y_mil are per-class scalar vars; class_grids are the [h,w] slices of A.
template <typename T>
VarT<T> total_loss(const std::vector<T>& labels, const std::vector<VarT<T>>& y_loc,
                   const std::vector<VarT<T>>& y_mil, const std::vector<VarT<T>>& class_grids,
                   const LossConfig& cfg) {
  size_t c = labels.size();
  if (y_loc.size() != c || y_mil.size() != c || class_grids.size() != c)
    throw ShapeError("total_loss: per-class arity mismatch");
  VarT<T> loss;
  for (size_t i = 0; i < c; ++i) {
    VarT<T> term = ops::add(ops::bce(labels[i], y_loc[i]), ops::bce(labels[i], y_mil[i]));
    if (cfg.lambda > 0.0)
      term = ops::add(term, ops::scale(l_reg(class_grids[i], T(cfg.beta)), T(cfg.lambda)));
    loss = i == 0 ? term : ops::add(loss, term);
  }
  return loss;
}

// Fused inference: elementwise mean of the two prediction paths.
inline std::vector<double> fuse(const std::vector<double>& y_loc,
                                const std::vector<double>& y_mil) {
  if (y_loc.size() != y_mil.size()) throw ShapeError("fuse: arity mismatch");
  std::vector<double> out(y_loc.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * (y_loc[i] + y_mil[i]);
  return out;
}

}  // namespace gmic
