#pragma once

#include <string>
#include <vector>

#include "gmic/conv.hpp"
#include "gmic/norm.hpp"
#include "gmic/ops.hpp"
#include "gmic/param_store.hpp"
#include "gmic/rng.hpp"

namespace gmic {

// Residual CNN trunk: stem conv + N stages of basic blocks. The first stage
// keeps resolution; each later stage halves it. Stride-2 layers use even
// kernels (6 for the stem, 4 in blocks, 2 for shortcuts) so output dims are
// exact for even inputs, keeping conv2d's integral-shape contract.
struct TrunkConfig {
  std::vector<int> stage_widths{16, 32, 64, 128};
  int blocks_per_stage = 2;
  int in_channels = 1;
  int stem_kernel = 6;
  int stem_stride = 2;
  bool stem_pool = false;  // 2x2/2 max pool after the stem

  i64 downsample() const {
    return i64(stem_stride) * (stem_pool ? 2 : 1) * (i64(1) << (stage_widths.size() - 1));
  }

  void validate() const {
    if (stage_widths.empty()) throw ConfigError("trunk: need at least one stage");
    for (int w : stage_widths)
      if (w <= 0) throw ConfigError("trunk: stage widths must be positive");
    if (blocks_per_stage < 1) throw ConfigError("trunk: blocks_per_stage must be >= 1");
    if (stem_stride < 1 || stem_kernel < stem_stride)
      throw ConfigError("trunk: bad stem kernel/stride");
    if ((stem_kernel - stem_stride) % 2 != 0)
      throw ConfigError("trunk: stem kernel and stride must have equal parity");
  }
};

namespace detail {

template <typename T>
void init_conv(ParamStoreT<T>& ps, const std::string& name, i64 cout, i64 cin, i64 k, Rng& rng) {
  auto& t = ps.create(name, {cout, cin, k, k});
  double std_dev = std::sqrt(2.0 / double(cin * k * k));
  for (i64 i = 0; i < t.numel(); ++i) t[i] = T(rng.normal() * std_dev);
}

template <typename T>
void init_bn(ParamStoreT<T>& ps, const std::string& prefix, i64 c) {
  auto& gamma = ps.create(prefix + ".gamma", {c});
  std::fill(gamma.v.begin(), gamma.v.end(), T(1));
  ps.create(prefix + ".beta", {c});
  ps.create(prefix + ".running_mean", {c}, /*trainable=*/false);
  auto& rv = ps.create(prefix + ".running_var", {c}, /*trainable=*/false);
  std::fill(rv.v.begin(), rv.v.end(), T(1));
}

template <typename T>
void init_linear(ParamStoreT<T>& ps, const std::string& name, i64 dout, i64 din, Rng& rng) {
  auto& t = ps.create(name, {dout, din});
  double std_dev = std::sqrt(2.0 / double(din));
  for (i64 i = 0; i < t.numel(); ++i) t[i] = T(rng.normal() * std_dev);
}

template <typename T>
VarT<T> bn_layer(Binder<T>& bind, VarT<T> x, const std::string& prefix, bool train) {
  return ops::batch_norm2d(x, bind(prefix + ".gamma"), bind(prefix + ".beta"),
                           &bind.store.tensor(prefix + ".running_mean"),
                           &bind.store.tensor(prefix + ".running_var"), train);
}

}  // namespace detail

template <typename T>
void init_trunk_params(ParamStoreT<T>& ps, const TrunkConfig& cfg, const std::string& prefix,
                       Rng& rng) {
  cfg.validate();
  detail::init_conv(ps, prefix + ".stem.conv", cfg.stage_widths[0], cfg.in_channels,
                    cfg.stem_kernel, rng);
  detail::init_bn<T>(ps, prefix + ".stem.bn", cfg.stage_widths[0]);
  int prev = cfg.stage_widths[0];
  for (size_t s = 0; s < cfg.stage_widths.size(); ++s) {
    int width = cfg.stage_widths[s];
    for (int b = 0; b < cfg.blocks_per_stage; ++b) {
      std::string bp = prefix + ".s" + std::to_string(s) + ".b" + std::to_string(b);
      bool down = (s > 0 && b == 0);
      detail::init_conv(ps, bp + ".conv1", width, prev, down ? 4 : 3, rng);
      detail::init_bn<T>(ps, bp + ".bn1", width);
      detail::init_conv(ps, bp + ".conv2", width, width, 3, rng);
      detail::init_bn<T>(ps, bp + ".bn2", width);
      if (down) {
        detail::init_conv(ps, bp + ".down.conv", width, prev, 2, rng);
        detail::init_bn<T>(ps, bp + ".down.bn", width);
      }
      prev = width;
    }
  }
}

template <typename T>
VarT<T> trunk_forward(Binder<T>& bind, VarT<T> x, const TrunkConfig& cfg,
                      const std::string& prefix, bool train) {
  const std::vector<i64> shape = x.value().shape;  // ops below may reallocate nodes
  if (shape.size() != 4 || shape[1] != cfg.in_channels)
    throw ShapeError("trunk: expected [N," + std::to_string(cfg.in_channels) + ",H,W], got " +
                     x.value().shape_str());
  i64 s = cfg.downsample();
  if (shape[2] % s != 0 || shape[3] % s != 0)
    throw ShapeError("trunk: input dims " + x.value().shape_str() + " not divisible by " +
                     std::to_string(s));
  VarT<T> h = ops::conv2d(x, bind(prefix + ".stem.conv"), cfg.stem_stride,
                          (cfg.stem_kernel - cfg.stem_stride) / 2);
  h = detail::bn_layer(bind, h, prefix + ".stem.bn", train);
  h = ops::relu(h);
  if (cfg.stem_pool) h = ops::max_pool2d(h, 2, 2);
  for (size_t st = 0; st < cfg.stage_widths.size(); ++st) {
    for (int b = 0; b < cfg.blocks_per_stage; ++b) {
      std::string bp = prefix + ".s" + std::to_string(st) + ".b" + std::to_string(b);
      bool down = (st > 0 && b == 0);
      VarT<T> y = ops::conv2d(h, bind(bp + ".conv1"), down ? 2 : 1, 1);
      y = detail::bn_layer(bind, y, bp + ".bn1", train);
      y = ops::relu(y);
      y = ops::conv2d(y, bind(bp + ".conv2"), 1, 1);
      y = detail::bn_layer(bind, y, bp + ".bn2", train);
      VarT<T> shortcut = h;
      if (down) {
        shortcut = ops::conv2d(h, bind(bp + ".down.conv"), 2, 0);
        shortcut = detail::bn_layer(bind, shortcut, bp + ".down.bn", train);
      }
      h = ops::relu(ops::add(y, shortcut));
    }
  }
  return h;
}

}  // namespace gmic
