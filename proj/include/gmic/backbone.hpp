#pragma once

#include <string>

#include "gmic/trunk.hpp"

namespace gmic {

// Localization network: residual trunk without pooling/FC, followed by a
// 1x1-conv + sigmoid saliency head over the final feature maps.
struct BackboneConfig {
  TrunkConfig trunk;
  int num_classes = 2;

  i64 downsample() const { return trunk.downsample(); }
};

inline constexpr double kSaliencyBiasInit = -2.0;  // initial maps sit near 0.12

template <typename T>
void init_backbone_params(ParamStoreT<T>& ps, const BackboneConfig& cfg, Rng& rng) {
  init_trunk_params(ps, cfg.trunk, "backbone", rng);
  detail::init_conv(ps, "head.conv", cfg.num_classes, cfg.trunk.stage_widths.back(), 1, rng);
  auto& b = ps.create("head.bias", {cfg.num_classes});
  std::fill(b.v.begin(), b.v.end(), T(kSaliencyBiasInit));
}

template <typename T>
VarT<T> backbone_features(Binder<T>& bind, VarT<T> x, const BackboneConfig& cfg, bool train) {
  return trunk_forward(bind, x, cfg.trunk, "backbone", train);
}

// Saliency map A in (0,1): [N, classes, h, w]
template <typename T>
VarT<T> saliency_head(Binder<T>& bind, VarT<T> features) {
  VarT<T> logits = ops::conv2d(features, bind("head.conv"), 1, 0);
  return ops::sigmoid(ops::bias_channel(logits, bind("head.bias")));
}

template <typename T>
VarT<T> backbone_saliency(Binder<T>& bind, VarT<T> x, const BackboneConfig& cfg, bool train) {
  return saliency_head(bind, backbone_features(bind, x, cfg, train));
}

}  // namespace gmic
