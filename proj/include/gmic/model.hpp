#pragma once

#include <array>
#include <optional>
#include <vector>

#include "gmic/aggregation.hpp"
#include "gmic/backbone.hpp"
#include "gmic/mil.hpp"
#include "gmic/roi.hpp"
#include "gmic/rng.hpp"

namespace gmic {

struct ModelConfig {
  BackboneConfig backbone;
  MilConfig mil;
  RetrievalConfig retrieval;
  PoolingConfig pooling;
  LossConfig loss;

  int num_classes() const { return backbone.num_classes; }

  void validate() const {
    backbone.trunk.validate();
    mil.trunk.validate();
    retrieval.validate();
    pooling.validate();
    loss.validate();
    if (backbone.num_classes != mil.num_classes)
      throw ConfigError("model: class count mismatch between backbone and MIL head");
  }
};

template <typename T>
void init_model_params(ParamStoreT<T>& ps, const ModelConfig& cfg, u64 seed) {
  cfg.validate();
  Rng root(seed);
  Rng backbone_rng = root.fork(1);
  Rng mil_rng = root.fork(2);
  init_backbone_params(ps, cfg.backbone, backbone_rng);
  init_mil_params(ps, cfg.mil, mil_rng);
}

enum class AttentionMode { gated, uniform };

// Graph handles for one image within a batched forward pass.
template <typename T>
struct ImageGraph {
  std::vector<VarT<T>> class_grids;  // [h,w] saliency slice per class
  std::vector<VarT<T>> y_loc;        // scalar per class
  std::vector<VarT<T>> y_mil;        // scalar per class
  VarT<T> alpha;                     // [K,1]
  std::vector<RoiProposalT<T>> rois;
};

template <typename T>
struct GmicForward {
  VarT<T> saliency;    // [B,C,h,w]
  VarT<T> embeddings;  // [B*K, L]
  std::vector<ImageGraph<T>> images;
};

// Full differentiable forward for a batch of images. Patch retrieval runs on
// saliency values and re-enters the graph as constants, so no gradient can
// reach the backbone through the MIL path.
template <typename T>
GmicForward<T> gmic_forward(Binder<T>& bind, const std::vector<TensorT<T>>& images,
                            const ModelConfig& cfg, bool train,
                            AttentionMode attention = AttentionMode::gated,
                            const std::vector<std::vector<RoiProposalT<T>>>* roi_override =
                                nullptr) {
  if (images.empty()) throw ShapeError("gmic_forward: empty batch");
  i64 b = i64(images.size());
  i64 h = images[0].dim(images[0].rank() - 2);
  i64 w = images[0].dim(images[0].rank() - 1);
  int classes = cfg.num_classes();
  int k = cfg.retrieval.num_rois;

  TensorT<T> batch({b, 1, h, w});
  for (i64 i = 0; i < b; ++i) {
    if (images[size_t(i)].numel() != h * w)
      throw ShapeError("gmic_forward: images must share dimensions");
    std::copy(images[size_t(i)].v.begin(), images[size_t(i)].v.end(),
              batch.data() + i * h * w);
  }
  VarT<T> x = bind.tape.constant(std::move(batch));
  VarT<T> saliency = backbone_saliency(bind, x, cfg.backbone, train);
  // a_val stays valid only while no further ops are recorded; all reads
  // happen in the retrieval loop below, before the graph grows again
  const TensorT<T>& a_val = saliency.value();
  i64 gh = a_val.dim(2), gw = a_val.dim(3);

  GmicForward<T> out;
  out.saliency = saliency;
  out.images.resize(size_t(b));

  // retrieval on values (not differentiated)
  for (i64 i = 0; i < b; ++i) {
    auto& img = out.images[size_t(i)];
    if (roi_override) {
      img.rois = (*roi_override)[size_t(i)];
      if (i64(img.rois.size()) != k) throw ShapeError("gmic_forward: roi override arity");
    } else {
      TensorT<T> slice({i64(classes), gh, gw});
      std::copy(a_val.data() + i * classes * gh * gw, a_val.data() + (i + 1) * classes * gh * gw,
                slice.data());
      img.rois = retrieve_rois(images[size_t(i)], slice, cfg.retrieval, cfg.backbone.downsample());
    }
  }

  // localization predictions
  for (i64 i = 0; i < b; ++i) {
    auto& img = out.images[size_t(i)];
    for (int c = 0; c < classes; ++c) {
      VarT<T> grid = ops::select_grid(saliency, i, c);
      img.class_grids.push_back(grid);
      img.y_loc.push_back(f_agg(grid, cfg.pooling));
    }
  }

  // MIL path over all patches at once
  TensorT<T> patch_batch({b * k, 1, cfg.retrieval.patch_h, cfg.retrieval.patch_w});
  i64 patch_elems = cfg.retrieval.patch_h * cfg.retrieval.patch_w;
  for (i64 i = 0; i < b; ++i)
    for (int p = 0; p < k; ++p)
      std::copy(out.images[size_t(i)].rois[size_t(p)].patch.v.begin(),
                out.images[size_t(i)].rois[size_t(p)].patch.v.end(),
                patch_batch.data() + (i * k + p) * patch_elems);
  VarT<T> patches = bind.tape.constant(std::move(patch_batch));
  VarT<T> embeddings = encode_patches(bind, patches, cfg.mil, train);
  out.embeddings = embeddings;

  for (i64 i = 0; i < b; ++i) {
    auto& img = out.images[size_t(i)];
    VarT<T> bag = ops::slice_rows(embeddings, i * k, (i + 1) * k);
    auto [alpha, z] = attention == AttentionMode::gated ? gated_attention(bind, bag, cfg.mil)
                                                        : uniform_attention(bag);
    img.alpha = alpha;
    VarT<T> probs = mil_predict(bind, z);  // [1,C]
    for (int c = 0; c < classes; ++c) img.y_mil.push_back(ops::select_element(probs, c));
  }
  return out;
}

// Mean over the batch of the per-image composite losses.
template <typename T>
VarT<T> gmic_batch_loss(const GmicForward<T>& fwd,
                        const std::vector<std::vector<T>>& labels, const ModelConfig& cfg) {
  if (labels.size() != fwd.images.size()) throw ShapeError("gmic_batch_loss: label arity");
  VarT<T> total;
  for (size_t i = 0; i < fwd.images.size(); ++i) {
    const auto& img = fwd.images[i];
    VarT<T> li = total_loss(labels[i], img.y_loc, img.y_mil, img.class_grids, cfg.loss);
    total = i == 0 ? li : ops::add(total, li);
  }
  return ops::scale(total, T(1) / T(fwd.images.size()));
}

// ---------------------------------------------------------------------------
// value-level inference
// ---------------------------------------------------------------------------

struct Prediction {
  std::vector<double> y_loc, y_mil, y;  // y = fuse(y_loc, y_mil)
  std::vector<double> y_mil_noattn;     // uniform-attention MIL path
  std::vector<double> y_mil_random;     // MIL on random patches (when requested)
  std::vector<double> alpha;
  std::vector<SmWindow> roi_windows;
  std::vector<InputRect> roi_rects;
  std::vector<InputRect> random_rects;
  std::vector<double> roi_criteria;
};

template <typename T>
struct BatchPrediction {
  std::vector<TensorT<T>> saliency;  // per image [C,h,w]
  std::vector<Prediction> preds;
};

struct PredictOptions {
  bool include_random = false;  // also run the MIL path on random patches
  u64 random_seed = 0;
};

namespace detail {

template <typename T>
std::vector<double> row_values(const TensorT<T>& t) {
  std::vector<double> out(size_t(t.numel()));
  for (i64 i = 0; i < t.numel(); ++i) out[size_t(i)] = double(t[i]);
  return out;
}

}  // namespace detail

// Eval-mode forward of one image, producing all prediction paths. Images are
// processed one at a time (eval batch norm is per-image independent), keeping
// memory flat.
template <typename T>
BatchPrediction<T> batch_predict(ParamStoreT<T>& store, const ModelConfig& cfg,
                                 const std::vector<TensorT<T>>& images,
                                 const PredictOptions& opts = {}) {
  BatchPrediction<T> out;
  int classes = cfg.num_classes();
  int k = cfg.retrieval.num_rois;
  for (size_t idx = 0; idx < images.size(); ++idx) {
    TapeT<T> tape;
    Binder<T> bind{tape, store, /*with_grad=*/false};
    std::vector<TensorT<T>> single{images[idx]};
    GmicForward<T> fwd = gmic_forward(bind, single, cfg, /*train=*/false);

    Prediction p;
    const auto& img = fwd.images[0];
    for (int c = 0; c < classes; ++c) {
      p.y_loc.push_back(double(img.y_loc[size_t(c)].value()[0]));
      p.y_mil.push_back(double(img.y_mil[size_t(c)].value()[0]));
    }
    p.y = fuse(p.y_loc, p.y_mil);
    p.alpha = detail::row_values(img.alpha.value());
    for (const auto& r : img.rois) {
      p.roi_windows.push_back(r.window);
      p.roi_rects.push_back(r.rect);
      p.roi_criteria.push_back(r.criterion);
    }

    // uniform-attention branch reuses the already built graph's embeddings by
    // re-running attention on the same patches
    {
      TensorT<T> patch_batch({i64(k), 1, cfg.retrieval.patch_h, cfg.retrieval.patch_w});
      i64 pe = cfg.retrieval.patch_h * cfg.retrieval.patch_w;
      for (int j = 0; j < k; ++j)
        std::copy(img.rois[size_t(j)].patch.v.begin(), img.rois[size_t(j)].patch.v.end(),
                  patch_batch.data() + j * pe);
      TapeT<T> t2;
      Binder<T> b2{t2, store, /*with_grad=*/false};
      VarT<T> patches = t2.constant(std::move(patch_batch));
      VarT<T> emb = encode_patches(b2, patches, cfg.mil, /*train=*/false);
      auto [alpha_u, z_u] = uniform_attention(emb);
      VarT<T> probs = mil_predict(b2, z_u);
      p.y_mil_noattn = detail::row_values(probs.value());
    }

    if (opts.include_random) {
      Rng rng = Rng(opts.random_seed).fork(u64(idx));
      i64 ih = images[idx].dim(images[idx].rank() - 2);
      i64 iw = images[idx].dim(images[idx].rank() - 1);
      TensorT<T> patch_batch({i64(k), 1, cfg.retrieval.patch_h, cfg.retrieval.patch_w});
      i64 pe = cfg.retrieval.patch_h * cfg.retrieval.patch_w;
      for (int j = 0; j < k; ++j) {
        InputRect r;
        r.h = cfg.retrieval.patch_h;
        r.w = cfg.retrieval.patch_w;
        r.y0 = rng.uniform_int(ih - r.h + 1);
        r.x0 = rng.uniform_int(iw - r.w + 1);
        p.random_rects.push_back(r);
        TensorT<T> patch = crop_patch(images[idx], r);
        std::copy(patch.v.begin(), patch.v.end(), patch_batch.data() + j * pe);
      }
      TapeT<T> t3;
      Binder<T> b3{t3, store, /*with_grad=*/false};
      VarT<T> patches = t3.constant(std::move(patch_batch));
      VarT<T> emb = encode_patches(b3, patches, cfg.mil, /*train=*/false);
      auto [alpha_r, z_r] = gated_attention(b3, emb, cfg.mil);
      VarT<T> probs = mil_predict(b3, z_r);
      p.y_mil_random = detail::row_values(probs.value());
    }

    const TensorT<T>& a_val = fwd.saliency.value();
    i64 gh = a_val.dim(2), gw = a_val.dim(3);
    TensorT<T> a_slice({i64(classes), gh, gw});
    std::copy(a_val.data(), a_val.data() + classes * gh * gw, a_slice.data());
    out.saliency.push_back(std::move(a_slice));
    out.preds.push_back(std::move(p));
  }
  return out;
}

}  // namespace gmic
