#include <doctest.h>

#include "gmic/backbone.hpp"
#include "oracles.hpp"

using namespace gmic;

TEST_SUITE("backbone") {

TEST_CASE("shape law: output grid is input over the downsample factor") {
  BackboneConfig cfg;
  cfg.trunk.stage_widths = {4, 8};
  cfg.trunk.blocks_per_stage = 1;
  CHECK(cfg.downsample() == 4);
  ParamStoreT<double> ps;
  Rng rng(1);
  init_backbone_params(ps, cfg, rng);

  for (i64 dim : {32, 64}) {
    TapeD tape;
    Binder<double> bind{tape, ps, false};
    TensorD x({1, 1, dim, dim});
    Rng ir{u64(dim)};
    for (auto& v : x.v) v = ir.normal();
    VarD a = backbone_saliency(bind, tape.constant(x), cfg, false);
    CHECK(a.value().shape == std::vector<i64>{1, 2, dim / 4, dim / 4});
  }
}

TEST_CASE("indivisible input dims raise a shape error") {
  BackboneConfig cfg;
  cfg.trunk.stage_widths = {4, 8};
  cfg.trunk.blocks_per_stage = 1;
  ParamStoreT<double> ps;
  Rng rng(2);
  init_backbone_params(ps, cfg, rng);
  TapeD tape;
  Binder<double> bind{tape, ps, false};
  VarD x = tape.constant(TensorD::zeros({1, 1, 30, 30}));
  CHECK_THROWS_AS(backbone_features(bind, x, cfg, false), ShapeError);
}

TEST_CASE("zero input produces finite saliency everywhere") {
  BackboneConfig cfg;
  cfg.trunk.stage_widths = {4, 8};
  cfg.trunk.blocks_per_stage = 1;
  ParamStoreT<double> ps;
  Rng rng(3);
  init_backbone_params(ps, cfg, rng);
  TapeD tape;
  Binder<double> bind{tape, ps, false};
  VarD a = backbone_saliency(bind, tape.constant(TensorD::zeros({1, 1, 32, 32})), cfg, true);
  CHECK(a.value().all_finite());
}

TEST_CASE("saliency head codomain and degenerate parameter cases") {
  BackboneConfig cfg;
  cfg.trunk.stage_widths = {4, 8};
  cfg.trunk.blocks_per_stage = 1;
  ParamStoreT<double> ps;
  Rng rng(4);
  init_backbone_params(ps, cfg, rng);

  // zero weights, zero bias: A uniformly 0.5
  auto& w = ps.tensor("head.conv");
  std::fill(w.v.begin(), w.v.end(), 0.0);
  auto& b = ps.tensor("head.bias");
  std::fill(b.v.begin(), b.v.end(), 0.0);
  {
    TapeD tape;
    Binder<double> bind{tape, ps, false};
    TensorD x({1, 1, 32, 32});
    Rng ir(9);
    for (auto& v : x.v) v = ir.normal();
    VarD a = backbone_saliency(bind, tape.constant(x), cfg, false);
    for (i64 i = 0; i < a.value().numel(); ++i) CHECK(a.value()[i] == doctest::Approx(0.5));
  }

  // very negative bias: A ~ 0 everywhere
  std::fill(b.v.begin(), b.v.end(), -20.0);
  {
    TapeD tape;
    Binder<double> bind{tape, ps, false};
    TensorD x({1, 1, 32, 32});
    Rng ir(10);
    for (auto& v : x.v) v = ir.normal();
    VarD a = backbone_saliency(bind, tape.constant(x), cfg, false);
    for (i64 i = 0; i < a.value().numel(); ++i) CHECK(a.value()[i] < 1e-6);
  }

  // random params: strictly inside (0,1), shape [N,|C|,h,w]
  Rng rr(11);
  for (auto& v : w.v) v = rr.normal();
  for (auto& v : b.v) v = rr.normal();
  {
    TapeD tape;
    Binder<double> bind{tape, ps, false};
    TensorD x({2, 1, 32, 32});
    for (auto& v : x.v) v = rr.normal();
    VarD a = backbone_saliency(bind, tape.constant(x), cfg, false);
    CHECK(a.value().shape == std::vector<i64>{2, 2, 8, 8});
    for (i64 i = 0; i < a.value().numel(); ++i) {
      CHECK(a.value()[i] > 0.0);
      CHECK(a.value()[i] < 1.0);
    }
  }
}

TEST_CASE("gradient of summed features w.r.t. input matches finite differences") {
  BackboneConfig cfg;
  cfg.trunk.stage_widths = {3, 5};
  cfg.trunk.blocks_per_stage = 1;
  ParamStoreT<double> ps;
  Rng rng(5);
  init_backbone_params(ps, cfg, rng);
  TensorD x({1, 1, 32, 32});
  for (auto& v : x.v) v = rng.normal();

  auto loss_fn = [&](const std::vector<TensorD>& in) {
    ParamStoreT<double> local = ps;
    TapeD tape;
    Binder<double> bind{tape, local, false};
    VarD f = backbone_features(bind, tape.constant(in[0]), cfg, true);
    return ops::sum_all(f).value()[0];
  };

  ParamStoreT<double> local = ps;
  TapeD tape;
  Binder<double> bind{tape, local, true};
  VarD xv = tape.leaf(x, true);
  VarD loss = ops::sum_all(backbone_features(bind, xv, cfg, true));
  tape.backward(loss);
  auto res =
      oracle::finite_difference_check({x}, loss_fn, {tape.grad(xv.id)}, /*max_coords=*/64);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("translation by the downsample factor shifts interior saliency cells") {
  BackboneConfig cfg;
  cfg.trunk.stage_widths = {4, 8};
  cfg.trunk.blocks_per_stage = 1;
  i64 s = cfg.downsample();  // 4
  ParamStoreT<double> ps;
  Rng rng(6);
  init_backbone_params(ps, cfg, rng);

  i64 dim = 64;
  TensorD canvas({dim + s, dim + s});
  for (auto& v : canvas.v) v = rng.normal();
  auto crop = [&](i64 oy, i64 ox) {
    TensorD out({1, 1, dim, dim});
    for (i64 y = 0; y < dim; ++y)
      for (i64 x = 0; x < dim; ++x) out[y * dim + x] = canvas[(y + oy) * (dim + s) + x + ox];
    return out;
  };

  auto saliency_of = [&](const TensorD& img) {
    TapeD tape;
    Binder<double> bind{tape, ps, false};
    return backbone_saliency(bind, tape.constant(img), cfg, false).value();
  };
  TensorD a0 = saliency_of(crop(0, 0));
  TensorD a1 = saliency_of(crop(s, s));

  // receptive field of the small config is ~21 px -> 6 cells of margin is safe
  i64 cells = dim / s, margin = 6;
  for (i64 c = 0; c < 2; ++c)
    for (i64 i = margin; i < cells - margin; ++i)
      for (i64 j = margin; j < cells - margin; ++j) {
        double shifted = a1[(c * cells + i - 1) * cells + j - 1];
        double base = a0[(c * cells + i) * cells + j];
        CHECK(std::abs(shifted - base) < 1e-4);
      }
}

}  // TEST_SUITE
