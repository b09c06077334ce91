#include <doctest.h>

#include "gmic/mil.hpp"
#include "oracles.hpp"

using namespace gmic;

namespace {

MilConfig tiny_mil() {
  MilConfig cfg;
  cfg.trunk.stage_widths = {4, 8};
  cfg.trunk.blocks_per_stage = 1;
  cfg.trunk.stem_pool = false;
  cfg.embedding_dim = 8;
  cfg.attention_dim = 8;
  return cfg;
}

TensorD random_embeddings(i64 k, i64 l, u64 seed) {
  Rng rng(seed);
  TensorD e({k, l});
  for (auto& v : e.v) v = rng.normal();
  return e;
}

}  // namespace

TEST_SUITE("milmodule") {

TEST_CASE("default embedding length is 128") {
  MilConfig cfg;  // default trunk downsamples by 32
  ParamStoreT<double> ps;
  Rng rng(1);
  init_mil_params(ps, cfg, rng);
  TapeD tape;
  Binder<double> bind{tape, ps, false};
  TensorD patch({1, 1, 64, 64});
  Rng ir(2);
  for (auto& v : patch.v) v = ir.normal();
  VarD emb = encode_patches(bind, tape.constant(patch), cfg, false);
  CHECK(emb.value().shape == std::vector<i64>{1, 128});
}

TEST_CASE("identical patches give identical embeddings") {
  MilConfig cfg = tiny_mil();
  ParamStoreT<double> ps;
  Rng rng(3);
  init_mil_params(ps, cfg, rng);
  TensorD patch({1, 1, 16, 16});
  Rng ir(4);
  for (auto& v : patch.v) v = ir.normal();
  TensorD pair({2, 1, 16, 16});
  std::copy(patch.v.begin(), patch.v.end(), pair.data());
  std::copy(patch.v.begin(), patch.v.end(), pair.data() + 256);
  TapeD tape;
  Binder<double> bind{tape, ps, false};
  VarD emb = encode_patches(bind, tape.constant(pair), cfg, false);
  for (i64 i = 0; i < 8; ++i) CHECK(emb.value()[i] == emb.value()[8 + i]);
}

TEST_CASE("encoder gradient matches finite differences on toy patches") {
  MilConfig cfg = tiny_mil();
  ParamStoreT<double> ps;
  Rng rng(5);
  init_mil_params(ps, cfg, rng);
  TensorD patch({1, 1, 32, 32});
  for (auto& v : patch.v) v = rng.normal();

  auto loss_fn = [&](const std::vector<TensorD>& in) {
    ParamStoreT<double> local = ps;
    TapeD t;
    Binder<double> bind{t, local, false};
    return ops::sum_all(encode_patches(bind, t.constant(in[0]), cfg, true)).value()[0];
  };
  ParamStoreT<double> local = ps;
  TapeD tape;
  Binder<double> bind{tape, local, true};
  VarD xv = tape.leaf(patch, true);
  VarD loss = ops::sum_all(encode_patches(bind, xv, cfg, true));
  tape.backward(loss);
  auto res = oracle::finite_difference_check({patch}, loss_fn, {tape.grad(xv.id)}, 64);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("gated attention on a singleton bag") {
  MilConfig cfg = tiny_mil();
  ParamStoreT<double> ps;
  Rng rng(6);
  init_mil_params(ps, cfg, rng);
  TensorD emb = random_embeddings(1, 8, 7);
  TapeD tape;
  Binder<double> bind{tape, ps, false};
  auto [alpha, z] = gated_attention(bind, tape.constant(emb), cfg);
  CHECK(alpha.value().numel() == 1);
  CHECK(alpha.value()[0] == doctest::Approx(1.0));
  for (i64 i = 0; i < 8; ++i) CHECK(z.value()[i] == doctest::Approx(emb[i]));
}

TEST_CASE("two identical embeddings share attention equally") {
  MilConfig cfg = tiny_mil();
  ParamStoreT<double> ps;
  Rng rng(8);
  init_mil_params(ps, cfg, rng);
  TensorD one = random_embeddings(1, 8, 9);
  TensorD emb({2, 8});
  std::copy(one.v.begin(), one.v.end(), emb.data());
  std::copy(one.v.begin(), one.v.end(), emb.data() + 8);
  TapeD tape;
  Binder<double> bind{tape, ps, false};
  auto [alpha, z] = gated_attention(bind, tape.constant(emb), cfg);
  CHECK(alpha.value()[0] == doctest::Approx(0.5));
  CHECK(alpha.value()[1] == doctest::Approx(0.5));
}

TEST_CASE("attention weights match the scalar-loop oracle") {
  MilConfig cfg = tiny_mil();
  ParamStoreT<double> ps;
  Rng rng(10);
  init_mil_params(ps, cfg, rng);
  for (u64 seed = 0; seed < 5; ++seed) {
    i64 k = 2 + i64(seed);
    TensorD emb = random_embeddings(k, 8, 100 + seed);
    TapeD tape;
    Binder<double> bind{tape, ps, false};
    auto [alpha, z] = gated_attention(bind, tape.constant(emb), cfg);

    const auto& V = ps.tensor("mil.attn.V");
    const auto& U = ps.tensor("mil.attn.U");
    const auto& w = ps.tensor("mil.attn.w");
    std::vector<std::vector<double>> hv(static_cast<size_t>(k)), Vv(8), Uv(8);
    for (i64 i = 0; i < k; ++i)
      hv[size_t(i)] = {emb.v.begin() + i * 8, emb.v.begin() + (i + 1) * 8};
    for (i64 d = 0; d < 8; ++d) {
      Vv[size_t(d)] = {V.v.begin() + d * 8, V.v.begin() + (d + 1) * 8};
      Uv[size_t(d)] = {U.v.begin() + d * 8, U.v.begin() + (d + 1) * 8};
    }
    auto expect = oracle::gated_attention_scalar(hv, Vv, Uv, w.v);
    double sum = 0.0;
    for (i64 i = 0; i < k; ++i) {
      CHECK(std::abs(alpha.value()[i] - expect[size_t(i)]) < 1e-6);
      sum += alpha.value()[i];
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
}

TEST_CASE("permuting the bag permutes attention and leaves z unchanged") {
  MilConfig cfg = tiny_mil();
  ParamStoreT<double> ps;
  Rng rng(12);
  init_mil_params(ps, cfg, rng);
  TensorD emb = random_embeddings(5, 8, 13);
  std::vector<i64> perm{3, 0, 4, 1, 2};
  TensorD emb_p({5, 8});
  for (i64 i = 0; i < 5; ++i)
    std::copy(emb.v.begin() + perm[size_t(i)] * 8, emb.v.begin() + (perm[size_t(i)] + 1) * 8,
              emb_p.data() + i * 8);

  TapeD t1, t2;
  Binder<double> b1{t1, ps, false}, b2{t2, ps, false};
  auto [a1, z1] = gated_attention(b1, t1.constant(emb), cfg);
  auto [a2, z2] = gated_attention(b2, t2.constant(emb_p), cfg);
  VarD y1 = mil_predict(b1, z1), y2 = mil_predict(b2, z2);
  for (i64 i = 0; i < 5; ++i)
    CHECK(std::abs(a2.value()[i] - a1.value()[perm[size_t(i)]]) < 1e-6);
  for (i64 i = 0; i < 8; ++i) CHECK(std::abs(z1.value()[i] - z2.value()[i]) < 1e-6);
  for (i64 i = 0; i < 2; ++i) CHECK(std::abs(y1.value()[i] - y2.value()[i]) < 1e-6);
}

TEST_CASE("z lies in the coordinatewise convex hull of the embeddings") {
  MilConfig cfg = tiny_mil();
  ParamStoreT<double> ps;
  Rng rng(14);
  init_mil_params(ps, cfg, rng);
  for (u64 seed = 0; seed < 10; ++seed) {
    i64 k = 1 + i64(seed % 8);
    TensorD emb = random_embeddings(k, 8, 200 + seed);
    TapeD tape;
    Binder<double> bind{tape, ps, false};
    auto [alpha, z] = gated_attention(bind, tape.constant(emb), cfg);
    for (i64 j = 0; j < 8; ++j) {
      double lo = emb[j], hi = emb[j];
      for (i64 i = 1; i < k; ++i) {
        lo = std::min(lo, emb[i * 8 + j]);
        hi = std::max(hi, emb[i * 8 + j]);
      }
      CHECK(z.value()[j] >= lo - 1e-9);
      CHECK(z.value()[j] <= hi + 1e-9);
    }
  }
}

TEST_CASE("mil_predict degenerate cases") {
  MilConfig cfg = tiny_mil();
  ParamStoreT<double> ps;
  Rng rng(15);
  init_mil_params(ps, cfg, rng);

  {  // zero head weights
    ParamStoreT<double> zs = ps;
    auto& w = zs.tensor("mil.head.w");
    std::fill(w.v.begin(), w.v.end(), 0.0);
    TapeD tape;
    Binder<double> bind{tape, zs, false};
    TensorD z({1, 8});
    Rng ir(16);
    for (auto& v : z.v) v = ir.normal();
    VarD y = mil_predict(bind, tape.constant(z));
    CHECK(y.value()[0] == doctest::Approx(0.5));
    CHECK(y.value()[1] == doctest::Approx(0.5));
  }
  {  // zero z (no bias in the head)
    TapeD tape;
    Binder<double> bind{tape, ps, false};
    VarD y = mil_predict(bind, tape.constant(TensorD::zeros({1, 8})));
    CHECK(y.value()[0] == doctest::Approx(0.5));
    CHECK(y.value()[1] == doctest::Approx(0.5));
  }
  {  // strict codomain
    TapeD tape;
    Binder<double> bind{tape, ps, false};
    TensorD z({1, 8});
    Rng ir(17);
    for (auto& v : z.v) v = ir.normal() * 3;
    VarD y = mil_predict(bind, tape.constant(z));
    for (i64 i = 0; i < 2; ++i) {
      CHECK(y.value()[i] > 0.0);
      CHECK(y.value()[i] < 1.0);
    }
  }
}

TEST_CASE("uniform attention averages the bag") {
  TensorD emb = random_embeddings(4, 8, 18);
  TapeD tape;
  auto [alpha, z] = uniform_attention(tape.constant(emb));
  for (i64 i = 0; i < 4; ++i) CHECK(alpha.value()[i] == doctest::Approx(0.25));
  for (i64 j = 0; j < 8; ++j) {
    double mean = 0;
    for (i64 i = 0; i < 4; ++i) mean += emb[i * 8 + j] / 4.0;
    CHECK(z.value()[j] == doctest::Approx(mean));
  }
}

TEST_CASE("empty bag is an error") {
  MilConfig cfg = tiny_mil();
  ParamStoreT<double> ps;
  Rng rng(19);
  init_mil_params(ps, cfg, rng);
  TapeD tape;
  Binder<double> bind{tape, ps, false};
  VarD bad = tape.constant(TensorD::zeros({1, 4}));  // wrong L
  CHECK_THROWS_AS(gated_attention(bind, bad, cfg), ShapeError);
}

TEST_CASE("BCE through attention and head matches finite differences") {
  MilConfig cfg = tiny_mil();
  ParamStoreT<double> ps;
  Rng rng(20);
  init_mil_params(ps, cfg, rng);
  TensorD emb = random_embeddings(4, 8, 21);
  std::vector<std::string> names{"mil.attn.V", "mil.attn.U", "mil.attn.w", "mil.head.w"};

  auto build = [&](ParamStoreT<double>& store, bool wg, std::vector<TensorD>* grads) {
    TapeD tape;
    Binder<double> bind{tape, store, wg};
    auto [alpha, z] = gated_attention(bind, tape.constant(emb), cfg);
    VarD y = mil_predict(bind, z);
    VarD loss = ops::add(ops::bce(1.0, ops::select_element(y, 0)),
                         ops::bce(0.0, ops::select_element(y, 1)));
    double v = loss.value()[0];
    if (wg) {
      tape.backward(loss);
      auto gm = bind.collect_grads();
      grads->clear();
      for (auto& n : names) grads->push_back(gm.at(n));
    }
    return v;
  };

  std::vector<TensorD> analytic;
  build(ps, true, &analytic);
  std::vector<TensorD> inputs;
  for (auto& n : names) inputs.push_back(ps.tensor(n));
  auto loss_fn = [&](const std::vector<TensorD>& in) {
    ParamStoreT<double> local = ps;
    for (size_t i = 0; i < names.size(); ++i) local.tensor(names[i]) = in[i];
    return build(local, false, nullptr);
  };
  auto res = oracle::finite_difference_check(inputs, loss_fn, analytic, 32);
  CHECK(res.max_rel_err < 1e-4);
}

}  // TEST_SUITE
