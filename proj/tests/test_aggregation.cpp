#include <doctest.h>

#include "gmic/aggregation.hpp"
#include "gmic/rng.hpp"
#include "oracles.hpp"

using namespace gmic;

TEST_SUITE("aggregation") {

TEST_CASE("top-t pooling examples") {
  TensorD grid({1, 4}, {0.9, 0.5, 0.1, 0.1});
  {
    TapeD tape;
    PoolingConfig cfg{50.0};  // m = 2 of 4
    CHECK(f_agg(tape.constant(grid), cfg).value()[0] == doctest::Approx(0.7));
  }
  {
    TapeD tape;
    PoolingConfig cfg{100.0};  // GAP limit
    CHECK(f_agg(tape.constant(grid), cfg).value()[0] == doctest::Approx(0.4));
  }
  {
    TapeD tape;
    PoolingConfig cfg{1.0};  // m = ceil(0.04) = 1: GMP limit
    CHECK(cfg.cells(4) == 1);
    CHECK(f_agg(tape.constant(grid), cfg).value()[0] == doctest::Approx(0.9));
  }
}

TEST_CASE("pooling cell count rounding") {
  PoolingConfig cfg{2.0};
  CHECK(cfg.cells(1380) == 28);  // ceil(27.6)
  CHECK(PoolingConfig{100.0}.cells(7) == 7);
  CHECK(PoolingConfig{0.0001}.cells(7) == 1);
  CHECK_THROWS_AS(PoolingConfig{0.0}.validate(), ConfigError);
  CHECK_THROWS_AS(PoolingConfig{100.5}.validate(), ConfigError);
}

TEST_CASE("sandwich property and oracle agreement on random grids") {
  Rng rng(40);
  for (int t = 0; t < 100; ++t) {
    i64 h = 2 + rng.uniform_int(8), w = 2 + rng.uniform_int(8);
    TensorD grid({h, w});
    for (auto& v : grid.v) v = rng.uniform();
    double t_pct = rng.uniform(0.5, 100.0);
    PoolingConfig cfg{t_pct};
    TapeD tape;
    double val = f_agg(tape.constant(grid), cfg).value()[0];

    double gap = 0.0, gmp = -1.0, mn = 2.0;
    for (auto v : grid.v) {
      gap += v / double(grid.numel());
      gmp = std::max(gmp, double(v));
      mn = std::min(mn, double(v));
    }
    CHECK(val >= mn - 1e-12);
    CHECK(val >= gap - 1e-12);
    CHECK(val <= gmp + 1e-12);
    CHECK(val == doctest::Approx(oracle::top_m_mean(
                     std::vector<double>(grid.v.begin(), grid.v.end()), cfg.cells(h * w))));
  }
}

TEST_CASE("pooling is monotone in any single cell") {
  Rng rng(41);
  TensorD grid({4, 4});
  for (auto& v : grid.v) v = rng.uniform();
  PoolingConfig cfg{30.0};
  TapeD tape;
  double base = f_agg(tape.constant(grid), cfg).value()[0];
  for (i64 i = 0; i < 16; ++i) {
    TensorD bumped = grid;
    bumped[i] += 0.3;
    TapeD t2;
    CHECK(f_agg(t2.constant(bumped), cfg).value()[0] >= base - 1e-12);
  }
}

TEST_CASE("pooling gradient sums to one over the grid") {
  Rng rng(42);
  TensorD grid({5, 5});
  for (auto& v : grid.v) v = rng.uniform();
  for (double t : {5.0, 37.0, 100.0}) {
    TapeD tape;
    VarD g = tape.leaf(grid, true);
    tape.backward(f_agg(g, PoolingConfig{t}));
    double sum = 0.0;
    for (i64 i = 0; i < 25; ++i) sum += tape.grad(g.id)[i];
    CHECK(sum == doctest::Approx(1.0));
  }
}

TEST_CASE("regularizer examples") {
  TensorD grid({1, 2}, {0.25, 0.25});
  TapeD tape;
  CHECK(l_reg(tape.constant(grid), 1.0).value()[0] == doctest::Approx(0.5));
  CHECK(l_reg(tape.constant(grid), 2.0).value()[0] == doctest::Approx(0.125));
  CHECK(l_reg(tape.constant(grid), 0.5).value()[0] == doctest::Approx(1.0));
}

TEST_CASE("regularizer gradient matches finite differences away from zero") {
  Rng rng(43);
  TensorD grid({3, 3});
  for (auto& v : grid.v) v = rng.uniform(0.05, 0.95);
  for (double beta : {0.5, 1.0, 2.0}) {
    auto loss_fn = [&](const std::vector<TensorD>& in) {
      TapeD t;
      return ops::power_sum(t.constant(in[0]), beta).value()[0];
    };
    TapeD tape;
    VarD g = tape.leaf(grid, true);
    tape.backward(ops::power_sum(g, beta));
    auto res = oracle::finite_difference_check({grid}, loss_fn, {tape.grad(g.id)});
    CHECK(res.max_rel_err < 1e-5);
  }
}

TEST_CASE("composite objective examples") {
  auto scalar_var = [](TapeD& t, double v) { return t.constant(TensorD::scalar(v)); };

  {  // perfect predictions, lambda = 0: clamp-level loss
    TapeD tape;
    LossConfig cfg{0.0, 1.0};
    VarD grid = tape.constant(TensorD({1, 2}, {0.25, 0.25}));
    VarD loss = total_loss<double>({1.0, 0.0}, {scalar_var(tape, 1.0), scalar_var(tape, 0.0)},
                                   {scalar_var(tape, 1.0), scalar_var(tape, 0.0)}, {grid, grid},
                                   cfg);
    CHECK(loss.value()[0] < 4 * 2e-7);
  }
  {  // one class, y=1, both paths 0.5
    TapeD tape;
    LossConfig cfg{0.0, 1.0};
    VarD grid = tape.constant(TensorD({1, 2}, {0.25, 0.25}));
    VarD loss = total_loss<double>({1.0}, {scalar_var(tape, 0.5)}, {scalar_var(tape, 0.5)},
                                   {grid}, cfg);
    CHECK(loss.value()[0] == doctest::Approx(2.0 * std::log(2.0)));
  }
  {  // adding lambda=0.1, A=[0.25,0.25], beta=1 adds 0.05
    TapeD tape;
    LossConfig cfg{0.1, 1.0};
    VarD grid = tape.constant(TensorD({1, 2}, {0.25, 0.25}));
    VarD loss = total_loss<double>({1.0}, {scalar_var(tape, 0.5)}, {scalar_var(tape, 0.5)},
                                   {grid}, cfg);
    CHECK(loss.value()[0] == doctest::Approx(2.0 * std::log(2.0) + 0.05));
  }
}

TEST_CASE("fuse examples") {
  CHECK(fuse({0.6}, {0.8})[0] == doctest::Approx(0.7));
  CHECK(fuse({0.3}, {0.3})[0] == doctest::Approx(0.3));
  CHECK(fuse({0.0}, {1.0})[0] == doctest::Approx(0.5));
  auto ab = fuse({0.2, 0.9}, {0.4, 0.1});
  auto ba = fuse({0.4, 0.1}, {0.2, 0.9});
  CHECK(ab == ba);
}

}  // TEST_SUITE
