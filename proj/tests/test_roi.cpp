#include <doctest.h>

#include "gmic/roi.hpp"
#include "gmic/rng.hpp"
#include "oracles.hpp"

using namespace gmic;

namespace {

// dyadic values (multiples of 1/1024) keep every window sum exact in double,
// so SAT and naive summation agree bitwise
TensorD dyadic_grid(i64 h, i64 w, Rng& rng) {
  TensorD g({h, w});
  for (auto& v : g.v) v = double(rng.uniform_int(1025)) / 1024.0;
  return g;
}

double quantize_value(double v) { return std::round(v * 1048576.0) / 1048576.0; }

}  // namespace

TEST_SUITE("roiretrieval") {

TEST_CASE("minmax_normalize examples") {
  TensorD g({2, 2}, {2, 4, 6, 8});
  TensorD n = minmax_normalize(g);
  CHECK(n[0] == doctest::Approx(0.0));
  CHECK(n[1] == doctest::Approx(1.0 / 3.0));
  CHECK(n[2] == doctest::Approx(2.0 / 3.0));
  CHECK(n[3] == doctest::Approx(1.0));

  TensorD c = minmax_normalize(TensorD::full({2, 2}, 5.0));
  for (i64 i = 0; i < 4; ++i) CHECK(c[i] == 0.0);

  TensorD u({2, 2}, {0.0, 0.25, 0.75, 1.0});
  TensorD un = minmax_normalize(u);
  for (i64 i = 0; i < 4; ++i) CHECK(un[i] == u[i]);
}

TEST_CASE("class_sum examples and sampled-cell oracle") {
  TensorD g({2, 2}, {1, 2, 3, 4});
  TensorD zero = TensorD::zeros({2, 2});
  TensorD s = class_sum<double>({g, zero});
  for (i64 i = 0; i < 4; ++i) CHECK(s[i] == g[i]);

  TensorD ones = TensorD::full({3, 3}, 1.0);
  TensorD two = class_sum<double>({ones, ones});
  for (i64 i = 0; i < 9; ++i) CHECK(two[i] == 2.0);

  Rng rng(5);
  TensorD a = dyadic_grid(6, 7, rng), b = dyadic_grid(6, 7, rng);
  TensorD sum = class_sum<double>({a, b});
  for (int i = 0; i < 10; ++i) {
    i64 idx = rng.uniform_int(42);
    CHECK(sum[idx] == a[idx] + b[idx]);
  }

  CHECK_THROWS_AS(class_sum<double>({g, TensorD::zeros({3, 3})}), ShapeError);
}

TEST_CASE("window_criterion examples") {
  TensorD ones = TensorD::full({4, 4}, 1.0);
  for (i64 i = 0; i <= 2; ++i)
    for (i64 j = 0; j <= 2; ++j) CHECK(window_criterion(ones, {i, j, 2, 2}) == 4.0);

  TensorD grid({4, 4}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 2, 0, 0, 2, 0});
  CHECK(window_criterion(grid, {2, 2, 2, 2}) == 4.0);
  CHECK(window_criterion(grid, {0, 0, 2, 2}) == 2.0);

  CHECK_THROWS_AS(window_criterion(grid, {3, 3, 2, 2}), ShapeError);
}

TEST_CASE("summed-area table equals naive sums exactly on dyadic grids") {
  Rng rng(11);
  for (int t = 0; t < 100; ++t) {
    i64 h = 1 + rng.uniform_int(16), w = 1 + rng.uniform_int(16);
    TensorD g = dyadic_grid(h, w, rng);
    i64 wh = 1 + rng.uniform_int(h), ww = 1 + rng.uniform_int(w);
    SmWindow win{rng.uniform_int(h - wh + 1), rng.uniform_int(w - ww + 1), wh, ww};
    CHECK(window_criterion(g, win) == oracle::window_sum_naive(g, win));
  }
}

TEST_CASE("greedy selection on the worked grid") {
  TensorD grid({4, 4}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 2, 0, 0, 2, 0});
  auto picks = greedy_windows(grid, 2, 2, 2);
  CHECK(picks[0].first.i == 2);
  CHECK(picks[0].first.j == 2);
  CHECK(picks[0].second == 4.0);
  CHECK(picks[1].first.i == 0);
  CHECK(picks[1].first.j == 0);
  CHECK(picks[1].second == 2.0);
}

TEST_CASE("all-zero map walks non-overlapping tie-break positions") {
  auto picks = greedy_windows(TensorD::zeros({4, 4}), 2, 2, 3);
  CHECK(picks[0].first.i == 0);
  CHECK(picks[0].first.j == 0);
  CHECK(picks[1].first.i == 0);
  CHECK(picks[1].first.j == 2);
  CHECK(picks[2].first.i == 2);
  CHECK(picks[2].first.j == 0);
  for (auto& p : picks) CHECK(p.second == 0.0);
}

TEST_CASE("map_window_to_input examples") {
  RetrievalConfig cfg;
  cfg.patch_h = cfg.patch_w = 256;
  InputRect r = map_window_to_input({0, 0, 16, 16}, 16, 736, 480, cfg);
  CHECK(r.y0 == 0);
  CHECK(r.x0 == 0);
  CHECK(r.h == 256);
  CHECK(r.w == 256);

  // window whose projection overhangs the right edge shifts left, same size
  InputRect over = map_window_to_input({0, 15, 16, 16}, 16, 736, 480, cfg);
  CHECK(over.x0 == 480 - 256);
  CHECK(over.w == 256);

  InputRect mid = map_window_to_input({3, 5, 16, 16}, 16, 736, 480, cfg);
  CHECK(mid.y0 == 48);
  CHECK(mid.x0 == 80);
}

TEST_CASE("retrieval output matches the brute-force greedy oracle") {
  Rng rng(404);
  int instances = 0;
  while (instances < 200) {
    i64 gh = 2 + rng.uniform_int(15), gw = 2 + rng.uniform_int(15);  // up to 16
    i64 wh = 1 + rng.uniform_int(std::min<i64>(4, gh));
    i64 ww = 1 + rng.uniform_int(std::min<i64>(4, gw));
    int k = 1 + int(rng.uniform_int(4));
    int classes = 1 + int(rng.uniform_int(2));

    i64 s = 4;
    RetrievalConfig cfg;
    cfg.num_rois = k;
    cfg.patch_h = wh * s;
    cfg.patch_w = ww * s;
    i64 ih = gh * s, iw = gw * s;

    TensorD saliency({i64(classes), gh, gw});
    int kind = instances % 10;
    if (kind == 0) {
      // all zero
    } else if (kind == 1) {
      std::fill(saliency.v.begin(), saliency.v.end(), 0.5);  // all tied
    } else {
      for (auto& v : saliency.v) v = double(rng.uniform_int(1025)) / 1024.0;
    }

    TensorD image({1, 1, ih, iw});
    for (auto& v : image.v) v = rng.normal();

    auto rois = retrieve_rois(image, saliency, cfg, s);

    // independent preprocessing: naive normalize + sum + snap
    TensorD ahat({gh, gw});
    for (int c = 0; c < classes; ++c) {
      double lo = saliency[c * gh * gw], hi = lo;
      for (i64 i = 0; i < gh * gw; ++i) {
        lo = std::min(lo, saliency[c * gh * gw + i]);
        hi = std::max(hi, saliency[c * gh * gw + i]);
      }
      for (i64 i = 0; i < gh * gw; ++i)
        if (hi > lo) ahat[i] += (saliency[c * gh * gw + i] - lo) / (hi - lo);
    }
    for (i64 i = 0; i < gh * gw; ++i) ahat[i] = quantize_value(ahat[i]);

    auto expect = oracle::greedy_retrieval_naive(ahat, wh, ww, k);
    REQUIRE(rois.size() == expect.size());
    for (size_t p = 0; p < rois.size(); ++p) {
      CHECK(rois[p].window.i == expect[p].window.i);
      CHECK(rois[p].window.j == expect[p].window.j);
      CHECK(rois[p].criterion == expect[p].criterion);
      CHECK(rois[p].rank == int(p));
    }
    ++instances;
  }
}

TEST_CASE("per-step invariants: optimality, monotonicity, reset accounting") {
  Rng rng(77);
  for (int t = 0; t < 30; ++t) {
    i64 gh = 4 + rng.uniform_int(10), gw = 4 + rng.uniform_int(10);
    i64 wh = 1 + rng.uniform_int(3), ww = 1 + rng.uniform_int(3);
    TensorD grid = dyadic_grid(gh, gw, rng);
    TensorD original = grid;
    auto picks = greedy_windows(grid, wh, ww, 4);

    std::vector<char> reset(size_t(gh * gw), 0);
    double prev = std::numeric_limits<double>::infinity();
    TensorD current = original;
    for (auto& [win, crit] : picks) {
      // greedy optimality on the post-reset grid
      double best = -1;
      for (i64 i = 0; i + wh <= gh; ++i)
        for (i64 j = 0; j + ww <= gw; ++j)
          best = std::max(best, oracle::window_sum_naive(current, {i, j, wh, ww}));
      CHECK(crit == best);
      CHECK(crit <= prev);  // nonnegative grid: criteria non-increasing
      prev = crit;
      // criterion equals the window sum restricted to never-reset cells
      double fresh = 0;
      for (i64 i = win.i; i < win.i + wh; ++i)
        for (i64 j = win.j; j < win.j + ww; ++j)
          if (!reset[size_t(i * gw + j)]) fresh += original[i * gw + j];
      CHECK(crit == fresh);
      for (i64 i = win.i; i < win.i + wh; ++i)
        for (i64 j = win.j; j < win.j + ww; ++j) {
          reset[size_t(i * gw + j)] = 1;
          current[i * gw + j] = 0.0;
        }
    }
  }
}

TEST_CASE("patches copy the exact input rectangle") {
  Rng rng(31);
  TensorD image({1, 1, 32, 24});
  for (auto& v : image.v) v = rng.normal();
  TensorD saliency({1, 8, 6});
  for (auto& v : saliency.v) v = rng.uniform();
  RetrievalConfig cfg;
  cfg.num_rois = 3;
  cfg.patch_h = cfg.patch_w = 8;
  auto rois = retrieve_rois(image, saliency, cfg, 4);
  for (auto& p : rois) {
    CHECK(p.patch.shape == std::vector<i64>{1, 1, 8, 8});
    for (i64 y = 0; y < 8; ++y)
      for (i64 x = 0; x < 8; ++x)
        CHECK(p.patch[y * 8 + x] == image[(p.rect.y0 + y) * 24 + p.rect.x0 + x]);
  }
}

TEST_CASE("image smaller than the patch is an error") {
  TensorD image({1, 1, 16, 16});
  TensorD saliency({1, 4, 4});
  RetrievalConfig cfg;
  cfg.patch_h = cfg.patch_w = 32;
  CHECK_THROWS_AS(retrieve_rois(image, saliency, cfg, 4), ShapeError);
}

}  // TEST_SUITE
