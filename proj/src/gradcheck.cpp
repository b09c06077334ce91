#include "gmic/gradcheck.hpp"

#include <cmath>
#include <functional>

#include "gmic/model.hpp"

namespace gmic {

namespace {

using BuildFn = std::function<VarD(TapeD&, std::vector<VarD>&)>;

double fd_rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Checks d loss / d inputs against central differences. max_coords <= 0 means
// every coordinate; otherwise an evenly strided subset per tensor.
GradCheckRow check_build(const std::string& name, double tol, std::vector<TensorD> inputs,
                         const BuildFn& build, i64 max_coords = -1) {
  auto eval = [&](const std::vector<TensorD>& in, bool with_grad,
                  std::vector<TensorD>* grads) -> double {
    TapeD tape;
    std::vector<VarD> vars;
    for (const auto& t : in) vars.push_back(tape.leaf(t, with_grad));
    VarD loss = build(tape, vars);
    double value = loss.value()[0];
    if (with_grad) {
      tape.backward(loss);
      grads->clear();
      for (auto& v : vars)
        grads->push_back(tape.has_grad(v.id) ? tape.grad(v.id) : TensorD::zeros(v.value().shape));
    }
    return value;
  };

  std::vector<TensorD> analytic;
  eval(inputs, true, &analytic);

  GradCheckRow row{name, 0.0, tol, 0, false};
  for (size_t t = 0; t < inputs.size(); ++t) {
    i64 n = inputs[t].numel();
    i64 step = (max_coords > 0 && n > max_coords) ? n / max_coords : 1;
    for (i64 i = 0; i < n; i += step) {
      double x0 = inputs[t][i];
      double h = 1e-5 * std::max(1.0, std::abs(x0));
      inputs[t][i] = x0 + h;
      double lp = eval(inputs, false, nullptr);
      inputs[t][i] = x0 - h;
      double lm = eval(inputs, false, nullptr);
      inputs[t][i] = x0;
      row.max_rel_err = std::max(row.max_rel_err, fd_rel_err(analytic[t][i], (lp - lm) / (2 * h)));
      row.coords += 1;
    }
  }
  row.pass = row.max_rel_err < tol;
  return row;
}

TensorD random_tensor(std::vector<i64> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  TensorD t(std::move(shape));
  for (auto& v : t.v) v = rng.uniform(lo, hi);
  return t;
}

// values pairwise separated by > 1e-3 so +-h perturbations cannot change
// max/top-m selections
TensorD distinct_tensor(std::vector<i64> shape, Rng& rng) {
  TensorD t(std::move(shape));
  std::vector<i64> order(t.v.size());
  std::iota(order.begin(), order.end(), i64(0));
  rng.shuffle(order);
  for (i64 i = 0; i < t.numel(); ++i) t[order[size_t(i)]] = double(i) * 2e-3 + rng.uniform() * 1e-4;
  return t;
}

// Fixed random projection makes the scalar loss sensitive to every output
// element; seeded so repeated forward evaluations share identical weights.
VarD project(TapeD& tape, VarD out, u64 seed) {
  Rng rng(seed);
  TensorD w(out.value().shape);
  for (auto& v : w.v) v = rng.uniform(0.5, 1.5) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  return ops::sum_all(ops::mul(out, tape.constant(std::move(w))));
}

void merge(GradCheckRow& into, const GradCheckRow& r) {
  into.max_rel_err = std::max(into.max_rel_err, r.max_rel_err);
  into.coords += r.coords;
  into.pass = into.max_rel_err < into.tolerance;
}

ModelConfig toy_config() {
  ModelConfig cfg;
  cfg.backbone.trunk.stage_widths = {4, 8};
  cfg.backbone.trunk.blocks_per_stage = 1;
  cfg.mil.trunk.stage_widths = {4, 8};
  cfg.mil.trunk.blocks_per_stage = 1;
  cfg.mil.embedding_dim = 8;
  cfg.mil.attention_dim = 8;
  cfg.retrieval.num_rois = 2;
  cfg.retrieval.patch_h = cfg.retrieval.patch_w = 16;
  cfg.pooling.t_percent = 10.0;
  cfg.loss.lambda = 0.05;
  cfg.loss.beta = 1.2;
  return cfg;
}

// Full objective on a 64x64 image with K=2 16x16 patches. Patch rectangles
// are pinned so the finite-difference sweep differentiates exactly the graph
// the tape recorded (retrieval is a non-differentiable step by design).
GradCheckRow composite_check(u64 seed) {
  ModelConfig cfg = toy_config();
  Rng rng(seed);
  ParamStoreT<double> store;
  init_model_params(store, cfg, seed);

  TensorD image({1, 1, 64, 64});
  for (auto& v : image.v) v = rng.normal();
  std::vector<std::vector<double>> labels{{1.0, 0.0}};

  std::vector<std::vector<RoiProposalT<double>>> rois(1);
  for (int k = 0; k < cfg.retrieval.num_rois; ++k) {
    RoiProposalT<double> p;
    p.rect = {rng.uniform_int(64 - 16 + 1), rng.uniform_int(64 - 16 + 1), 16, 16};
    p.patch = crop_patch(image, p.rect);
    p.rank = k;
    rois[0].push_back(std::move(p));
  }

  std::vector<std::string> names;
  std::vector<TensorD> params;
  for (const auto& [name, e] : store.entries()) {
    if (!e.trainable) continue;
    names.push_back(name);
    params.push_back(e.value);
  }

  auto loss_of = [&](const std::vector<TensorD>& ps, bool with_grad,
                     std::vector<TensorD>* grads) -> double {
    ParamStoreT<double> local = store.cast<double>();
    for (size_t i = 0; i < names.size(); ++i) local.tensor(names[i]) = ps[i];
    TapeD tape;
    Binder<double> bind{tape, local, with_grad};
    auto fwd = gmic_forward(bind, {image}, cfg, /*train=*/true, AttentionMode::gated, &rois);
    VarD loss = gmic_batch_loss(fwd, labels, cfg);
    double value = loss.value()[0];
    if (with_grad) {
      tape.backward(loss);
      auto gm = bind.collect_grads();
      grads->clear();
      for (const auto& n : names) grads->push_back(gm.at(n));
    }
    return value;
  };

  std::vector<TensorD> analytic;
  loss_of(params, true, &analytic);

  GradCheckRow row{"composite_eq1", 0.0, 1e-4, 0, false};
  Rng pick(seed ^ 0xabcdef);
  for (size_t t = 0; t < params.size(); ++t) {
    i64 n = params[t].numel();
    i64 coords = std::min<i64>(n, 3);
    for (i64 c = 0; c < coords; ++c) {
      i64 i = pick.uniform_int(n);
      double x0 = params[t][i];
      // smaller step than the per-op checks: the composite objective has
      // benign kinks (top-m membership, relu) that a wider bracket can straddle
      double h = 1e-6 * std::max(1.0, std::abs(x0));
      params[t][i] = x0 + h;
      double lp = loss_of(params, false, nullptr);
      params[t][i] = x0 - h;
      double lm = loss_of(params, false, nullptr);
      params[t][i] = x0;
      row.max_rel_err = std::max(row.max_rel_err, fd_rel_err(analytic[t][i], (lp - lm) / (2 * h)));
      row.coords += 1;
    }
  }
  row.pass = row.max_rel_err < row.tolerance;
  return row;
}

}  // namespace

std::vector<GradCheckRow> run_gradient_checks(int seeds) {
  std::vector<GradCheckRow> rows;
  auto row_for = [&](const std::string& name, double tol) -> GradCheckRow& {
    for (auto& r : rows)
      if (r.op == name) return r;
    rows.push_back({name, 0.0, tol, 0, false});
    return rows.back();
  };

  for (int s = 0; s < seeds; ++s) {
    u64 seed = 1000 + u64(s);
    Rng rng(seed);
    u64 pseed = rng.next_u64();

    merge(row_for("conv2d_3x3_pad", 1e-5),
          check_build("conv2d_3x3_pad", 1e-5,
                      {random_tensor({2, 2, 6, 5}, rng), random_tensor({3, 2, 3, 3}, rng)},
                      [&](TapeD& t, std::vector<VarD>& in) {
                        return project(t, ops::conv2d(in[0], in[1], 1, 1), pseed);
                      }));
    merge(row_for("conv2d_4x4_stride2", 1e-5),
          check_build("conv2d_4x4_stride2", 1e-5,
                      {random_tensor({1, 2, 8, 8}, rng), random_tensor({3, 2, 4, 4}, rng)},
                      [&](TapeD& t, std::vector<VarD>& in) {
                        return project(t, ops::conv2d(in[0], in[1], 2, 1), pseed);
                      }));
    merge(row_for("conv2d_1x1", 1e-5),
          check_build("conv2d_1x1", 1e-5,
                      {random_tensor({2, 3, 4, 4}, rng), random_tensor({2, 3, 1, 1}, rng)},
                      [&](TapeD& t, std::vector<VarD>& in) {
                        return project(t, ops::conv2d(in[0], in[1], 1, 0), pseed);
                      }));
    merge(row_for("linear_bias", 1e-5),
          check_build("linear_bias", 1e-5,
                      {random_tensor({3, 5}, rng), random_tensor({4, 5}, rng),
                       random_tensor({4}, rng)},
                      [&](TapeD& t, std::vector<VarD>& in) {
                        return project(t, ops::linear(in[0], in[1], in[2]), pseed);
                      }));
    merge(row_for("matmul", 1e-5),
          check_build("matmul", 1e-5, {random_tensor({3, 4}, rng), random_tensor({4, 5}, rng)},
                      [&](TapeD& t, std::vector<VarD>& in) {
                        return project(t, ops::matmul(in[0], in[1]), pseed);
                      }));
    merge(row_for("sigmoid", 1e-5),
          check_build("sigmoid", 1e-5, {random_tensor({2, 7}, rng, -3, 3)},
                      [&](TapeD& t, std::vector<VarD>& in) {
                        return project(t, ops::sigmoid(in[0]), pseed);
                      }));
    merge(row_for("tanh", 1e-5),
          check_build("tanh", 1e-5, {random_tensor({2, 7}, rng, -3, 3)},
                      [&](TapeD& t, std::vector<VarD>& in) {
                        return project(t, ops::tanh_op(in[0]), pseed);
                      }));
    {
      // keep every input > 1e-3 away from the relu kink
      TensorD x = random_tensor({3, 6}, rng, -2, 2);
      for (auto& v : x.v)
        if (std::abs(v) < 1e-3) v = v < 0 ? v - 1e-3 : v + 1e-3;
      merge(row_for("relu", 1e-5),
            check_build("relu", 1e-5, {x}, [&](TapeD& t, std::vector<VarD>& in) {
              return project(t, ops::relu(in[0]), pseed);
            }));
    }
    merge(row_for("elementwise_mul", 1e-5),
          check_build("elementwise_mul", 1e-5,
                      {random_tensor({4, 3}, rng), random_tensor({4, 3}, rng)},
                      [&](TapeD& t, std::vector<VarD>& in) {
                        return project(t, ops::mul(in[0], in[1]), pseed);
                      }));
    merge(row_for("add", 1e-5),
          check_build("add", 1e-5, {random_tensor({4, 3}, rng), random_tensor({4, 3}, rng)},
                      [&](TapeD& t, std::vector<VarD>& in) {
                        return project(t, ops::add(in[0], in[1]), pseed);
                      }));
    merge(row_for("bias_channel", 1e-5),
          check_build("bias_channel", 1e-5,
                      {random_tensor({2, 3, 4, 5}, rng), random_tensor({3}, rng)},
                      [&](TapeD& t, std::vector<VarD>& in) {
                        return project(t, ops::bias_channel(in[0], in[1]), pseed);
                      }));
    {
      TensorD rm = TensorD::zeros({3});
      TensorD rv = TensorD::full({3}, 1.0);
      merge(row_for("batch_norm2d_train", 1e-5),
            check_build("batch_norm2d_train", 1e-5,
                        {random_tensor({2, 3, 4, 4}, rng), random_tensor({3}, rng, 0.5, 1.5),
                         random_tensor({3}, rng)},
                        [&, rm, rv](TapeD& t, std::vector<VarD>& in) mutable {
                          return project(
                              t, ops::batch_norm2d(in[0], in[1], in[2], &rm, &rv, true), pseed);
                        }));
      TensorD rm2 = random_tensor({3}, rng);
      TensorD rv2 = random_tensor({3}, rng, 0.5, 2.0);
      merge(row_for("batch_norm2d_eval", 1e-5),
            check_build("batch_norm2d_eval", 1e-5,
                        {random_tensor({2, 3, 4, 4}, rng), random_tensor({3}, rng, 0.5, 1.5),
                         random_tensor({3}, rng)},
                        [&, rm2, rv2](TapeD& t, std::vector<VarD>& in) mutable {
                          return project(
                              t, ops::batch_norm2d(in[0], in[1], in[2], &rm2, &rv2, false), pseed);
                        }));
    }
    merge(row_for("max_pool2d", 1e-5),
          check_build("max_pool2d", 1e-5, {distinct_tensor({2, 2, 6, 6}, rng)},
                      [&](TapeD& t, std::vector<VarD>& in) {
                        return project(t, ops::max_pool2d(in[0], 2, 2), pseed);
                      }));
    merge(row_for("global_avg_pool", 1e-5),
          check_build("global_avg_pool", 1e-5, {random_tensor({2, 3, 4, 5}, rng)},
                      [&](TapeD& t, std::vector<VarD>& in) {
                        return project(t, ops::global_avg_pool(in[0]), pseed);
                      }));
    merge(row_for("softmax", 1e-5),
          check_build("softmax", 1e-5, {random_tensor({5, 1}, rng, -2, 2)},
                      [&](TapeD& t, std::vector<VarD>& in) {
                        return project(t, ops::softmax_flat(in[0]), pseed);
                      }));
    merge(row_for("slice_select_reshape", 1e-5),
          check_build("slice_select_reshape", 1e-5, {random_tensor({6, 4}, rng)},
                      [&](TapeD& t, std::vector<VarD>& in) {
                        VarD s = ops::slice_rows(in[0], 1, 4);
                        VarD r = ops::reshape(s, {2, 6});
                        return ops::add(project(t, r, pseed), ops::select_element(in[0], 5));
                      }));
    merge(row_for("select_grid", 1e-5),
          check_build("select_grid", 1e-5, {random_tensor({2, 3, 4, 4}, rng)},
                      [&](TapeD& t, std::vector<VarD>& in) {
                        return project(t, ops::select_grid(in[0], 1, 2), pseed);
                      }));
    merge(row_for("top_fraction_pool", 1e-5),
          check_build("top_fraction_pool", 1e-5, {distinct_tensor({5, 6}, rng)},
                      [&](TapeD& t, std::vector<VarD>& in) {
                        return ops::top_fraction_pool(in[0], 7);
                      }));
    {
      TensorD g = random_tensor({4, 4}, rng, 0.05, 0.95);
      merge(row_for("power_sum_beta2", 1e-5),
            check_build("power_sum_beta2", 1e-5, {g}, [&](TapeD& t, std::vector<VarD>& in) {
              return ops::power_sum(in[0], 2.0);
            }));
      merge(row_for("power_sum_beta_half", 1e-5),
            check_build("power_sum_beta_half", 1e-5, {g}, [&](TapeD& t, std::vector<VarD>& in) {
              return ops::power_sum(in[0], 0.5);
            }));
    }
    {
      TensorD p = random_tensor({1}, rng, 0.1, 0.9);
      merge(row_for("bce", 1e-5),
            check_build("bce", 1e-5, {p}, [&](TapeD& t, std::vector<VarD>& in) {
              return ops::add(ops::bce(1.0, in[0]), ops::bce(0.0, in[0]));
            }));
    }

    merge(row_for("composite_eq1", 1e-4), composite_check(seed));
  }
  return rows;
}

bool all_pass(const std::vector<GradCheckRow>& rows) {
  for (const auto& r : rows)
    if (!r.pass) return false;
  return !rows.empty();
}

}  // namespace gmic
