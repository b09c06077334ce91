#include "gmic/model.hpp"
#include <iostream>

int main() {
  gmic::ModelConfig cfg;
  cfg.backbone.trunk.stage_widths = {4, 8};
  cfg.mil.trunk.stage_widths = {4, 8};
  cfg.retrieval.patch_h = cfg.retrieval.patch_w = 16;
  cfg.retrieval.num_rois = 2;
  gmic::ParamStoreT<double> ps;
  gmic::init_model_params(ps, cfg, 7);
  gmic::Rng rng(3);
  gmic::TensorT<double> img({1, 1, 64, 64});
  for (auto& v : img.v) v = rng.normal();
  gmic::TapeT<double> tape;
  gmic::Binder<double> bind{tape, ps, true};
  auto fwd = gmic::gmic_forward(bind, {img}, cfg, true);
  auto loss = gmic::gmic_batch_loss(fwd, {{1.0, 0.0}}, cfg);
  std::cout << "loss=" << loss.value()[0] << "\n";
  tape.backward(loss);
  auto grads = bind.collect_grads();
  std::cout << "grads=" << grads.size() << "\n";
  return 0;
}
