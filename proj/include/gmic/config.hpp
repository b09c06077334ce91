#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gmic/model.hpp"
#include "gmic/synthdata.hpp"

#include <json.hpp>

namespace gmic {

// Full run configuration. Every knob is addressable from the JSON config
// file; unknown keys are rejected with the offending path.
struct RunConfig {
  SynthSpec data;

  std::vector<int> model_stage_widths{16, 32, 64, 128};
  int model_blocks_per_stage = 2;
  int model_stem_kernel = 6;
  int model_stem_stride = 2;
  bool model_stem_pool = false;

  int retrieval_num_rois = 6;
  i64 retrieval_patch_h = 256;
  i64 retrieval_patch_w = 256;

  int mil_embedding_dim = 128;
  int mil_attention_dim = 128;
  bool mil_attention_bias = false;
  std::vector<int> mil_stage_widths{16, 32, 64, 128};
  int mil_blocks_per_stage = 2;
  bool mil_stem_pool = true;

  double loss_lambda = 1e-4;
  double loss_beta = 2.0;
  double loss_pooling_t = 0.02;     // fraction by default; see t_is_percent
  bool loss_t_is_percent = false;   // when true, pooling_t is already a percent

  double train_learning_rate = 3e-4;
  int train_epochs = 3;
  int train_batch_breasts = 4;
  u64 train_seed = 7;
  int train_threads = 0;  // 0 = hardware concurrency
  bool train_save_adam = true;

  int search_n_models = 8;
  int search_top_k = 5;
  u64 search_seed = 1234;
  double search_lr_log10_min = -5.5, search_lr_log10_max = -3.8;
  double search_lambda_log10_min = -5.0, search_lambda_log10_max = -2.8;
  double search_beta_ln_min = -1.6, search_beta_ln_max = 1.6;
  double search_t_ln_min = -5.0, search_t_ln_max = -1.5;

  bool output_roi_debug = false;

  double pooling_t_percent() const {
    return loss_t_is_percent ? loss_pooling_t : loss_pooling_t * 100.0;
  }

  ModelConfig model_config() const;
  void validate() const;
};

RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
nlohmann::ordered_json config_to_json(const RunConfig& cfg);  // fully resolved

}  // namespace gmic
