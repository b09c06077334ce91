#include "gmic/config.hpp"

#include <fstream>
#include <set>

namespace gmic {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// strict per-section reader: every present key must be known and well-typed
class Section {
 public:
  Section(const json& parent, const std::string& name) : name_(name) {
    if (parent.contains(name)) {
      obj_ = &parent.at(name);
      if (!obj_->is_object()) throw ConfigError("config section '" + name + "' must be an object");
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!obj_ || !obj_->contains(key)) return;
    try {
      out = obj_->at(key).get<T>();
    } catch (const std::exception&) {
      throw ConfigError("config: bad value type at " + name_ + "." + key);
    }
  }

  void finish() const {
    if (!obj_) return;
    for (const auto& [key, value] : obj_->items())
      if (!seen_.count(key)) throw ConfigError("config: unknown key " + name_ + "." + key);
  }

 private:
  const json* obj_ = nullptr;
  std::string name_;
  std::set<std::string> seen_;
};

}  // namespace

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.backbone.trunk.stage_widths = model_stage_widths;
  m.backbone.trunk.blocks_per_stage = model_blocks_per_stage;
  m.backbone.trunk.stem_kernel = model_stem_kernel;
  m.backbone.trunk.stem_stride = model_stem_stride;
  m.backbone.trunk.stem_pool = model_stem_pool;
  m.mil.trunk.stage_widths = mil_stage_widths;
  m.mil.trunk.blocks_per_stage = mil_blocks_per_stage;
  m.mil.trunk.stem_pool = mil_stem_pool;
  m.mil.embedding_dim = mil_embedding_dim;
  m.mil.attention_dim = mil_attention_dim;
  m.mil.attention_bias = mil_attention_bias;
  m.retrieval.num_rois = retrieval_num_rois;
  m.retrieval.patch_h = retrieval_patch_h;
  m.retrieval.patch_w = retrieval_patch_w;
  m.pooling.t_percent = pooling_t_percent();
  m.loss.lambda = loss_lambda;
  m.loss.beta = loss_beta;
  return m;
}

void RunConfig::validate() const {
  data.validate();
  model_config().validate();
  if (train_learning_rate <= 0) throw ConfigError("training.learning_rate must be positive");
  if (train_epochs < 1) throw ConfigError("training.epochs must be >= 1");
  if (train_batch_breasts < 1) throw ConfigError("training.batch_breasts must be >= 1");
  if (search_n_models < 1) throw ConfigError("search.n_models must be >= 1");
  if (search_top_k < 1) throw ConfigError("search.top_k must be >= 1");
  i64 s = model_config().backbone.downsample();
  if (data.image_h % s != 0 || data.image_w % s != 0)
    throw ConfigError("data dims must be divisible by the backbone downsample factor " +
                      std::to_string(s));
  i64 ms = model_config().mil.trunk.downsample();
  if (retrieval_patch_h % ms != 0 || retrieval_patch_w % ms != 0)
    throw ConfigError("patch dims must be divisible by the patch-encoder downsample factor " +
                      std::to_string(ms));
  if (retrieval_patch_h > data.image_h || retrieval_patch_w > data.image_w)
    throw ConfigError("retrieval patch larger than the image");
}

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config root must be an object");
  static const std::set<std::string> known_sections{"data",     "model", "retrieval", "mil",
                                                    "loss",     "training", "search", "output"};
  for (const auto& [key, value] : j.items())
    if (!known_sections.count(key)) throw ConfigError("config: unknown section '" + key + "'");

  RunConfig cfg;

  Section data(j, "data");
  data.get("image_height", cfg.data.image_h);
  data.get("image_width", cfg.data.image_w);
  data.get("train_exams", cfg.data.train_exams);
  data.get("val_exams", cfg.data.val_exams);
  data.get("test_exams", cfg.data.test_exams);
  data.get("benign_prevalence", cfg.data.benign_prevalence);
  data.get("malignant_prevalence", cfg.data.malignant_prevalence);
  data.get("lesion_radius_min", cfg.data.lesion_radius_min);
  data.get("lesion_radius_max", cfg.data.lesion_radius_max);
  data.get("lesion_contrast_min", cfg.data.lesion_contrast_min);
  data.get("lesion_contrast_max", cfg.data.lesion_contrast_max);
  data.get("background_texture_scale", cfg.data.background_texture_scale);
  data.get("seed", cfg.data.seed);
  data.finish();

  Section model(j, "model");
  model.get("stage_widths", cfg.model_stage_widths);
  model.get("blocks_per_stage", cfg.model_blocks_per_stage);
  model.get("stem_kernel", cfg.model_stem_kernel);
  model.get("stem_stride", cfg.model_stem_stride);
  model.get("stem_pool", cfg.model_stem_pool);
  model.finish();

  Section retrieval(j, "retrieval");
  retrieval.get("num_rois", cfg.retrieval_num_rois);
  retrieval.get("patch_height", cfg.retrieval_patch_h);
  retrieval.get("patch_width", cfg.retrieval_patch_w);
  retrieval.finish();

  Section mil(j, "mil");
  mil.get("embedding_dim", cfg.mil_embedding_dim);
  mil.get("attention_dim", cfg.mil_attention_dim);
  mil.get("attention_bias", cfg.mil_attention_bias);
  mil.get("stage_widths", cfg.mil_stage_widths);
  mil.get("blocks_per_stage", cfg.mil_blocks_per_stage);
  mil.get("stem_pool", cfg.mil_stem_pool);
  mil.finish();

  Section loss(j, "loss");
  loss.get("lambda", cfg.loss_lambda);
  loss.get("beta", cfg.loss_beta);
  loss.get("pooling_t", cfg.loss_pooling_t);
  loss.get("t_is_percent", cfg.loss_t_is_percent);
  loss.finish();

  Section training(j, "training");
  training.get("learning_rate", cfg.train_learning_rate);
  training.get("epochs", cfg.train_epochs);
  training.get("batch_breasts", cfg.train_batch_breasts);
  training.get("seed", cfg.train_seed);
  training.get("threads", cfg.train_threads);
  training.get("save_adam_state", cfg.train_save_adam);
  training.finish();

  Section search(j, "search");
  search.get("n_models", cfg.search_n_models);
  search.get("top_k", cfg.search_top_k);
  search.get("seed", cfg.search_seed);
  search.get("lr_log10_min", cfg.search_lr_log10_min);
  search.get("lr_log10_max", cfg.search_lr_log10_max);
  search.get("lambda_log10_min", cfg.search_lambda_log10_min);
  search.get("lambda_log10_max", cfg.search_lambda_log10_max);
  search.get("beta_ln_min", cfg.search_beta_ln_min);
  search.get("beta_ln_max", cfg.search_beta_ln_max);
  search.get("t_ln_min", cfg.search_t_ln_min);
  search.get("t_ln_max", cfg.search_t_ln_max);
  search.finish();

  Section output(j, "output");
  output.get("roi_debug_json", cfg.output_roi_debug);
  output.finish();

  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config: " + path.string());
  json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw ConfigError("config parse error in " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

ordered_json config_to_json(const RunConfig& cfg) {
  ordered_json j;
  j["data"] = {{"image_height", cfg.data.image_h},
               {"image_width", cfg.data.image_w},
               {"train_exams", cfg.data.train_exams},
               {"val_exams", cfg.data.val_exams},
               {"test_exams", cfg.data.test_exams},
               {"benign_prevalence", cfg.data.benign_prevalence},
               {"malignant_prevalence", cfg.data.malignant_prevalence},
               {"lesion_radius_min", cfg.data.lesion_radius_min},
               {"lesion_radius_max", cfg.data.lesion_radius_max},
               {"lesion_contrast_min", cfg.data.lesion_contrast_min},
               {"lesion_contrast_max", cfg.data.lesion_contrast_max},
               {"background_texture_scale", cfg.data.background_texture_scale},
               {"seed", cfg.data.seed}};
  j["model"] = {{"stage_widths", cfg.model_stage_widths},
                {"blocks_per_stage", cfg.model_blocks_per_stage},
                {"stem_kernel", cfg.model_stem_kernel},
                {"stem_stride", cfg.model_stem_stride},
                {"stem_pool", cfg.model_stem_pool}};
  j["retrieval"] = {{"num_rois", cfg.retrieval_num_rois},
                    {"patch_height", cfg.retrieval_patch_h},
                    {"patch_width", cfg.retrieval_patch_w}};
  j["mil"] = {{"embedding_dim", cfg.mil_embedding_dim},
              {"attention_dim", cfg.mil_attention_dim},
              {"attention_bias", cfg.mil_attention_bias},
              {"stage_widths", cfg.mil_stage_widths},
              {"blocks_per_stage", cfg.mil_blocks_per_stage},
              {"stem_pool", cfg.mil_stem_pool}};
  j["loss"] = {{"lambda", cfg.loss_lambda},
               {"beta", cfg.loss_beta},
               {"pooling_t", cfg.loss_pooling_t},
               {"t_is_percent", cfg.loss_t_is_percent}};
  j["training"] = {{"learning_rate", cfg.train_learning_rate},
                   {"epochs", cfg.train_epochs},
                   {"batch_breasts", cfg.train_batch_breasts},
                   {"seed", cfg.train_seed},
                   {"threads", cfg.train_threads},
                   {"save_adam_state", cfg.train_save_adam}};
  j["search"] = {{"n_models", cfg.search_n_models},
                 {"top_k", cfg.search_top_k},
                 {"seed", cfg.search_seed},
                 {"lr_log10_min", cfg.search_lr_log10_min},
                 {"lr_log10_max", cfg.search_lr_log10_max},
                 {"lambda_log10_min", cfg.search_lambda_log10_min},
                 {"lambda_log10_max", cfg.search_lambda_log10_max},
                 {"beta_ln_min", cfg.search_beta_ln_min},
                 {"beta_ln_max", cfg.search_beta_ln_max},
                 {"t_ln_min", cfg.search_t_ln_min},
                 {"t_ln_max", cfg.search_t_ln_max}};
  j["output"] = {{"roi_debug_json", cfg.output_roi_debug}};
  return j;
}

}  // namespace gmic
