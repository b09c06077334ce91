#pragma once

#include <filesystem>
#include <optional>

#include "gmic/config.hpp"
#include "gmic/evaluation.hpp"

namespace gmic {

struct HyperParams {
  double learning_rate = 3e-4;
  double lambda = 1e-4;
  double beta = 2.0;
  double t_percent = 2.0;  // pooling threshold, already in percent
  int epochs = 3;
  int batch_breasts = 4;
  u64 seed = 7;
};

HyperParams hyperparams_from_config(const RunConfig& cfg);

// Log-uniform random draw over the search ranges: lr and lambda on a base-10
// scale, beta and t on a natural scale. t is drawn as a fraction and
// converted to percent unless the config says it already is one.
HyperParams sample_hyperparams(const RunConfig& cfg, u64 search_seed);

// One breast-level training example: an exam index (into manifest.records)
// and a side (0 = left, 1 = right).
struct BreastExample {
  i64 exam_index;
  int side;
};

// Balanced epoch: every positive exam plus an equal number of negatives
// sampled without replacement (all negatives, with a warning, when there are
// too few), expanded to breasts and shuffled. Deterministic per epoch_seed.
std::vector<BreastExample> epoch_sample(const DatasetManifest& manifest, Split split,
                                        u64 epoch_seed, std::string* warning = nullptr);

// Owns the parameter state and performs single optimization steps.
class Trainer {
 public:
  Trainer(ModelConfig cfg, HyperParams hp, u64 init_seed);

  // images: per-image [1,1,H,W]; labels: per-image (benign, malignant).
  // Returns the batch loss. A non-finite loss dumps state (when a dump dir is
  // set) and throws NumericError.
  double step(const std::vector<Tensor>& images,
              const std::vector<std::array<float, 2>>& labels);

  ParamStore& params() { return store_; }
  const ModelConfig& model_config() const { return cfg_; }
  void set_dump_dir(const std::filesystem::path& dir) { dump_dir_ = dir; }
  i64 steps_taken() const { return steps_; }

 private:
  ModelConfig cfg_;
  HyperParams hp_;
  ParamStore store_;
  AdamConfig adam_;
  std::filesystem::path dump_dir_;
  i64 steps_ = 0;
};

struct EpochMetrics {
  int epoch = 0;
  double mean_loss = 0;
  std::optional<double> val_auc_malignant, val_auc_benign;
  double seconds = 0;
};

struct TrainResult {
  std::filesystem::path best_checkpoint;
  std::filesystem::path final_checkpoint;
  std::filesystem::path log_path;
  std::vector<EpochMetrics> epochs;
  std::optional<double> best_val_auc_malignant;
  int best_epoch = -1;
};

// Full training run: balanced epochs, per-epoch validation AUC, best-snapshot
// retention keyed on malignant validation AUC, JSON-lines log.
TrainResult train_model(const RunConfig& cfg, const HyperParams& hp,
                        const DatasetManifest& manifest, const std::filesystem::path& data_dir,
                        const std::filesystem::path& out_dir);

struct SearchEntry {
  int index = 0;
  HyperParams hp;
  std::optional<double> val_auc_malignant;
  std::string checkpoint;
};

// n_models independent training runs with sampled hyperparameters; returns
// entries sorted by model index, writes search_summary.json under out_dir.
std::vector<SearchEntry> run_search(const RunConfig& cfg, const DatasetManifest& manifest,
                                    const std::filesystem::path& data_dir,
                                    const std::filesystem::path& out_dir, int n_models);

}  // namespace gmic
