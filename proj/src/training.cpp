#include "gmic/training.hpp"

#include <chrono>
#include <condition_variable>
#include <fstream>
#include <iostream>
#include <mutex>
#include <queue>
#include <thread>

namespace gmic {

namespace fs = std::filesystem;

HyperParams hyperparams_from_config(const RunConfig& cfg) {
  HyperParams hp;
  hp.learning_rate = cfg.train_learning_rate;
  hp.lambda = cfg.loss_lambda;
  hp.beta = cfg.loss_beta;
  hp.t_percent = cfg.pooling_t_percent();
  hp.epochs = cfg.train_epochs;
  hp.batch_breasts = cfg.train_batch_breasts;
  hp.seed = cfg.train_seed;
  return hp;
}

HyperParams sample_hyperparams(const RunConfig& cfg, u64 search_seed) {
  Rng rng(search_seed);
  HyperParams hp = hyperparams_from_config(cfg);
  hp.learning_rate = rng.log_uniform10(cfg.search_lr_log10_min, cfg.search_lr_log10_max);
  hp.lambda = rng.log_uniform10(cfg.search_lambda_log10_min, cfg.search_lambda_log10_max);
  hp.beta = rng.log_uniform_e(cfg.search_beta_ln_min, cfg.search_beta_ln_max);
  double t = rng.log_uniform_e(cfg.search_t_ln_min, cfg.search_t_ln_max);
  hp.t_percent = cfg.loss_t_is_percent ? t : t * 100.0;
  hp.seed = search_seed;
  return hp;
}

std::vector<BreastExample> epoch_sample(const DatasetManifest& manifest, Split split,
                                        u64 epoch_seed, std::string* warning) {
  std::vector<i64> positives, negatives;
  for (i64 i = 0; i < i64(manifest.records.size()); ++i) {
    const auto& r = manifest.records[size_t(i)];
    if (r.split != split) continue;
    (r.positive() ? positives : negatives).push_back(i);
  }
  if (positives.empty() && negatives.empty())
    throw DataError("epoch_sample: split has no exams");

  Rng rng(epoch_seed);
  std::vector<i64> chosen = positives;
  if (i64(negatives.size()) <= i64(positives.size())) {
    if (warning && negatives.size() < positives.size())
      *warning = "fewer negative exams (" + std::to_string(negatives.size()) +
                 ") than positives (" + std::to_string(positives.size()) + "); using all";
    chosen.insert(chosen.end(), negatives.begin(), negatives.end());
  } else {
    auto idx = rng.sample_without_replacement(i64(negatives.size()), i64(positives.size()));
    for (i64 i : idx) chosen.push_back(negatives[size_t(i)]);
  }

  std::vector<BreastExample> examples;
  examples.reserve(chosen.size() * 2);
  for (i64 e : chosen)
    for (int side = 0; side < 2; ++side) examples.push_back({e, side});
  rng.shuffle(examples);
  return examples;
}

Trainer::Trainer(ModelConfig cfg, HyperParams hp, u64 init_seed) : cfg_(std::move(cfg)), hp_(hp) {
  cfg_.pooling.t_percent = hp.t_percent;
  cfg_.loss.lambda = hp.lambda;
  cfg_.loss.beta = hp.beta;
  cfg_.validate();
  adam_.lr = hp.learning_rate;
  init_model_params(store_, cfg_, init_seed);
}

double Trainer::step(const std::vector<Tensor>& images,
                     const std::vector<std::array<float, 2>>& labels) {
  if (images.size() != labels.size() || images.empty())
    throw ShapeError("train step: images/labels mismatch");
  Tape tape;
  Binder<float> bind{tape, store_, /*with_grad=*/true};
  auto fwd = gmic_forward(bind, images, cfg_, /*train=*/true);
  std::vector<std::vector<float>> label_vecs;
  for (const auto& l : labels) label_vecs.push_back({l[0], l[1]});
  Var loss = gmic_batch_loss(fwd, label_vecs, cfg_);
  double value = double(loss.value()[0]);
  if (!std::isfinite(value)) {
    if (!dump_dir_.empty()) {
      std::error_code ec;
      fs::create_directories(dump_dir_, ec);
      save_checkpoint(store_, (dump_dir_ / "nan_dump.ckpt").string(), true);
      std::ofstream os(dump_dir_ / "nan_dump.json");
      os << "{\"step\": " << steps_ << ", \"loss\": \"" << value << "\"}\n";
    }
    throw NumericError("non-finite loss at step " + std::to_string(steps_));
  }
  tape.backward(loss);
  auto grads = bind.collect_grads();
  store_.adam_step(grads, adam_);
  steps_ += 1;
  return value;
}

namespace {

struct Batch {
  std::vector<Tensor> images;
  std::vector<std::array<float, 2>> labels;
};

// Bounded single-producer prefetch queue: the loader thread stays one batch
// ahead of the optimizer.
class BatchPrefetcher {
 public:
  BatchPrefetcher(const fs::path& data_dir, const DatasetManifest& manifest,
                  std::vector<BreastExample> examples, int batch_breasts)
      : data_dir_(data_dir), manifest_(manifest), examples_(std::move(examples)) {
    batches_ = (i64(examples_.size()) + batch_breasts - 1) / batch_breasts;
    worker_ = std::thread([this, batch_breasts] { run(batch_breasts); });
  }

  ~BatchPrefetcher() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      cancel_ = true;
    }
    cv_.notify_all();
    if (worker_.joinable()) worker_.join();
  }

  std::optional<Batch> next() {
    std::unique_lock<std::mutex> lock(mu_);
    cv_.wait(lock, [this] { return !queue_.empty() || done_ || !error_.empty(); });
    if (!error_.empty()) throw DataError(error_);
    if (queue_.empty()) return std::nullopt;
    Batch b = std::move(queue_.front());
    queue_.pop();
    cv_.notify_all();
    return b;
  }

 private:
  void run(int batch_breasts) {
    try {
      for (i64 b = 0; b < batches_; ++b) {
        Batch batch;
        i64 lo = b * batch_breasts;
        i64 hi = std::min<i64>(lo + batch_breasts, i64(examples_.size()));
        for (i64 i = lo; i < hi; ++i) {
          const auto& ex = examples_[size_t(i)];
          const ExamRecord& rec = manifest_.records[size_t(ex.exam_index)];
          const char* views[2] = {ex.side == 0 ? "L-CC" : "R-CC", ex.side == 0 ? "L-MLO" : "R-MLO"};
          for (const char* view : views) {
            batch.images.push_back(
                load_view_tensor(data_dir_, rec, view, manifest_.image_h, manifest_.image_w));
            batch.labels.push_back({float(rec.label(ex.side)[0]), float(rec.label(ex.side)[1])});
          }
        }
        std::unique_lock<std::mutex> lock(mu_);
        cv_.wait(lock, [this] { return queue_.size() < 2 || cancel_; });
        if (cancel_) return;
        queue_.push(std::move(batch));
        cv_.notify_all();
      }
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(mu_);
      error_ = e.what();
      cv_.notify_all();
      return;
    }
    std::lock_guard<std::mutex> lock(mu_);
    done_ = true;
    cv_.notify_all();
  }

  fs::path data_dir_;
  const DatasetManifest& manifest_;
  std::vector<BreastExample> examples_;
  i64 batches_ = 0;
  std::thread worker_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::queue<Batch> queue_;
  bool done_ = false;
  bool cancel_ = false;
  std::string error_;
};

std::optional<double> validation_auc(ParamStore& store, const ModelConfig& cfg,
                                     const DatasetManifest& manifest, const fs::path& data_dir,
                                     int cls, std::optional<double>* other) {
  EvalOptions opts;
  opts.localization = false;
  SplitEval eval = evaluate_split({&store}, cfg, manifest, data_dir, Split::validation, opts);
  EvalReport rep = make_report(eval, Variant::gmic, Split::validation);
  if (other) *other = rep.auc[size_t(1 - cls)];
  return rep.auc[size_t(cls)];
}

}  // namespace

TrainResult train_model(const RunConfig& cfg, const HyperParams& hp,
                        const DatasetManifest& manifest, const fs::path& data_dir,
                        const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  TrainResult result;
  result.log_path = out_dir / "training_log.jsonl";
  result.best_checkpoint = out_dir / "best.ckpt";
  result.final_checkpoint = out_dir / "final.ckpt";

  Trainer trainer(cfg.model_config(), hp, hp.seed);
  trainer.set_dump_dir(out_dir);
  Rng root(hp.seed);

  std::ofstream log(result.log_path, std::ios::trunc);
  if (!log) throw DataError("cannot write training log: " + result.log_path.string());

  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    std::string warning;
    auto examples =
        epoch_sample(manifest, Split::train, root.fork(1000 + u64(epoch)).seed(), &warning);
    if (!warning.empty()) std::cerr << "[train] epoch " << epoch << ": " << warning << "\n";

    double loss_sum = 0.0;
    i64 batches = 0;
    BatchPrefetcher loader(data_dir, manifest, examples, hp.batch_breasts);
    while (auto batch = loader.next()) {
      loss_sum += trainer.step(batch->images, batch->labels);
      batches += 1;
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.mean_loss = batches ? loss_sum / double(batches) : 0.0;
    m.val_auc_malignant = validation_auc(trainer.params(), trainer.model_config(), manifest,
                                         data_dir, 1, &m.val_auc_benign);
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    bool improved = false;
    if (m.val_auc_malignant &&
        (!result.best_val_auc_malignant ||
         *m.val_auc_malignant > *result.best_val_auc_malignant)) {
      result.best_val_auc_malignant = m.val_auc_malignant;
      result.best_epoch = epoch;
      improved = true;
    } else if (!m.val_auc_malignant && result.best_epoch < 0) {
      result.best_epoch = epoch;  // degenerate validation split: keep first snapshot
      improved = true;
    }
    if (improved) save_checkpoint(trainer.params(), result.best_checkpoint.string(), false);

    nlohmann::ordered_json rec;
    rec["epoch"] = m.epoch;
    rec["mean_loss"] = m.mean_loss;
    rec["val_auc_malignant"] =
        m.val_auc_malignant ? nlohmann::json(*m.val_auc_malignant) : nlohmann::json(nullptr);
    rec["val_auc_benign"] =
        m.val_auc_benign ? nlohmann::json(*m.val_auc_benign) : nlohmann::json(nullptr);
    rec["seconds"] = m.seconds;
    rec["best_so_far"] = improved;
    log << rec.dump() << "\n";
    log.flush();
    result.epochs.push_back(std::move(m));
  }

  save_checkpoint(trainer.params(), result.final_checkpoint.string(), cfg.train_save_adam);
  if (result.best_epoch < 0) {
    save_checkpoint(trainer.params(), result.best_checkpoint.string(), false);
    result.best_epoch = hp.epochs - 1;
  }
  return result;
}

std::vector<SearchEntry> run_search(const RunConfig& cfg, const DatasetManifest& manifest,
                                    const fs::path& data_dir, const fs::path& out_dir,
                                    int n_models) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  Rng root(cfg.search_seed);
  std::vector<SearchEntry> entries;
  for (int i = 0; i < n_models; ++i) {
    SearchEntry e;
    e.index = i;
    e.hp = sample_hyperparams(cfg, root.fork(u64(i)).seed());
    fs::path model_dir = out_dir / ("model_" + std::to_string(i));
    TrainResult r = train_model(cfg, e.hp, manifest, data_dir, model_dir);
    e.val_auc_malignant = r.best_val_auc_malignant;
    e.checkpoint = fs::relative(r.best_checkpoint, out_dir).string();
    entries.push_back(std::move(e));
  }

  // rank for the top-k list (stable on ties by model index)
  std::vector<int> order(entries.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    double va = entries[size_t(a)].val_auc_malignant.value_or(-1.0);
    double vb = entries[size_t(b)].val_auc_malignant.value_or(-1.0);
    return va > vb;
  });

  nlohmann::ordered_json j;
  j["models"] = nlohmann::ordered_json::array();
  for (const auto& e : entries) {
    nlohmann::ordered_json m;
    m["index"] = e.index;
    m["hyperparams"] = {{"learning_rate", e.hp.learning_rate},
                        {"lambda", e.hp.lambda},
                        {"beta", e.hp.beta},
                        {"t_percent", e.hp.t_percent},
                        {"epochs", e.hp.epochs},
                        {"batch_breasts", e.hp.batch_breasts},
                        {"seed", e.hp.seed}};
    m["val_auc_malignant"] =
        e.val_auc_malignant ? nlohmann::json(*e.val_auc_malignant) : nlohmann::json(nullptr);
    m["checkpoint"] = e.checkpoint;
    j["models"].push_back(std::move(m));
  }
  nlohmann::ordered_json topk = nlohmann::ordered_json::array();
  for (int i = 0; i < std::min<int>(cfg.search_top_k, int(order.size())); ++i)
    topk.push_back(order[size_t(i)]);
  j["top_k"] = topk;
  std::ofstream os(out_dir / "search_summary.json");
  os << j.dump(1) << "\n";
  if (!os) throw DataError("cannot write search summary");
  return entries;
}

}  // namespace gmic
