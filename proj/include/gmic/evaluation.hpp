#pragma once

#include <filesystem>
#include <optional>

#include "gmic/dataset.hpp"
#include "gmic/metrics.hpp"
#include "gmic/model.hpp"

#include <json.hpp>

namespace gmic {

enum class Variant { gmic, loc, mil, noattn, random, loc_random };

Variant parse_variant(const std::string& name);
std::string variant_name(Variant v);

struct BreastRow {
  std::string breast_id;  // "<examId>-L" / "<examId>-R"
  std::array<int, 2> label{0, 0};
  std::array<double, 2> y_loc{}, y_mil{}, y{};  // fused
  std::array<double, 2> y_noattn{};
  std::array<double, 2> y_random{};  // filled when random paths were evaluated
  bool has_random = false;
};

// All prediction paths for one split, plus localization samples. One forward
// sweep serves every variant.
struct SplitEval {
  std::vector<BreastRow> rows;
  std::array<std::vector<PrfScore>, 2> prf;           // per class, images with masks
  std::array<std::vector<double>, 2> uniform_recall;  // matched-mass uniform baseline
};

struct EvalOptions {
  bool include_random = false;
  u64 random_seed = 0;
  bool localization = true;
};

SplitEval evaluate_split(const std::vector<const ParamStore*>& stores, const ModelConfig& cfg,
                         const DatasetManifest& manifest, const std::filesystem::path& data_dir,
                         Split split, const EvalOptions& opts);

std::array<double, 2> variant_scores(const BreastRow& row, Variant v);

struct LocSummary {
  double mean_precision = 0, mean_recall = 0, mean_f1 = 0;
  double mean_uniform_recall = 0;  // recall a uniform map with the same mass achieves
  i64 images = 0;
};

struct EvalReport {
  std::string variant;
  std::string split;
  std::array<std::optional<double>, 2> auc;  // nullopt when a class is absent
  std::array<LocSummary, 2> localization;
  i64 breasts = 0;
};

EvalReport make_report(const SplitEval& eval, Variant v, Split split);

nlohmann::ordered_json report_to_json(const EvalReport& report,
                                      const std::vector<std::string>& class_names);

// Predictions CSV: breastId, class, y_loc, y_mil, y, label
void write_predictions_csv(const std::vector<BreastRow>& rows,
                           const std::vector<std::string>& class_names,
                           const std::filesystem::path& path);

}  // namespace gmic
