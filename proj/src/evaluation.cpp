#include "gmic/evaluation.hpp"

#include <fstream>

#include "gmic/threading.hpp"

namespace gmic {

Variant parse_variant(const std::string& name) {
  if (name == "gmic") return Variant::gmic;
  if (name == "loc") return Variant::loc;
  if (name == "mil") return Variant::mil;
  if (name == "noattn") return Variant::noattn;
  if (name == "random") return Variant::random;
  if (name == "loc-random") return Variant::loc_random;
  throw ConfigError("unknown variant '" + name + "'");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::gmic: return "gmic";
    case Variant::loc: return "loc";
    case Variant::mil: return "mil";
    case Variant::noattn: return "noattn";
    case Variant::random: return "random";
    case Variant::loc_random: return "loc-random";
  }
  return "gmic";
}

namespace {

struct ViewEval {
  // ensemble means over models, per class
  std::array<double, 2> y_loc{}, y_mil{}, y_noattn{}, y_random{};
  std::array<std::optional<PrfScore>, 2> prf;
  std::array<std::optional<double>, 2> uniform_recall;
};

}  // namespace

SplitEval evaluate_split(const std::vector<const ParamStore*>& stores, const ModelConfig& cfg,
                         const DatasetManifest& manifest, const std::filesystem::path& data_dir,
                         Split split, const EvalOptions& opts) {
  if (stores.empty()) throw ConfigError("evaluate_split: need at least one model");
  auto records = manifest.split_records(split);
  int classes = cfg.num_classes();
  if (classes != 2) throw ConfigError("evaluate_split: expects two classes");

  std::vector<std::array<ViewEval, 4>> per_exam(records.size());

  // exams are independent; reductions below walk results in exam order
  parallel_for(i64(records.size()), [&](i64 e) {
    const ExamRecord& rec = *records[size_t(e)];
    for (int vi = 0; vi < 4; ++vi) {
      const std::string view = kViewKeys[size_t(vi)];
      Tensor image = load_view_tensor(data_dir, rec, view, manifest.image_h, manifest.image_w);
      ViewEval ve;
      TensorD mean_saliency;
      for (size_t m = 0; m < stores.size(); ++m) {
        PredictOptions popts;
        popts.include_random = opts.include_random;
        popts.random_seed = splitmix64(opts.random_seed ^ (u64(e) * 4 + u64(vi)));
        auto bp = batch_predict(*const_cast<ParamStore*>(stores[m]), cfg, {image}, popts);
        const Prediction& p = bp.preds[0];
        for (int c = 0; c < classes; ++c) {
          ve.y_loc[size_t(c)] += p.y_loc[size_t(c)] / double(stores.size());
          ve.y_mil[size_t(c)] += p.y_mil[size_t(c)] / double(stores.size());
          ve.y_noattn[size_t(c)] += p.y_mil_noattn[size_t(c)] / double(stores.size());
          if (opts.include_random)
            ve.y_random[size_t(c)] += p.y_mil_random[size_t(c)] / double(stores.size());
        }
        if (opts.localization) {
          const auto& a = bp.saliency[0];  // [C,h,w]
          if (mean_saliency.numel() == 0) mean_saliency = TensorD::zeros(a.shape);
          for (i64 i = 0; i < a.numel(); ++i)
            mean_saliency[i] += double(a[i]) / double(stores.size());
        }
      }
      if (opts.localization) {
        i64 gh = mean_saliency.dim(1), gw = mean_saliency.dim(2);
        for (int c = 0; c < classes; ++c) {
          auto mask = load_mask(data_dir, rec, view, manifest.class_names[size_t(c)]);
          if (!mask) continue;
          bool nonempty = false;
          for (auto px : mask->px)
            if (px) {
              nonempty = true;
              break;
            }
          if (!nonempty) continue;
          TensorD grid({gh, gw});
          std::copy(mean_saliency.data() + c * gh * gw, mean_saliency.data() + (c + 1) * gh * gw,
                    grid.data());
          TensorD up = upsample_nearest(grid, manifest.image_h, manifest.image_w);
          ve.prf[size_t(c)] = continuous_prf(up, *mask);
          double mean_a = 0.0;
          for (i64 i = 0; i < up.numel(); ++i) mean_a += up[i];
          ve.uniform_recall[size_t(c)] = mean_a / double(up.numel());
        }
      }
      per_exam[size_t(e)][size_t(vi)] = std::move(ve);
    }
  });

  SplitEval out;
  for (size_t e = 0; e < records.size(); ++e) {
    const ExamRecord& rec = *records[e];
    // view order in kViewKeys: L-CC, L-MLO, R-CC, R-MLO
    for (int side = 0; side < 2; ++side) {
      const ViewEval& cc = per_exam[e][size_t(side * 2)];
      const ViewEval& mlo = per_exam[e][size_t(side * 2 + 1)];
      BreastRow row;
      row.breast_id = rec.exam_id + (side == 0 ? "-L" : "-R");
      row.label = rec.label(side);
      row.has_random = opts.include_random;
      for (int c = 0; c < classes; ++c) {
        row.y_loc[size_t(c)] = 0.5 * (cc.y_loc[size_t(c)] + mlo.y_loc[size_t(c)]);
        row.y_mil[size_t(c)] = 0.5 * (cc.y_mil[size_t(c)] + mlo.y_mil[size_t(c)]);
        row.y_noattn[size_t(c)] = 0.5 * (cc.y_noattn[size_t(c)] + mlo.y_noattn[size_t(c)]);
        row.y_random[size_t(c)] = 0.5 * (cc.y_random[size_t(c)] + mlo.y_random[size_t(c)]);
        row.y[size_t(c)] = 0.5 * (row.y_loc[size_t(c)] + row.y_mil[size_t(c)]);
      }
      out.rows.push_back(std::move(row));
    }
    for (int vi = 0; vi < 4; ++vi)
      for (int c = 0; c < classes; ++c) {
        const ViewEval& ve = per_exam[e][size_t(vi)];
        if (ve.prf[size_t(c)]) {
          out.prf[size_t(c)].push_back(*ve.prf[size_t(c)]);
          out.uniform_recall[size_t(c)].push_back(*ve.uniform_recall[size_t(c)]);
        }
      }
  }
  return out;
}

std::array<double, 2> variant_scores(const BreastRow& row, Variant v) {
  switch (v) {
    case Variant::gmic: return row.y;
    case Variant::loc: return row.y_loc;
    case Variant::mil: return row.y_mil;
    case Variant::noattn: return row.y_noattn;
    case Variant::random:
      if (!row.has_random) throw ConfigError("random paths were not evaluated");
      return row.y_random;
    case Variant::loc_random: {
      if (!row.has_random) throw ConfigError("random paths were not evaluated");
      return {0.5 * (row.y_loc[0] + row.y_random[0]), 0.5 * (row.y_loc[1] + row.y_random[1])};
    }
  }
  return row.y;
}

EvalReport make_report(const SplitEval& eval, Variant v, Split split) {
  EvalReport rep;
  rep.variant = variant_name(v);
  rep.split = split_name(split);
  rep.breasts = i64(eval.rows.size());
  for (int c = 0; c < 2; ++c) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& row : eval.rows) {
      scores.push_back(variant_scores(row, v)[size_t(c)]);
      labels.push_back(row.label[size_t(c)]);
    }
    try {
      rep.auc[size_t(c)] = roc_auc(scores, labels);
    } catch (const NumericError&) {
      rep.auc[size_t(c)] = std::nullopt;  // single-class split
    }
    LocSummary& loc = rep.localization[size_t(c)];
    loc.images = i64(eval.prf[size_t(c)].size());
    for (const auto& p : eval.prf[size_t(c)]) {
      loc.mean_precision += p.precision / double(loc.images);
      loc.mean_recall += p.recall / double(loc.images);
      // reported F1 is the mean of per-image F1 scores
      loc.mean_f1 += p.f1 / double(loc.images);
    }
    for (double u : eval.uniform_recall[size_t(c)])
      loc.mean_uniform_recall += u / double(std::max<i64>(1, loc.images));
  }
  return rep;
}

nlohmann::ordered_json report_to_json(const EvalReport& report,
                                      const std::vector<std::string>& class_names) {
  nlohmann::ordered_json j;
  j["variant"] = report.variant;
  j["split"] = report.split;
  j["breasts"] = report.breasts;
  nlohmann::ordered_json auc;
  for (size_t c = 0; c < class_names.size(); ++c) {
    if (report.auc[c])
      auc[class_names[c]] = *report.auc[c];
    else
      auc[class_names[c]] = nullptr;
  }
  j["auc"] = auc;
  nlohmann::ordered_json loc;
  for (size_t c = 0; c < class_names.size(); ++c) {
    const auto& l = report.localization[c];
    loc[class_names[c]] = {{"precision", l.mean_precision},
                           {"recall", l.mean_recall},
                           {"f1", l.mean_f1},
                           {"uniform_recall", l.mean_uniform_recall},
                           {"images", l.images}};
  }
  j["localization"] = loc;
  return j;
}

void write_predictions_csv(const std::vector<BreastRow>& rows,
                           const std::vector<std::string>& class_names,
                           const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write predictions csv: " + path.string());
  os << "breastId,class,y_loc,y_mil,y,label\n";
  os.precision(9);
  for (const auto& row : rows)
    for (size_t c = 0; c < class_names.size(); ++c)
      os << row.breast_id << ',' << class_names[c] << ',' << row.y_loc[c] << ',' << row.y_mil[c]
         << ',' << row.y[c] << ',' << row.label[c] << "\n";
  if (!os) throw DataError("predictions csv write failed: " + path.string());
}

}  // namespace gmic
