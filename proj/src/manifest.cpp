#include "gmic/manifest.hpp"

#include <fstream>

#include <json.hpp>

namespace gmic {

using nlohmann::ordered_json;

std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  throw DataError("unknown split '" + s + "'");
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  ordered_json j;
  j["schema_version"] = m.schema_version;
  j["image_height"] = m.image_h;
  j["image_width"] = m.image_w;
  j["class_names"] = m.class_names;
  j["records"] = ordered_json::array();
  for (const auto& r : m.records) {
    ordered_json rec;
    rec["exam_id"] = r.exam_id;
    rec["split"] = split_name(r.split);
    rec["labels"] = {
        {"left", {{"benign", r.label_left[0]}, {"malignant", r.label_left[1]}}},
        {"right", {{"benign", r.label_right[0]}, {"malignant", r.label_right[1]}}}};
    ordered_json views;
    for (const auto& key : kViewKeys) {
      auto it = r.views.find(key);
      if (it == r.views.end()) throw DataError("exam " + r.exam_id + " missing view " + key);
      ordered_json v;
      v["image"] = it->second.image_path;
      ordered_json masks = ordered_json::object();
      for (const auto& [cls, p] : it->second.mask_paths) masks[cls] = p;
      v["masks"] = masks;
      views[key] = v;
    }
    rec["views"] = views;
    ordered_json lesions = ordered_json::array();
    for (const auto& l : r.lesions)
      lesions.push_back({{"view", l.view},
                         {"class", l.cls},
                         {"cy", l.cy},
                         {"cx", l.cx},
                         {"area_px", l.area_px}});
    rec["lesions"] = lesions;
    j["records"].push_back(std::move(rec));
  }
  std::ofstream os(path);
  if (!os) throw DataError("cannot write manifest: " + path.string());
  os << j.dump(1) << "\n";
  if (!os) throw DataError("manifest write failed: " + path.string());
}

DatasetManifest load_manifest(const std::filesystem::path& path, bool check_files) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open manifest: " + path.string());
  ordered_json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw DataError("manifest parse error in " + path.string() + ": " + e.what());
  }
  DatasetManifest m;
  try {
    m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version != 1) throw DataError("unsupported manifest schema version");
    m.image_h = j.at("image_height").get<i64>();
    m.image_w = j.at("image_width").get<i64>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    for (const auto& rec : j.at("records")) {
      ExamRecord r;
      r.exam_id = rec.at("exam_id").get<std::string>();
      r.split = parse_split(rec.at("split").get<std::string>());
      const auto& labels = rec.at("labels");
      r.label_left = {labels.at("left").at("benign").get<int>(),
                      labels.at("left").at("malignant").get<int>()};
      r.label_right = {labels.at("right").at("benign").get<int>(),
                       labels.at("right").at("malignant").get<int>()};
      for (const auto& key : kViewKeys) {
        const auto& v = rec.at("views").at(key);
        ViewRef ref;
        ref.image_path = v.at("image").get<std::string>();
        for (const auto& [cls, p] : v.at("masks").items())
          ref.mask_paths[cls] = p.get<std::string>();
        r.views[key] = std::move(ref);
      }
      if (rec.contains("lesions"))
        for (const auto& l : rec.at("lesions"))
          r.lesions.push_back({l.at("view").get<std::string>(), l.at("class").get<std::string>(),
                               l.at("cy").get<double>(), l.at("cx").get<double>(),
                               l.at("area_px").get<double>()});
      m.records.push_back(std::move(r));
    }
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError("manifest schema error in " + path.string() + ": " + e.what());
  }

  if (check_files) {
    auto base = path.parent_path();
    for (const auto& r : m.records)
      for (const auto& [view, ref] : r.views) {
        if (!std::filesystem::exists(base / ref.image_path))
          throw DataError("missing image for exam " + r.exam_id + " view " + view + ": " +
                          ref.image_path);
        for (const auto& [cls, p] : ref.mask_paths)
          if (!std::filesystem::exists(base / p))
            throw DataError("missing mask for exam " + r.exam_id + " view " + view + ": " + p);
      }
  }
  return m;
}

}  // namespace gmic
