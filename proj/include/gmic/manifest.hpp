#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gmic/common.hpp"

namespace gmic {

enum class Split { train, validation, test };

std::string split_name(Split s);
Split parse_split(const std::string& s);

inline const std::array<const char*, 4> kViewKeys{"L-CC", "L-MLO", "R-CC", "R-MLO"};
inline const std::array<const char*, 2> kClassNames{"benign", "malignant"};

struct ViewRef {
  std::string image_path;                        // relative to the manifest dir
  std::map<std::string, std::string> mask_paths;  // class name -> relative path
};

// Generator-side annotation, used by evaluation debugging and tests only.
struct LesionInfo {
  std::string view;
  std::string cls;
  double cy = 0, cx = 0;
  double area_px = 0;  // analytic area of the planted shape
};

struct ExamRecord {
  std::string exam_id;
  Split split = Split::train;
  // per-breast labels over {benign, malignant}
  std::array<int, 2> label_left{0, 0};
  std::array<int, 2> label_right{0, 0};
  std::map<std::string, ViewRef> views;  // keyed by kViewKeys
  std::vector<LesionInfo> lesions;

  const std::array<int, 2>& label(int side) const { return side == 0 ? label_left : label_right; }
  bool positive() const {
    return label_left[0] || label_left[1] || label_right[0] || label_right[1];
  }
};

struct DatasetManifest {
  int schema_version = 1;
  i64 image_h = 0, image_w = 0;
  std::vector<std::string> class_names{"benign", "malignant"};
  std::vector<ExamRecord> records;

  std::vector<const ExamRecord*> split_records(Split s) const {
    std::vector<const ExamRecord*> out;
    for (const auto& r : records)
      if (r.split == s) out.push_back(&r);
    return out;
  }
};

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);

// check_files verifies every referenced image/mask exists (DataError if not)
DatasetManifest load_manifest(const std::filesystem::path& path, bool check_files = true);

}  // namespace gmic
