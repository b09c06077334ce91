#pragma once

#include <filesystem>

#include "gmic/manifest.hpp"
#include "gmic/rng.hpp"

namespace gmic {

// Synthetic screening-exam corpus: four views per exam (two per breast),
// noise-textured breast-shaped background, planted lesions with exact masks.
// Benign lesions are smooth bright ellipses; malignant lesions are
// spiculated (star-perturbed radius) with a hard, higher-contrast edge.
struct SynthSpec {
  i64 image_h = 736;
  i64 image_w = 480;
  i64 train_exams = 2000;
  i64 val_exams = 400;
  i64 test_exams = 400;
  double benign_prevalence = 0.05;     // per breast
  double malignant_prevalence = 0.05;  // per breast
  double lesion_radius_min = 33.0;     // px; defaults put lesion area at 1-3%
  double lesion_radius_max = 58.0;     //     of the 736x480 image
  double lesion_contrast_min = 0.25;
  double lesion_contrast_max = 0.50;
  double background_texture_scale = 6.0;  // gaussian blur sigma, px
  u64 seed = 11;

  void validate() const {
    if (image_h < 32 || image_w < 32) throw ConfigError("synth: image dims too small");
    if (train_exams < 0 || val_exams < 0 || test_exams < 0)
      throw ConfigError("synth: negative exam count");
    for (double p : {benign_prevalence, malignant_prevalence})
      if (p < 0.0 || p > 1.0) throw ConfigError("synth: prevalence must be in [0,1]");
    if (lesion_radius_min <= 0 || lesion_radius_max < lesion_radius_min)
      throw ConfigError("synth: bad lesion radius range");
    if (2.0 * lesion_radius_max >= double(std::min(image_h, image_w)) / 2.0)
      throw ConfigError("synth: lesions do not fit the image");
    if (lesion_contrast_min <= 0 || lesion_contrast_max < lesion_contrast_min)
      throw ConfigError("synth: bad contrast range");
    if (background_texture_scale <= 0) throw ConfigError("synth: bad texture scale");
  }
};

// Writes images/, masks/ and manifest.json under out_dir; deterministic per
// seed (exams render independently, so generation parallelizes).
DatasetManifest generate_dataset(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace gmic
