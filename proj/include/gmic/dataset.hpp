#pragma once

#include <filesystem>
#include <optional>

#include "gmic/manifest.hpp"
#include "gmic/png_io.hpp"
#include "gmic/tensor.hpp"

namespace gmic {

// Center-crop (or reflect-pad when smaller, if allowed) to target dims, then
// standardize to zero mean / unit variance. A constant image maps to zeros.
Tensor normalize_image(const ImageU16& raw, i64 target_h, i64 target_w,
                       bool allow_pad = false);

// Normalized [1,1,H,W] tensor for one view; load failures name the exam and view.
Tensor load_view_tensor(const std::filesystem::path& data_dir, const ExamRecord& rec,
                        const std::string& view, i64 target_h, i64 target_w);

// Raw 16-bit pixels for one view (visualization).
ImageU16 load_view_raw(const std::filesystem::path& data_dir, const ExamRecord& rec,
                       const std::string& view);

// Binary mask for (view, class); empty optional when the record has none.
// Loaded only on request: training never touches masks.
std::optional<ImageU8> load_mask(const std::filesystem::path& data_dir, const ExamRecord& rec,
                                 const std::string& view, const std::string& cls);

}  // namespace gmic
