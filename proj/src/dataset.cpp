#include "gmic/dataset.hpp"

#include <cmath>

namespace gmic {

namespace {

constexpr double kVarianceFloor = 1e-8;

i64 reflect_index(i64 i, i64 n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

}  // namespace

Tensor normalize_image(const ImageU16& raw, i64 target_h, i64 target_w, bool allow_pad) {
  if (raw.h < 1 || raw.w < 1) throw DataError("normalize_image: empty image");
  if ((raw.h < target_h || raw.w < target_w) && !allow_pad)
    throw DataError("normalize_image: image smaller than target and padding disabled");

  Tensor out({1, 1, target_h, target_w});
  i64 off_y = (raw.h - target_h) / 2;  // negative when padding
  i64 off_x = (raw.w - target_w) / 2;
  double sum = 0.0, sum2 = 0.0;
  for (i64 y = 0; y < target_h; ++y) {
    for (i64 x = 0; x < target_w; ++x) {
      i64 sy = off_y + y, sx = off_x + x;
      if (sy < 0 || sy >= raw.h) sy = reflect_index(sy, raw.h);
      if (sx < 0 || sx >= raw.w) sx = reflect_index(sx, raw.w);
      double v = double(raw.px[size_t(sy * raw.w + sx)]) / 65535.0;
      out[y * target_w + x] = float(v);
      sum += v;
      sum2 += v * v;
    }
  }
  double n = double(target_h * target_w);
  double mean = sum / n;
  double var = std::max(0.0, sum2 / n - mean * mean);
  double inv = 1.0 / std::sqrt(var + kVarianceFloor);
  for (i64 i = 0; i < out.numel(); ++i)
    out[i] = float((double(out[i]) - mean) * inv);
  return out;
}

Tensor load_view_tensor(const std::filesystem::path& data_dir, const ExamRecord& rec,
                        const std::string& view, i64 target_h, i64 target_w) {
  auto it = rec.views.find(view);
  if (it == rec.views.end())
    throw DataError("exam " + rec.exam_id + " has no view " + view);
  try {
    ImageU16 raw = read_png16((data_dir / it->second.image_path).string());
    return normalize_image(raw, target_h, target_w);
  } catch (const DataError& e) {
    throw DataError("exam " + rec.exam_id + " view " + view + ": " + e.what());
  }
}

ImageU16 load_view_raw(const std::filesystem::path& data_dir, const ExamRecord& rec,
                       const std::string& view) {
  auto it = rec.views.find(view);
  if (it == rec.views.end())
    throw DataError("exam " + rec.exam_id + " has no view " + view);
  try {
    return read_png16((data_dir / it->second.image_path).string());
  } catch (const DataError& e) {
    throw DataError("exam " + rec.exam_id + " view " + view + ": " + e.what());
  }
}

std::optional<ImageU8> load_mask(const std::filesystem::path& data_dir, const ExamRecord& rec,
                                 const std::string& view, const std::string& cls) {
  auto it = rec.views.find(view);
  if (it == rec.views.end()) return std::nullopt;
  auto mit = it->second.mask_paths.find(cls);
  if (mit == it->second.mask_paths.end()) return std::nullopt;
  try {
    return read_png8((data_dir / mit->second).string());
  } catch (const DataError& e) {
    throw DataError("exam " + rec.exam_id + " view " + view + " mask " + cls + ": " + e.what());
  }
}

}  // namespace gmic
