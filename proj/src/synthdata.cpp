#include "gmic/synthdata.hpp"

#include <algorithm>
#include <cmath>

#include "gmic/png_io.hpp"
#include "gmic/threading.hpp"

namespace gmic {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct ViewGeometry {
  double cy, ay, ax;  // breast half-ellipse: center row, vertical/horizontal semi-axes
  bool mirrored;      // right-breast views anchor at the right edge
};

// Lesion parameters drawn once per breast and reused for both of its views,
// so positions are view-consistent (same relative spot in the breast).
struct LesionShape {
  double u, v;          // relative position in the breast, |(u,v)| < 1
  double radius;        // base radius, px
  double aspect;        // ellipse axis ratio
  double angle;         // ellipse rotation
  double contrast;
  double spic_amp;      // 0 for benign
  int spic_arms;
  double spic_phase;
  bool malignant;

  // boundary radius at polar angle theta (lesion frame)
  double boundary(double theta) const {
    double c = std::cos(theta - angle), s = std::sin(theta - angle);
    double a = radius, b = radius * aspect;
    double re = a * b / std::sqrt(b * b * c * c + a * a * s * s);
    return re * (1.0 + spic_amp * std::cos(spic_arms * theta + spic_phase));
  }

  double analytic_area() const {
    const int n = 4096;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      double r = boundary((i + 0.5) * 2.0 * kPi / n);
      acc += 0.5 * r * r * (2.0 * kPi / n);
    }
    return acc;
  }
};

ViewGeometry view_geometry(const std::string& view, i64 h, i64 w, Rng& rng) {
  ViewGeometry g;
  bool mlo = view.find("MLO") != std::string::npos;
  g.cy = double(h) * (mlo ? 0.54 : 0.5) * (1.0 + 0.04 * (rng.uniform() - 0.5));
  g.ay = double(h) * (mlo ? 0.47 : 0.42) * (1.0 + 0.08 * (rng.uniform() - 0.5));
  g.ax = double(w) * (mlo ? 0.78 : 0.85) * (1.0 + 0.08 * (rng.uniform() - 0.5));
  g.mirrored = view[0] == 'R';
  return g;
}

// normalized elliptic distance from the chest wall anchor; <1 inside breast
double breast_rho(const ViewGeometry& g, i64 h, i64 w, i64 y, i64 x) {
  double xx = g.mirrored ? double(w - 1 - x) : double(x);
  double dy = (double(y) - g.cy) / g.ay;
  double dx = xx / g.ax;
  return std::sqrt(dy * dy + dx * dx);
}

// separable gaussian blur, reflecting borders
void gaussian_blur(std::vector<float>& img, i64 h, i64 w, double sigma) {
  int radius = std::max(1, int(std::ceil(3.0 * sigma)));
  std::vector<float> kernel(size_t(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    double v = std::exp(-0.5 * double(i) * double(i) / (sigma * sigma));
    kernel[size_t(i + radius)] = float(v);
    sum += v;
  }
  for (auto& k : kernel) k = float(double(k) / sum);

  std::vector<float> tmp(img.size());
  auto reflect = [](i64 i, i64 n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
    return i;
  };
  for (i64 y = 0; y < h; ++y)
    for (i64 x = 0; x < w; ++x) {
      float acc = 0;
      for (int k = -radius; k <= radius; ++k)
        acc += kernel[size_t(k + radius)] * img[size_t(y * w + reflect(x + k, w))];
      tmp[size_t(y * w + x)] = acc;
    }
  for (i64 y = 0; y < h; ++y)
    for (i64 x = 0; x < w; ++x) {
      float acc = 0;
      for (int k = -radius; k <= radius; ++k)
        acc += kernel[size_t(k + radius)] * tmp[size_t(reflect(y + k, h) * w + x)];
      img[size_t(y * w + x)] = acc;
    }
}

struct RenderedLesion {
  double cy, cx;
  ImageU8 mask;
  bool any_pixel = false;
};

// adds the lesion into the intensity buffer and rasterizes its mask
RenderedLesion render_lesion(std::vector<float>& img, i64 h, i64 w, const ViewGeometry& g,
                             const LesionShape& l) {
  RenderedLesion out;
  out.mask.h = h;
  out.mask.w = w;
  out.mask.px.assign(size_t(h * w), 0);

  // place the relative (u,v) inside the breast, keeping the whole shape at
  // least `reach` away from every image edge so masks never clip
  double reach = l.radius * (1.0 + l.spic_amp) * 1.1;
  double span_y = std::max(0.0, std::min(g.ay, double(h) / 2.0) - reach) * 0.85;
  double cy = std::clamp(g.cy + l.u * span_y, reach + 1.0, double(h) - reach - 2.0);
  double cx_anchor = reach + 1.0 + std::abs(l.v) * std::max(0.0, g.ax * 0.85 - 2.0 * (reach + 1.0));
  cx_anchor = std::min(cx_anchor, double(w) - reach - 2.0);
  double cx = g.mirrored ? double(w - 1) - cx_anchor : cx_anchor;
  out.cy = cy;
  out.cx = cx;

  i64 y0 = std::max<i64>(0, i64(cy - reach - 2)), y1 = std::min(h, i64(cy + reach + 3));
  i64 x0 = std::max<i64>(0, i64(cx - reach - 2)), x1 = std::min(w, i64(cx + reach + 3));
  for (i64 y = y0; y < y1; ++y) {
    for (i64 x = x0; x < x1; ++x) {
      double dy = double(y) - cy, dx = double(x) - cx;
      double r = std::sqrt(dy * dy + dx * dx);
      if (r > reach) continue;
      double theta = std::atan2(dy, g.mirrored ? -dx : dx);
      double rb = l.boundary(theta);
      double rho = r / rb;
      if (rho <= 1.0) {
        out.mask.px[size_t(y * w + x)] = 255;
        out.any_pixel = true;
        double profile = l.malignant ? 0.55 + 0.45 * (1.0 - rho * rho)  // hard edge
                                     : std::max(0.0, 1.0 - rho * rho);  // smooth falloff
        img[size_t(y * w + x)] += float(l.contrast * profile);
      }
    }
  }
  return out;
}

}  // namespace

DatasetManifest generate_dataset(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  fs::create_directories(out_dir / "masks", ec);
  if (!fs::exists(out_dir / "images") || !fs::exists(out_dir / "masks"))
    throw DataError("cannot create dataset directories under " + out_dir.string());

  i64 total = spec.train_exams + spec.val_exams + spec.test_exams;
  i64 h = spec.image_h, w = spec.image_w;
  Rng master(spec.seed);
  std::vector<ExamRecord> outputs(size_t(total));

  parallel_for(total, [&](i64 e) {
    Rng exam_rng = master.fork(u64(e));
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "exam_%06lld", static_cast<long long>(e));
    ExamRecord rec;
    rec.exam_id = idbuf;
    rec.split = e < spec.train_exams                  ? Split::train
                : e < spec.train_exams + spec.val_exams ? Split::validation
                                                        : Split::test;

    // per-breast labels and lesion shapes (shared across the breast's views)
    std::array<std::array<int, 2>, 2> labels{};
    std::array<std::array<LesionShape, 2>, 2> shapes{};
    for (int side = 0; side < 2; ++side) {
      Rng breast_rng = exam_rng.fork(100 + u64(side));
      for (int cls = 0; cls < 2; ++cls) {
        double p = cls == 0 ? spec.benign_prevalence : spec.malignant_prevalence;
        labels[size_t(side)][size_t(cls)] = breast_rng.uniform() < p ? 1 : 0;
        LesionShape& l = shapes[size_t(side)][size_t(cls)];
        double ang = breast_rng.uniform(0, 2 * kPi);
        double rad = breast_rng.uniform(0.15, 0.85);
        l.u = rad * std::cos(ang);
        l.v = rad * std::sin(ang);
        l.radius = breast_rng.uniform(spec.lesion_radius_min, spec.lesion_radius_max);
        l.aspect = breast_rng.uniform(0.7, 1.0);
        l.angle = breast_rng.uniform(0, kPi);
        l.contrast = breast_rng.uniform(spec.lesion_contrast_min, spec.lesion_contrast_max);
        l.malignant = cls == 1;
        if (l.malignant) {
          l.contrast *= 1.4;  // higher edge contrast
          l.spic_amp = breast_rng.uniform(0.25, 0.4);
          l.spic_arms = 7 + int(breast_rng.uniform_int(6));
          l.spic_phase = breast_rng.uniform(0, 2 * kPi);
        } else {
          l.spic_amp = 0.0;
          l.spic_arms = 1;
          l.spic_phase = 0.0;
        }
      }
    }
    rec.label_left = labels[0];
    rec.label_right = labels[1];

    for (int vi = 0; vi < 4; ++vi) {
      const std::string view = kViewKeys[size_t(vi)];
      int side = view[0] == 'L' ? 0 : 1;
      Rng view_rng = exam_rng.fork(200 + u64(vi));
      ViewGeometry geom = view_geometry(view, h, w, view_rng);

      std::vector<float> img(size_t(h * w));
      for (auto& v : img) v = float(view_rng.normal());
      gaussian_blur(img, h, w, spec.background_texture_scale);
      // normalize texture to a known amplitude, then compose with the ramp
      double tex_rms = 0.0;
      for (float v : img) tex_rms += double(v) * double(v);
      tex_rms = std::sqrt(tex_rms / double(h * w)) + 1e-9;
      for (i64 y = 0; y < h; ++y)
        for (i64 x = 0; x < w; ++x) {
          double rho = breast_rho(geom, h, w, y, x);
          double tex = double(img[size_t(y * w + x)]) / tex_rms;
          double value;
          if (rho < 1.0)
            value = 0.42 * (1.0 - 0.55 * rho * rho) + 0.085 * tex;
          else
            value = 0.03 + 0.008 * tex;
          img[size_t(y * w + x)] = float(value);
        }

      ViewRef ref;
      ref.image_path = "images/" + rec.exam_id + "_" + view + ".png";
      for (int cls = 0; cls < 2; ++cls) {
        if (!labels[size_t(side)][size_t(cls)]) continue;
        const LesionShape& shape = shapes[size_t(side)][size_t(cls)];
        RenderedLesion rl = render_lesion(img, h, w, geom, shape);
        std::string mask_rel =
            "masks/" + rec.exam_id + "_" + view + "_" + kClassNames[size_t(cls)] + ".png";
        write_png8((out_dir / mask_rel).string(), rl.mask);
        ref.mask_paths[kClassNames[size_t(cls)]] = mask_rel;
        rec.lesions.push_back(
            {view, kClassNames[size_t(cls)], rl.cy, rl.cx, shape.analytic_area()});
      }

      ImageU16 png;
      png.h = h;
      png.w = w;
      png.px.resize(size_t(h * w));
      for (size_t i = 0; i < png.px.size(); ++i) {
        double v = std::clamp(double(img[i]), 0.0, 1.0);
        png.px[i] = std::uint16_t(std::lround(v * 65535.0));
      }
      write_png16((out_dir / ref.image_path).string(), png);
      rec.views[view] = std::move(ref);
    }
    outputs[size_t(e)] = std::move(rec);
  });

  DatasetManifest m;
  m.image_h = h;
  m.image_w = w;
  m.records = std::move(outputs);
  save_manifest(m, out_dir / "manifest.json");
  return m;
}

}  // namespace gmic
