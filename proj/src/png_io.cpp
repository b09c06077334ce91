#include "gmic/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

namespace gmic {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// compression level 1: dataset images are synthetic noise, higher levels cost
// generation time for little size gain
constexpr int kCompressionLevel = 1;

void write_gray(const std::string& path, i64 h, i64 w, int bit_depth,
                const std::vector<png_bytep>& rows) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw DataError("cannot open for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng init failed for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("png write failed: " + path);
  }
  png_init_io(png, f.get());
  png_set_compression_level(png, kCompressionLevel);
  png_set_IHDR(png, info, png_uint_32(w), png_uint_32(h), bit_depth, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);  // buffers are host little-endian
  png_write_image(png, const_cast<png_bytep*>(rows.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FilePtr file;

  explicit PngReader(const std::string& path) : file(std::fopen(path.c_str(), "rb")) {
    if (!file) throw DataError("cannot open: " + path);
    png_byte header[8];
    if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8) != 0)
      throw DataError("not a PNG file: " + path);
    png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
      png_destroy_read_struct(&png, &info, nullptr);
      throw DataError("libpng init failed for " + path);
    }
  }
  ~PngReader() { png_destroy_read_struct(&png, &info, nullptr); }
};

}  // namespace

void write_png16(const std::string& path, const ImageU16& img) {
  std::vector<png_bytep> rows(size_t(img.h));
  for (i64 y = 0; y < img.h; ++y)
    rows[size_t(y)] =
        reinterpret_cast<png_bytep>(const_cast<std::uint16_t*>(img.px.data() + y * img.w));
  write_gray(path, img.h, img.w, 16, rows);
}

void write_png8(const std::string& path, const ImageU8& img) {
  std::vector<png_bytep> rows(size_t(img.h));
  for (i64 y = 0; y < img.h; ++y)
    rows[size_t(y)] = const_cast<png_bytep>(img.px.data() + y * img.w);
  write_gray(path, img.h, img.w, 8, rows);
}

void write_png_rgb8(const std::string& path, const ImageRGB8& img) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw DataError("cannot open for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng init failed for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("png write failed: " + path);
  }
  png_init_io(png, f.get());
  png_set_compression_level(png, kCompressionLevel);
  png_set_IHDR(png, info, png_uint_32(img.w), png_uint_32(img.h), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(size_t(img.h));
  for (i64 y = 0; y < img.h; ++y)
    rows[size_t(y)] = const_cast<png_bytep>(img.px.data() + y * img.w * 3);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageU16 read_png16(const std::string& path) {
  PngReader r(path);
  if (setjmp(png_jmpbuf(r.png))) throw DataError("png read failed: " + path);
  png_init_io(r.png, r.file.get());
  png_set_sig_bytes(r.png, 8);
  png_read_info(r.png, r.info);
  if (png_get_color_type(r.png, r.info) != PNG_COLOR_TYPE_GRAY ||
      png_get_bit_depth(r.png, r.info) != 16)
    throw DataError("expected 16-bit grayscale PNG: " + path);
  png_set_swap(r.png);
  ImageU16 img;
  img.h = i64(png_get_image_height(r.png, r.info));
  img.w = i64(png_get_image_width(r.png, r.info));
  img.px.resize(size_t(img.h * img.w));
  std::vector<png_bytep> rows(size_t(img.h));
  for (i64 y = 0; y < img.h; ++y)
    rows[size_t(y)] = reinterpret_cast<png_bytep>(img.px.data() + y * img.w);
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
  return img;
}

ImageU8 read_png8(const std::string& path) {
  PngReader r(path);
  if (setjmp(png_jmpbuf(r.png))) throw DataError("png read failed: " + path);
  png_init_io(r.png, r.file.get());
  png_set_sig_bytes(r.png, 8);
  png_read_info(r.png, r.info);
  if (png_get_color_type(r.png, r.info) != PNG_COLOR_TYPE_GRAY ||
      png_get_bit_depth(r.png, r.info) != 8)
    throw DataError("expected 8-bit grayscale PNG: " + path);
  ImageU8 img;
  img.h = i64(png_get_image_height(r.png, r.info));
  img.w = i64(png_get_image_width(r.png, r.info));
  img.px.resize(size_t(img.h * img.w));
  std::vector<png_bytep> rows(size_t(img.h));
  for (i64 y = 0; y < img.h; ++y) rows[size_t(y)] = img.px.data() + y * img.w;
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
  return img;
}

}  // namespace gmic
