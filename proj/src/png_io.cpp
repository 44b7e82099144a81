#include "remake/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

namespace remake {

namespace {

using Kind = DataError::Kind;

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriter() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
  }
};

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReader() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
  }
};

void write_png(const std::filesystem::path& path, int width, int height,
               int bit_depth, int color_type, const uint8_t* bytes,
               size_t row_bytes) {
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) {
    throw DataError(Kind::kIo, "cannot open for write: " + path.string());
  }
  PngWriter w;
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                  nullptr);
  if (!w.png) throw DataError(Kind::kIo, "png_create_write_struct failed");
  w.info = png_create_info_struct(w.png);
  if (!w.info) throw DataError(Kind::kIo, "png_create_info_struct failed");
  if (setjmp(png_jmpbuf(w.png))) {
    throw DataError(Kind::kIo, "png write error: " + path.string());
  }
  png_init_io(w.png, fp.get());
  png_set_IHDR(w.png, w.info, width, height, bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  if (bit_depth == 16) png_set_swap(w.png);  // in-memory is little-endian

  std::vector<png_bytep> rows(static_cast<size_t>(height));
  for (int v = 0; v < height; ++v) {
    rows[v] = const_cast<png_bytep>(bytes + static_cast<size_t>(v) * row_bytes);
  }
  png_write_image(w.png, rows.data());
  png_write_end(w.png, nullptr);
}

void read_png(const std::filesystem::path& path, int expect_color_type,
              int expect_bit_depth, int channels, int* width, int* height,
              std::vector<uint8_t>* bytes) {
  if (!std::filesystem::exists(path)) {
    throw DataError(Kind::kMissingFile, "missing file: " + path.string());
  }
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) {
    throw DataError(Kind::kIo, "cannot open for read: " + path.string());
  }
  PngReader r;
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                 nullptr);
  if (!r.png) throw DataError(Kind::kIo, "png_create_read_struct failed");
  r.info = png_create_info_struct(r.png);
  if (!r.info) throw DataError(Kind::kIo, "png_create_info_struct failed");
  if (setjmp(png_jmpbuf(r.png))) {
    throw DataError(Kind::kIo, "png read error: " + path.string());
  }
  png_init_io(r.png, fp.get());
  png_read_info(r.png, r.info);

  const int bit_depth = png_get_bit_depth(r.png, r.info);
  const int color_type = png_get_color_type(r.png, r.info);
  if (bit_depth != expect_bit_depth || color_type != expect_color_type) {
    throw DataError(Kind::kInvalidValue,
                    "unexpected png format in " + path.string() + ": depth " +
                        std::to_string(bit_depth) + ", color type " +
                        std::to_string(color_type));
  }
  if (bit_depth == 16) png_set_swap(r.png);

  *width = static_cast<int>(png_get_image_width(r.png, r.info));
  *height = static_cast<int>(png_get_image_height(r.png, r.info));
  const size_t row_bytes =
      static_cast<size_t>(*width) * channels * (expect_bit_depth / 8);
  bytes->resize(row_bytes * static_cast<size_t>(*height));
  std::vector<png_bytep> rows(static_cast<size_t>(*height));
  for (int v = 0; v < *height; ++v) {
    rows[v] = bytes->data() + static_cast<size_t>(v) * row_bytes;
  }
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
}

}  // namespace

void write_png_gray8(const std::filesystem::path& path,
                     const Image<uint8_t>& img) {
  write_png(path, img.width, img.height, 8, PNG_COLOR_TYPE_GRAY,
            img.data.data(), static_cast<size_t>(img.width));
}

void write_png_gray16(const std::filesystem::path& path,
                      const Image<uint16_t>& img) {
  write_png(path, img.width, img.height, 16, PNG_COLOR_TYPE_GRAY,
            reinterpret_cast<const uint8_t*>(img.data.data()),
            static_cast<size_t>(img.width) * 2);
}

void write_png_rgb8(const std::filesystem::path& path, const Image<Rgb8>& img) {
  write_png(path, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
            reinterpret_cast<const uint8_t*>(img.data.data()),
            static_cast<size_t>(img.width) * 3);
}

Image<uint8_t> read_png_gray8(const std::filesystem::path& path) {
  int w = 0, h = 0;
  std::vector<uint8_t> bytes;
  read_png(path, PNG_COLOR_TYPE_GRAY, 8, 1, &w, &h, &bytes);
  Image<uint8_t> img(w, h);
  std::memcpy(img.data.data(), bytes.data(), bytes.size());
  return img;
}

Image<uint16_t> read_png_gray16(const std::filesystem::path& path) {
  int w = 0, h = 0;
  std::vector<uint8_t> bytes;
  read_png(path, PNG_COLOR_TYPE_GRAY, 16, 1, &w, &h, &bytes);
  Image<uint16_t> img(w, h);
  std::memcpy(img.data.data(), bytes.data(), bytes.size());
  return img;
}

Image<Rgb8> read_png_rgb8(const std::filesystem::path& path) {
  int w = 0, h = 0;
  std::vector<uint8_t> bytes;
  read_png(path, PNG_COLOR_TYPE_RGB, 8, 3, &w, &h, &bytes);
  Image<Rgb8> img(w, h);
  std::memcpy(img.data.data(), bytes.data(), bytes.size());
  return img;
}

}  // namespace remake
