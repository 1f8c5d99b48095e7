#include "istd/image_io.hpp"

#include <png.h>

#include <cctype>
#include <cstdio>
#include <cstring>

#include "istd/errors.hpp"

namespace istd {

namespace {

struct File {
  FILE* f = nullptr;
  explicit File(FILE* f_) : f(f_) {}
  ~File() {
    if (f) std::fclose(f);
  }
};

std::string lower_ext(const std::string& path) {
  size_t dot = path.rfind('.');
  if (dot == std::string::npos) return "";
  std::string ext = path.substr(dot + 1);
  for (auto& ch : ext) ch = static_cast<char>(std::tolower(ch));
  return ext;
}

GrayImage read_png(const std::string& path) {
  File file(std::fopen(path.c_str(), "rb"));
  if (!file.f) throw IoError("image: cannot open: " + path);

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("image: libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("image: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("image: failed to decode PNG: " + path);
  }
  png_init_io(png, file.f);
  png_read_info(png, info);

  int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("image: expected 8/16-bit grayscale PNG, got color type " +
                  std::to_string(color) + ": " + path);
  }
  if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (depth == 16) png_set_swap(png);  // big-endian on disk
  png_read_update_info(png, info);
  depth = png_get_bit_depth(png, info);

  GrayImage img;
  img.h = static_cast<int>(png_get_image_height(png, info));
  img.w = static_cast<int>(png_get_image_width(png, info));
  img.max_value = depth == 16 ? 65535 : 255;
  img.v.resize(static_cast<size_t>(img.h) * img.w);

  std::vector<uint8_t> row(png_get_rowbytes(png, info));
  for (int y = 0; y < img.h; ++y) {
    png_read_row(png, row.data(), nullptr);
    uint16_t* dst = img.v.data() + static_cast<size_t>(y) * img.w;
    if (depth == 16) {
      std::memcpy(dst, row.data(), static_cast<size_t>(img.w) * 2);
    } else {
      for (int x = 0; x < img.w; ++x) dst[x] = row[x];
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

int pgm_next_int(FILE* f, const std::string& path) {
  int ch;
  for (;;) {
    ch = std::fgetc(f);
    if (ch == '#') {
      while (ch != '\n' && ch != EOF) ch = std::fgetc(f);
    } else if (!std::isspace(ch)) {
      break;
    }
  }
  if (ch == EOF) throw IoError("image: truncated PGM header: " + path);
  int value = 0;
  while (std::isdigit(ch)) {
    value = value * 10 + (ch - '0');
    ch = std::fgetc(f);
  }
  return value;
}

GrayImage read_pgm(const std::string& path) {
  File file(std::fopen(path.c_str(), "rb"));
  if (!file.f) throw IoError("image: cannot open: " + path);
  FILE* f = file.f;
  int p = std::fgetc(f), kind = std::fgetc(f);
  if (p != 'P' || (kind != '5' && kind != '2'))
    throw IoError("image: not a P5/P2 PGM: " + path);
  GrayImage img;
  img.w = pgm_next_int(f, path);
  img.h = pgm_next_int(f, path);
  img.max_value = pgm_next_int(f, path);
  if (img.w < 1 || img.h < 1 || img.max_value < 1 || img.max_value > 65535)
    throw IoError("image: bad PGM header: " + path);
  size_t count = static_cast<size_t>(img.h) * img.w;
  img.v.resize(count);
  if (kind == '2') {
    for (size_t i = 0; i < count; ++i)
      img.v[i] = static_cast<uint16_t>(pgm_next_int(f, path));
    return img;
  }
  if (img.max_value > 255) {
    std::vector<uint8_t> raw(count * 2);
    if (std::fread(raw.data(), 1, raw.size(), f) != raw.size())
      throw IoError("image: truncated PGM data: " + path);
    for (size_t i = 0; i < count; ++i)  // big-endian per spec
      img.v[i] = static_cast<uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
  } else {
    std::vector<uint8_t> raw(count);
    if (std::fread(raw.data(), 1, raw.size(), f) != raw.size())
      throw IoError("image: truncated PGM data: " + path);
    for (size_t i = 0; i < count; ++i) img.v[i] = raw[i];
  }
  return img;
}

}  // namespace

GrayImage read_gray_image(const std::string& path) {
  std::string ext = lower_ext(path);
  if (ext == "png") return read_png(path);
  if (ext == "pgm") return read_pgm(path);
  throw IoError("image: unsupported extension '" + ext + "': " + path);
}

void write_gray8_png(const std::string& path, const uint8_t* data, int h,
                     int w) {
  File file(std::fopen(path.c_str(), "wb"));
  if (!file.f) throw IoError("image: cannot open for write: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  if (!png) throw IoError("image: libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("image: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("image: failed to encode PNG: " + path);
  }
  png_init_io(png, file.f);
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w),
               static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < h; ++y)
    png_write_row(png, const_cast<uint8_t*>(data + static_cast<size_t>(y) * w));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace istd
