#include "istd/tensor.hpp"

#include <cstdio>
#include <cstring>

namespace istd {

namespace {

void put_u32(FILE* f, uint32_t x) {
  unsigned char b[4] = {static_cast<unsigned char>(x & 0xff),
                        static_cast<unsigned char>((x >> 8) & 0xff),
                        static_cast<unsigned char>((x >> 16) & 0xff),
                        static_cast<unsigned char>((x >> 24) & 0xff)};
  if (std::fwrite(b, 1, 4, f) != 4) throw IoError("tsr: short write");
}

uint32_t get_u32(FILE* f, const std::string& path) {
  unsigned char b[4];
  if (std::fread(b, 1, 4, f) != 4)
    throw IoError("tsr: truncated file: " + path);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void write_tsr(const std::string& path, const Tensor4f& t) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("tsr: cannot open for write: " + path);
  std::fwrite("TSR1", 1, 4, f);
  put_u32(f, 4u);
  put_u32(f, static_cast<uint32_t>(t.n));
  put_u32(f, static_cast<uint32_t>(t.c));
  put_u32(f, static_cast<uint32_t>(t.h));
  put_u32(f, static_cast<uint32_t>(t.w));
  static_assert(sizeof(float) == 4);
  if (!t.v.empty() &&
      std::fwrite(t.v.data(), 4, t.v.size(), f) != t.v.size()) {
    std::fclose(f);
    throw IoError("tsr: short write: " + path);
  }
  std::fclose(f);
}

Tensor4f read_tsr(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("tsr: cannot open: " + path);
  char magic[4];
  if (std::fread(magic, 1, 4, f) != 4 || std::memcmp(magic, "TSR1", 4) != 0) {
    std::fclose(f);
    throw IoError("tsr: bad magic in " + path);
  }
  try {
    uint32_t rank = get_u32(f, path);
    if (rank != 4) {
      throw IoError("tsr: unsupported rank " + std::to_string(rank) + " in " +
                    path);
    }
    uint32_t n = get_u32(f, path), c = get_u32(f, path), h = get_u32(f, path),
             w = get_u32(f, path);
    Tensor4f t(static_cast<int>(n), static_cast<int>(c), static_cast<int>(h),
               static_cast<int>(w));
    if (!t.v.empty() &&
        std::fread(t.v.data(), 4, t.v.size(), f) != t.v.size())
      throw IoError("tsr: truncated data in " + path);
    std::fclose(f);
    return t;
  } catch (...) {
    std::fclose(f);
    throw;
  }
}

}  // namespace istd
