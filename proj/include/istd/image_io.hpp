#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace istd {

// Grayscale raster straight off disk: 8- or 16-bit samples, row-major.
struct GrayImage {
  int h = 0, w = 0;
  int max_value = 255;  // 255 or 65535
  std::vector<uint16_t> v;
};

// Reads an 8/16-bit grayscale PNG or PGM (P5/P2), dispatching on the file
// extension. Color, palette and alpha images are rejected.
GrayImage read_gray_image(const std::string& path);

// 8-bit grayscale PNG with fixed encoder settings, so identical pixels give
// identical bytes.
void write_gray8_png(const std::string& path, const uint8_t* data, int h,
                     int w);

}  // namespace istd
