#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qmvos/label_map.hpp"
#include "qmvos/tensor.hpp"

namespace qmvos {

// 8-bit RGB image, row-major, 3 bytes per pixel.
struct RgbImage {
  int64_t h = 0;
  int64_t w = 0;
  std::vector<uint8_t> rgb;

  RgbImage() = default;
  RgbImage(int64_t height, int64_t width)
      : h(height), w(width), rgb(static_cast<size_t>(height * width * 3), 0) {}

  bool operator==(const RgbImage& o) const { return h == o.h && w == o.w && rgb == o.rgb; }
};

// Binary PPM (P6, maxval 255) and PGM (P5, maxval 255). Readers accept
// standard netpbm whitespace and '#' comments; writers emit a canonical
// header so write -> read -> write round-trips byte-exactly.
void write_ppm(const RgbImage& img, const std::string& path);
RgbImage read_ppm(const std::string& path);
void write_pgm(const LabelMap& map, const std::string& path);
LabelMap read_pgm(const std::string& path);

// Plain-text manifest: one frame filename per line, in playback order,
// relative to the manifest's directory.
void write_manifest(const std::vector<std::string>& frame_files, const std::string& path);
std::vector<std::string> read_manifest(const std::string& path);

// 3 x H x W tensor with values in [0,1] (byte / 255).
Tensor image_to_tensor(const RgbImage& img);
RgbImage tensor_to_image(const Tensor& t);

}  // namespace qmvos
