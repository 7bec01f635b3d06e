#pragma once

#include <string>
#include <vector>

#include "qmvos/image_io.hpp"
#include "qmvos/label_map.hpp"

namespace qmvos {

// distinct: per-object colors and shapes. similar: all objects share one
// color and shape, so appearance alone cannot tell them apart. occluding:
// objects converge on the image center and overlap mid-video, with the
// later object index winning contested pixels.
enum class Scenario { kDistinct, kSimilar, kOccluding };

Scenario scenario_from_string(const std::string& s);
std::string scenario_to_string(Scenario s);

struct SynthVideo {
  int64_t h = 0;
  int64_t w = 0;
  int n_objects = 0;
  std::vector<RgbImage> frames;
  std::vector<LabelMap> masks;
  // Per frame, per object: geometric coverage before depth resolution
  // (1 where the shape covers the pixel). masks follow by letting the
  // highest covering index win.
  std::vector<std::vector<LabelMap>> coverage;
};

// Rigid disks and rectangles with linear motion that bounces off the image
// edges. Every draw from the generator is a fixed function of the seed, so
// identical calls produce byte-identical videos.
SynthVideo gen_synthetic(uint64_t seed, int n_objects, int n_frames, int64_t h, int64_t w,
                         Scenario scenario);

}  // namespace qmvos
