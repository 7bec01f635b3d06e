#include "qmvos/synth.hpp"

#include <cmath>

#include "qmvos/rng.hpp"

namespace qmvos {

namespace {

struct MovingShape {
  bool is_disk = true;
  double rx = 0.0;  // half extents; rx == ry for disks
  double ry = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  uint8_t color[3] = {0, 0, 0};

  bool covers(double px, double py) const {
    const double dx = px - cx, dy = py - cy;
    if (is_disk) return dx * dx + dy * dy <= rx * rx;
    return std::abs(dx) <= rx && std::abs(dy) <= ry;
  }

  void advance(double w, double h) {
    cx += vx;
    cy += vy;
    if (cx - rx < 0.0) {
      cx = 2.0 * rx - cx;
      vx = -vx;
    }
    if (cx + rx > w) {
      cx = 2.0 * (w - rx) - cx;
      vx = -vx;
    }
    if (cy - ry < 0.0) {
      cy = 2.0 * ry - cy;
      vy = -vy;
    }
    if (cy + ry > h) {
      cy = 2.0 * (h - ry) - cy;
      vy = -vy;
    }
  }
};

void pick_color(SplitMix64& rng, uint8_t out[3]) {
  for (int c = 0; c < 3; ++c) out[c] = static_cast<uint8_t>(96 + rng.next_below(144));
}

int color_dist(const uint8_t a[3], const uint8_t b[3]) {
  int d = 0;
  for (int c = 0; c < 3; ++c) d = std::max(d, std::abs(int(a[c]) - int(b[c])));
  return d;
}

}  // namespace

Scenario scenario_from_string(const std::string& s) {
  if (s == "distinct") return Scenario::kDistinct;
  if (s == "similar") return Scenario::kSimilar;
  if (s == "occluding") return Scenario::kOccluding;
  throw config_error("scenario: expected distinct, similar or occluding, got '" + s + "'");
}

std::string scenario_to_string(Scenario s) {
  switch (s) {
    case Scenario::kDistinct: return "distinct";
    case Scenario::kSimilar: return "similar";
    case Scenario::kOccluding: return "occluding";
  }
  return "distinct";
}

SynthVideo gen_synthetic(uint64_t seed, int n_objects, int n_frames, int64_t h, int64_t w,
                         Scenario scenario) {
  if (h < 16 || w < 16 || h % 16 != 0 || w % 16 != 0) {
    throw input_error("frame extents must be positive multiples of 16, got " + std::to_string(h) +
                      "x" + std::to_string(w));
  }
  if (n_objects < 1 || n_objects > 255) throw input_error("n_objects must be in 1..255");
  if (n_frames < 1) throw input_error("n_frames must be >= 1");

  SplitMix64 rng(seed);
  const double dim = static_cast<double>(std::min(h, w));
  const double wd = static_cast<double>(w), hd = static_cast<double>(h);

  uint8_t bg[3];
  for (int c = 0; c < 3; ++c) bg[c] = static_cast<uint8_t>(16 + rng.next_below(48));

  std::vector<MovingShape> shapes(static_cast<size_t>(n_objects));
  for (int i = 0; i < n_objects; ++i) {
    MovingShape& sh = shapes[static_cast<size_t>(i)];
    if (scenario == Scenario::kSimilar && i > 0) {
      // Appearance copied from object 1; only the trajectory differs.
      sh.is_disk = shapes[0].is_disk;
      sh.rx = shapes[0].rx;
      sh.ry = shapes[0].ry;
      sh.color[0] = shapes[0].color[0];
      sh.color[1] = shapes[0].color[1];
      sh.color[2] = shapes[0].color[2];
    } else {
      sh.is_disk = rng.next_below(2) == 0;
      if (scenario == Scenario::kOccluding) {
        sh.rx = dim * rng.uniform(0.10, 0.14);
      } else {
        sh.rx = dim * rng.uniform(0.13, 0.19);
      }
      sh.ry = sh.is_disk ? sh.rx : dim * rng.uniform(0.10, 0.16);
      if (sh.is_disk) sh.ry = sh.rx;
      pick_color(rng, sh.color);
      for (int tries = 0; tries < 64; ++tries) {
        bool ok = color_dist(sh.color, bg) >= 40;
        for (int j = 0; ok && j < i; ++j) {
          ok = color_dist(sh.color, shapes[static_cast<size_t>(j)].color) >= 40;
        }
        if (ok) break;
        pick_color(rng, sh.color);
      }
    }

    if (scenario == Scenario::kOccluding) {
      // Start on a ring and head for the center so paths cross mid-video.
      const double angle =
          2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n_objects) +
          rng.uniform(-0.15, 0.15);
      const double dist = 0.33 * dim;
      sh.cx = wd / 2.0 + dist * std::cos(angle);
      sh.cy = hd / 2.0 + dist * std::sin(angle);
      const int t_cross = std::max(1, n_frames / 2);
      sh.vx = (wd / 2.0 - sh.cx) / static_cast<double>(t_cross);
      sh.vy = (hd / 2.0 - sh.cy) / static_cast<double>(t_cross);
    } else {
      for (int tries = 0; tries < 256; ++tries) {
        sh.cx = rng.uniform(sh.rx + 1.0, wd - sh.rx - 1.0);
        sh.cy = rng.uniform(sh.ry + 1.0, hd - sh.ry - 1.0);
        bool ok = true;
        for (int j = 0; ok && j < i; ++j) {
          const MovingShape& o = shapes[static_cast<size_t>(j)];
          const double dx = sh.cx - o.cx, dy = sh.cy - o.cy;
          const double need = std::max(sh.rx, sh.ry) + std::max(o.rx, o.ry) + 2.0;
          ok = dx * dx + dy * dy >= need * need;
        }
        if (ok) break;
      }
      const double speed = rng.uniform(1.0, 2.5) * dim / 64.0;
      const double dir = rng.uniform(0.0, 2.0 * M_PI);
      sh.vx = speed * std::cos(dir);
      sh.vy = speed * std::sin(dir);
    }
  }

  if (scenario == Scenario::kSimilar && n_objects > 1 && n_frames > 2) {
    // Identical objects that never meet are easy to keep apart by position
    // alone. Route each object through the next one's start region so the
    // look-alikes cross paths mid-video and identity has to be carried
    // through the encounter.
    std::vector<double> sx(static_cast<size_t>(n_objects)), sy(static_cast<size_t>(n_objects));
    for (int i = 0; i < n_objects; ++i) {
      sx[static_cast<size_t>(i)] = shapes[static_cast<size_t>(i)].cx;
      sy[static_cast<size_t>(i)] = shapes[static_cast<size_t>(i)].cy;
    }
    for (int i = 0; i < n_objects; ++i) {
      MovingShape& sh = shapes[static_cast<size_t>(i)];
      const int j = (i + 1) % n_objects;
      const double miss = sh.rx * rng.uniform(0.0, 0.6);
      const double side = rng.next_below(2) == 0 ? -1.0 : 1.0;
      const double tx = sx[static_cast<size_t>(j)] + side * miss;
      const double ty = sy[static_cast<size_t>(j)] + rng.uniform(-0.5, 0.5) * miss;
      const double arrive = static_cast<double>(n_frames) * rng.uniform(0.5, 0.75);
      sh.vx = (tx - sh.cx) / arrive;
      sh.vy = (ty - sh.cy) / arrive;
    }
  }

  SynthVideo video;
  video.h = h;
  video.w = w;
  video.n_objects = n_objects;
  video.frames.reserve(static_cast<size_t>(n_frames));
  video.masks.reserve(static_cast<size_t>(n_frames));
  for (int t = 0; t < n_frames; ++t) {
    if (t > 0) {
      for (auto& sh : shapes) sh.advance(wd, hd);
    }
    RgbImage img(h, w);
    LabelMap map(h, w);
    std::vector<LabelMap> cover(static_cast<size_t>(n_objects), LabelMap(h, w));
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        const size_t p = static_cast<size_t>(y * w + x);
        img.rgb[p * 3 + 0] = bg[0];
        img.rgb[p * 3 + 1] = bg[1];
        img.rgb[p * 3 + 2] = bg[2];
      }
    }
    for (int i = 0; i < n_objects; ++i) {
      const MovingShape& sh = shapes[static_cast<size_t>(i)];
      const int64_t y0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(sh.cy - sh.ry)) - 1);
      const int64_t y1 = std::min<int64_t>(h - 1, static_cast<int64_t>(std::ceil(sh.cy + sh.ry)) + 1);
      const int64_t x0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(sh.cx - sh.rx)) - 1);
      const int64_t x1 = std::min<int64_t>(w - 1, static_cast<int64_t>(std::ceil(sh.cx + sh.rx)) + 1);
      for (int64_t y = y0; y <= y1; ++y) {
        for (int64_t x = x0; x <= x1; ++x) {
          if (!sh.covers(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5)) continue;
          const size_t p = static_cast<size_t>(y * w + x);
          img.rgb[p * 3 + 0] = sh.color[0];
          img.rgb[p * 3 + 1] = sh.color[1];
          img.rgb[p * 3 + 2] = sh.color[2];
          map.v[p] = static_cast<uint8_t>(i + 1);
          cover[static_cast<size_t>(i)].v[p] = 1;
        }
      }
    }
    video.frames.push_back(std::move(img));
    video.masks.push_back(std::move(map));
    video.coverage.push_back(std::move(cover));
  }
  return video;
}

}  // namespace qmvos
