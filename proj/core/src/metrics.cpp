#include "qmvos/metrics.hpp"

#include <cmath>

#include "json.hpp"

namespace qmvos {

namespace {

void check_shapes(const LabelMap& pred, const LabelMap& gt) {
  if (pred.h != gt.h || pred.w != gt.w) {
    throw shape_error("metric inputs disagree: " + std::to_string(pred.h) + "x" +
                      std::to_string(pred.w) + " vs " + std::to_string(gt.h) + "x" +
                      std::to_string(gt.w));
  }
}

std::vector<uint8_t> region_of(const LabelMap& m, int object) {
  std::vector<uint8_t> r(m.v.size());
  for (size_t i = 0; i < m.v.size(); ++i) r[i] = m.v[i] == object ? 1 : 0;
  return r;
}

// Region pixels with a 4-neighbor outside the region; neighbors beyond the
// image edge count as outside.
std::vector<uint8_t> boundary_of(const std::vector<uint8_t>& region, int64_t h, int64_t w) {
  std::vector<uint8_t> b(region.size(), 0);
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      if (!region[static_cast<size_t>(y * w + x)]) continue;
      const bool edge = y == 0 || y == h - 1 || x == 0 || x == w - 1;
      if (edge || !region[static_cast<size_t>((y - 1) * w + x)] ||
          !region[static_cast<size_t>((y + 1) * w + x)] ||
          !region[static_cast<size_t>(y * w + x - 1)] ||
          !region[static_cast<size_t>(y * w + x + 1)]) {
        b[static_cast<size_t>(y * w + x)] = 1;
      }
    }
  }
  return b;
}

// Fraction of set-A boundary pixels with a set-B boundary pixel within
// Chebyshev distance tol. Returns {matched, total}.
std::pair<int64_t, int64_t> match_count(const std::vector<uint8_t>& a,
                                        const std::vector<uint8_t>& b, int64_t h, int64_t w,
                                        int tol) {
  int64_t matched = 0, total = 0;
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      if (!a[static_cast<size_t>(y * w + x)]) continue;
      ++total;
      bool hit = false;
      for (int64_t dy = -tol; dy <= tol && !hit; ++dy) {
        const int64_t yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int64_t dx = -tol; dx <= tol; ++dx) {
          const int64_t xx = x + dx;
          if (xx < 0 || xx >= w) continue;
          if (b[static_cast<size_t>(yy * w + xx)]) {
            hit = true;
            break;
          }
        }
      }
      if (hit) ++matched;
    }
  }
  return {matched, total};
}

}  // namespace

double jaccard(const LabelMap& pred, const LabelMap& gt, int object) {
  check_shapes(pred, gt);
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < pred.v.size(); ++i) {
    const bool p = pred.v[i] == object;
    const bool g = gt.v[i] == object;
    inter += p && g;
    uni += p || g;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double contour_f(const LabelMap& pred, const LabelMap& gt, int object, int tol_radius) {
  check_shapes(pred, gt);
  const auto bp = boundary_of(region_of(pred, object), pred.h, pred.w);
  const auto bg = boundary_of(region_of(gt, object), gt.h, gt.w);
  const auto [p_hit, p_total] = match_count(bp, bg, pred.h, pred.w, tol_radius);
  const auto [r_hit, r_total] = match_count(bg, bp, pred.h, pred.w, tol_radius);
  if (p_total == 0 && r_total == 0) return 1.0;
  const double precision = p_total == 0 ? 0.0 : static_cast<double>(p_hit) / p_total;
  const double recall = r_total == 0 ? 0.0 : static_cast<double>(r_hit) / r_total;
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

int default_tol_radius(int64_t h, int64_t w) {
  const double diag = std::sqrt(static_cast<double>(h * h + w * w));
  return std::max(1, static_cast<int>(std::lround(0.008 * diag)));
}

MetricReport evaluate_sequence(const std::vector<LabelMap>& pred, const std::vector<LabelMap>& gt,
                               int num_objects, int tol_radius) {
  if (pred.size() != gt.size()) {
    throw input_error("prediction and ground truth frame counts differ (" +
                      std::to_string(pred.size()) + " vs " + std::to_string(gt.size()) + ")");
  }
  if (pred.size() < 2) throw input_error("need at least two frames to evaluate");
  if (num_objects < 1) throw input_error("need at least one object to evaluate");
  MetricReport rep;
  rep.num_objects = num_objects;
  rep.frames_evaluated = static_cast<int64_t>(pred.size()) - 1;
  rep.j_per_frame.assign(static_cast<size_t>(num_objects), {});
  rep.f_per_frame.assign(static_cast<size_t>(num_objects), {});
  for (int n = 1; n <= num_objects; ++n) {
    auto& jrow = rep.j_per_frame[static_cast<size_t>(n - 1)];
    auto& frow = rep.f_per_frame[static_cast<size_t>(n - 1)];
    for (size_t t = 1; t < pred.size(); ++t) {
      jrow.push_back(jaccard(pred[t], gt[t], n));
      frow.push_back(contour_f(pred[t], gt[t], n, tol_radius));
    }
    double js = 0.0, fs = 0.0;
    for (double v : jrow) js += v;
    for (double v : frow) fs += v;
    rep.j_per_object.push_back(js / static_cast<double>(jrow.size()));
    rep.f_per_object.push_back(fs / static_cast<double>(frow.size()));
  }
  double jm = 0.0, fm = 0.0;
  for (double v : rep.j_per_object) jm += v;
  for (double v : rep.f_per_object) fm += v;
  rep.j_mean = jm / static_cast<double>(num_objects);
  rep.f_mean = fm / static_cast<double>(num_objects);
  rep.jf_mean = 0.5 * (rep.j_mean + rep.f_mean);
  return rep;
}

std::string report_to_json(const MetricReport& report) {
  nlohmann::ordered_json j;
  j["num_objects"] = report.num_objects;
  j["frames_evaluated"] = report.frames_evaluated;
  j["J"] = report.j_mean;
  j["F"] = report.f_mean;
  j["J&F"] = report.jf_mean;
  nlohmann::ordered_json objs = nlohmann::ordered_json::array();
  for (int64_t n = 0; n < report.num_objects; ++n) {
    nlohmann::ordered_json o;
    o["object"] = n + 1;
    o["J_mean"] = report.j_per_object[static_cast<size_t>(n)];
    o["F_mean"] = report.f_per_object[static_cast<size_t>(n)];
    o["J"] = report.j_per_frame[static_cast<size_t>(n)];
    o["F"] = report.f_per_frame[static_cast<size_t>(n)];
    objs.push_back(std::move(o));
  }
  j["per_object"] = std::move(objs);
  return j.dump(2) + "\n";
}

}  // namespace qmvos
