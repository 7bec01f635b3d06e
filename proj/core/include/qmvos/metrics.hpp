#pragma once

#include <string>
#include <vector>

#include "qmvos/label_map.hpp"

namespace qmvos {

// Per-object region similarity J, boundary accuracy F, and their mean.
// Frame 0 carries the given annotation and is excluded from every average.
struct MetricReport {
  int64_t num_objects = 0;
  int64_t frames_evaluated = 0;
  // [object][evaluated frame]
  std::vector<std::vector<double>> j_per_frame;
  std::vector<std::vector<double>> f_per_frame;
  std::vector<double> j_per_object;
  std::vector<double> f_per_object;
  double j_mean = 0.0;
  double f_mean = 0.0;
  double jf_mean = 0.0;
};

// Intersection over union of the label-n regions. Both regions empty -> 1,
// exactly one empty -> 0.
double jaccard(const LabelMap& pred, const LabelMap& gt, int object);

// Boundary F-measure. Boundary pixels are region pixels with a 4-neighbor
// outside the region (off-image counts as outside). Matches within
// Chebyshev distance tol_radius. Both boundaries empty -> 1; P+R == 0 -> 0.
double contour_f(const LabelMap& pred, const LabelMap& gt, int object, int tol_radius);

// DAVIS convention: max(1, round(0.008 * image diagonal)).
int default_tol_radius(int64_t h, int64_t w);

// Aggregates frames 1..T-1 over objects 1..N. Per-object means over frames
// first, then the mean over objects.
MetricReport evaluate_sequence(const std::vector<LabelMap>& pred, const std::vector<LabelMap>& gt,
                               int num_objects, int tol_radius);

// Stable-key-order JSON rendering of a report.
std::string report_to_json(const MetricReport& report);

}  // namespace qmvos
