// Detection-to-annotation matching, F1 metrics, and the radius sweep.
#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "cytocount/detect.hpp"

namespace cyto {

struct MatchedPair {
  int det_index = 0;  // index into the DetectionSet order
  int gt_index = 0;   // index into the annotation list
  double distance = 0.0;
};

// Per-class match counts for one image at one radius.
struct ClassCounts {
  long long tp = 0;
  long long fp = 0;
  long long fn = 0;
};

struct MatchReport {
  double radius = 0.0;
  std::array<ClassCounts, 2> counts;             // index = class label
  std::array<std::vector<MatchedPair>, 2> pairs; // matched pairs per class
};

// Greedy one-to-one matching per class: candidate same-class pairs with
// Euclidean distance strictly less than r are sorted ascending by distance
// (ties by detection index, then annotation index) and accepted whenever both
// endpoints are still unmatched. Unmatched detections count as FP, unmatched
// annotations as FN.
MatchReport match_detections(const DetectionSet& dets, const std::vector<PointAnnotation>& gts,
                             double r);

struct PrecisionRecallF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// precision = tp/(tp+fp), recall = tp/(tp+fn), f1 = 2PR/(P+R). Any 0/0 is
// defined as 0, except the all-empty case tp=fp=fn=0 which scores a perfect 1
// (empty agreement).
PrecisionRecallF1 f1_from_counts(const ClassCounts& c);
std::array<PrecisionRecallF1, 2> f1_scores(const MatchReport& report);

// Pool tp/fp/fn over all images, then compute F1 once per class. All reports
// must share the same radius and the list must be non-empty.
std::array<PrecisionRecallF1, 2> total_f1(const std::vector<MatchReport>& per_image);

// Arithmetic mean of the per-image F1 scores (same 0/0 convention). The list
// must be non-empty.
std::array<double, 2> mean_f1(const std::vector<MatchReport>& per_image);

struct SweepPoint {
  double r = 0.0;
  int label = 0;
  double total_f1 = 0.0;
  double mean_f1 = 0.0;
};

// Rematches every image at every radius (radii must be ascending) and emits
// one point per (radius, class).
std::vector<SweepPoint> radius_sweep(const std::vector<DetectionSet>& dets,
                                     const std::vector<std::vector<PointAnnotation>>& gts,
                                     const std::vector<double>& radii);

// CSV with header `r,class,total_f1,mean_f1`.
void save_sweep_csv(const std::vector<SweepPoint>& curve, const std::filesystem::path& path);
std::vector<SweepPoint> load_sweep_csv(const std::filesystem::path& path);

}  // namespace cyto
