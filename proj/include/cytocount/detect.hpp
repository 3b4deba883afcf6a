// Inference post-processing: probability maps to discrete cell detections.
#pragma once

#include <vector>

#include "cytocount/core.hpp"
#include "cytocount/losses.hpp"
#include "cytocount/net.hpp"

namespace cyto {

struct Detection {
  int x = 0;      // pixel column of the peak
  int y = 0;      // pixel row of the peak
  int label = 0;  // class (0 = other, 1 = positive-tumor)
  double score = 0.0;

  bool operator==(const Detection&) const = default;
};

struct PostprocParams {
  int min_distance = 6;         // minimum distance between accepted peaks
  double prob_threshold = 0.5;  // minimum peak probability, in (0,1)
};

// Detections for one image: class-0 peaks first, then class-1 peaks, each
// group sorted by descending score. The stored order defines the detection
// index used for matching tie-breaks.
struct DetectionSet {
  std::string image_id;
  std::vector<Detection> detections;
};

// Local-peak picking. A pixel is returned iff
//   (a) its value >= prob_threshold,
//   (b) it is the maximum of its (2 * min_distance + 1)^2 window, where among
//       equal-valued pixels within the window the lexicographically smallest
//       (y, x) wins, and
//   (c) it survives greedy score-descending suppression at Euclidean
//       distance > min_distance from every previously accepted peak.
// Results are sorted by descending score (ties by ascending (y, x)).
std::vector<Detection> find_peaks(const Map& probability, const PostprocParams& params);

// Main-branch probability maps in inference mode.
MapPair predict_maps(const Network& model, const ImagePixels& image);

// Peak picking on both class maps independently; a location may yield a
// detection in both classes (the per-class sigmoids are independent).
DetectionSet detect_cells(const Network& model, const ImagePixels& image,
                          const PostprocParams& params, const std::string& image_id = {});

// CSV with header `image_id,x,y,label,score`, one row per detection.
void save_detections_csv(const std::vector<DetectionSet>& sets, const std::filesystem::path& path);
std::vector<DetectionSet> load_detections_csv(const std::filesystem::path& path);

}  // namespace cyto
