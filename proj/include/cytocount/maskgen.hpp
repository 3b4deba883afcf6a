// Weak-label mask synthesis: turning point annotations into training masks.
//
// Three mask families are produced from the same point annotations:
//   * circle proximity masks   - fixed disks around each point (main branch)
//   * dynamic polygon masks    - random star-shaped polygons, regenerated
//                                every training iteration (dynamic branch)
//   * prior masks              - thresholded + morphologically closed network
//                                output captured after pretraining (prior branch)
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cytocount/core.hpp"

namespace cyto {

// Per-class binary masks for the two-class problem. Class 0 covers "other"
// cells, class 1 covers positive-tumor cells. The planes are independent:
// a pixel may be set in both when regions of different classes overlap.
struct MaskPair {
  Mask cls0;
  Mask cls1;

  const Mask& of(int label) const { return label == 0 ? cls0 : cls1; }
  Mask& of(int label) { return label == 0 ? cls0 : cls1; }
};

// Disk of given radius around each annotation: pixel (i, j) is inside the
// disk of point (x, y) iff (i - y)^2 + (j - x)^2 <= radius^2. Same-class
// disks merge by OR; different classes never interact.
MaskPair make_circle_masks(const std::vector<PointAnnotation>& annotations, int rows, int cols,
                           double radius);

struct DynamicMaskParams {
  int vertex_min = 3;          // inclusive polygon vertex-count bounds
  int vertex_max = 8;
  double radius_min = 4.0;     // per-polygon base radius, drawn uniformly
  double radius_max = 10.0;
  double radial_jitter = 0.2;  // per-vertex radius jitter as a fraction of the
                               // base radius; 0 gives regular polygons
  std::uint64_t seed = 0;
};

// Random polygon around each annotation: k ~ U[vertex_min, vertex_max]
// vertices at evenly spaced angles with a random rotation, base radius
// r ~ U[radius_min, radius_max], per-vertex radii r * (1 + jitter * u),
// u ~ U[-1, 1]. Filled by testing pixel centers against the polygon.
// Randomness is keyed by (params.seed, iteration, annotation index), so the
// same inputs with the same iteration reproduce the mask exactly while
// different iterations give fresh shapes.
MaskPair make_dynamic_masks(const std::vector<PointAnnotation>& annotations, int rows, int cols,
                            const DynamicMaskParams& params, std::uint64_t iteration);

struct PriorMaskParams {
  double threshold = 0.5;  // probability cutoff, must be in (0,1)
  int closing_radius = 5;  // disk structuring-element radius in pixels
};

// Threshold a probability map at params.threshold (>=), then apply binary
// morphological closing (dilate, then erode) with a disk structuring element.
// Border handling: dilation treats out-of-bounds pixels as 0, erosion ignores
// them, so an all-ones mask closes to itself.
Mask make_prior_mask(const Map& probability, const PriorMaskParams& params);

// Prior masks for the positive class of every training image, captured once
// after pretraining and then held fixed.
struct PriorBank {
  std::map<std::string, Mask> by_image;

  bool has(const std::string& id) const { return by_image.count(id) != 0; }
  const Mask& get(const std::string& id) const;
};

// Stored as one 0/255 grayscale PNG per image id inside `dir`.
void save_prior_bank(const PriorBank& bank, const std::filesystem::path& dir);
PriorBank load_prior_bank(const std::filesystem::path& dir);

// Morphology building blocks (disk structuring element of the given radius),
// exposed for tests. Boundary conventions as described for make_prior_mask.
Mask dilate_disk(const Mask& mask, int radius);
Mask erode_disk(const Mask& mask, int radius);

}  // namespace cyto
