// Synthetic IHC-like image generator: clustered brown positive-tumor cells
// and dispersed bluish other cells on a light background, with point
// annotations at the cell centroids. Deterministic in (spec, seed).
#pragma once

#include <cstdint>
#include <filesystem>

#include "cytocount/core.hpp"
#include "cytocount/maskgen.hpp"

namespace cyto {

struct IntRange {
  int lo = 0;
  int hi = 0;
};

struct SynthSpec {
  int m = 256;                          // image rows
  int n = 256;                          // image cols
  int n_clusters = 3;                   // tumor clusters per image
  IntRange cells_per_cluster{6, 10};
  IntRange n_other{15, 25};             // dispersed other cells
  double cell_radius_lo = 4.0;          // per-cell base radius bounds, pixels
  double cell_radius_hi = 8.0;
  double shape_jitter = 0.35;           // polygon irregularity in [0,1]
  double stain_intensity = 0.8;         // brown saturation of positive cells
  double background_noise = 0.02;       // stddev of additive pixel noise

  void validate() const;  // throws UserError on any violated invariant
};

// Per-class coverage of the rendered cells (pixels whose cell opacity is at
// least one half), for tests and inspection.
struct SynthTruth {
  MaskPair coverage;
};

// Renders one image. Positive cells are placed inside n_clusters disk-shaped
// clusters of radius min(m,n)/8; other cells are spread uniformly. Each cell
// is a star-shaped polygon with a soft boundary, composited in placement
// order; one PointAnnotation sits at each cell's centroid pixel. Identical
// (spec, seed) reproduce the image bit for bit. Throws UserError when cell
// placement fails 1000 consecutive attempts (spec infeasible).
ImageRecord generate_image(const SynthSpec& spec, std::uint64_t seed,
                           SynthTruth* truth = nullptr);

// Mean of (r+g)/2 - b over the class's covered pixels; the positive class
// exceeds the other class by a clear margin by construction.
double mean_brown_response(const ImagePixels& image, const Mask& coverage);

// Writes `count` images (per-image seed = seed + i) into the core on-disk
// layout under `out`, ids "<id_prefix><i>" zero-padded, and appends the ids
// to splits/<split>.txt. Returns the dataset it wrote.
Dataset generate_dataset(const SynthSpec& spec, int count, std::uint64_t seed,
                         const std::filesystem::path& out, Split split,
                         const std::string& id_prefix);

}  // namespace cyto
