#include "cytocount/synthgen.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "cytocount/rng.hpp"

namespace cyto {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kSoftEdge = 2.0;        // width of the alpha falloff, pixels
constexpr int kPlacementAttempts = 1000; // per cell before giving up

struct Color {
  double r, g, b;
};

Color lerp(const Color& a, const Color& b, double t) {
  return Color{a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

const Color kBackground{0.94, 0.92, 0.90};
const Color kBrownWeak{0.85, 0.74, 0.55};   // barely stained cytoplasm
const Color kBrownFull{0.45, 0.28, 0.12};   // saturated DAB-like brown
const Color kOtherBase{0.42, 0.43, 0.72};   // bluish counterstained cell

// One cell: star-shaped blob defined by per-vertex radii at evenly spaced
// angles; the boundary radius between vertices is interpolated in polar
// coordinates, giving an irregular, organic outline.
struct Cell {
  double cx = 0, cy = 0;
  double base_r = 0;
  int label = 0;
  double rotation = 0;
  std::vector<double> radii;
  Color color{};

  double max_radius() const { return *std::max_element(radii.begin(), radii.end()); }

  double boundary_radius(double angle) const {
    const int k = static_cast<int>(radii.size());
    double rel = std::fmod(angle - rotation, kTwoPi);
    if (rel < 0) rel += kTwoPi;
    const double t = rel / (kTwoPi / k);
    const int v0 = static_cast<int>(t) % k;
    const int v1 = (v0 + 1) % k;
    const double frac = t - std::floor(t);
    return radii[v0] + (radii[v1] - radii[v0]) * frac;
  }
};

Cell make_cell(Rng& rng, double cx, double cy, double base_r, int label, double shape_jitter,
               double stain_intensity) {
  Cell cell;
  cell.cx = cx;
  cell.cy = cy;
  cell.base_r = base_r;
  cell.label = label;
  const int k = rng.uniform_int(5, 10);
  cell.rotation = rng.uniform(0.0, kTwoPi);
  cell.radii.resize(k);
  for (int v = 0; v < k; ++v) {
    cell.radii[v] = std::max(1.5, base_r * (1.0 + shape_jitter * rng.uniform(-1.0, 1.0)));
  }
  Color base = label == 1 ? lerp(kBrownWeak, kBrownFull, stain_intensity) : kOtherBase;
  base.r = std::clamp(base.r + rng.normal(0.0, 0.03), 0.0, 1.0);
  base.g = std::clamp(base.g + rng.normal(0.0, 0.03), 0.0, 1.0);
  base.b = std::clamp(base.b + rng.normal(0.0, 0.03), 0.0, 1.0);
  cell.color = base;
  return cell;
}

// Cells keep their centroids out of each other's bodies: with per-vertex
// radii at most 1 + shape_jitter times the base radius, a separation of
// 1.35 * max(base radii) still allows touching/overlapping rims.
bool placement_ok(const std::vector<Cell>& cells, double cx, double cy, double base_r) {
  for (const auto& c : cells) {
    const double min_dist = 1.35 * std::max(base_r, c.base_r);
    const double dx = cx - c.cx;
    const double dy = cy - c.cy;
    if (dx * dx + dy * dy < min_dist * min_dist) return false;
  }
  return true;
}

void render_cell(const Cell& cell, ImagePixels& img, Mask& coverage) {
  const double reach = cell.max_radius() + kSoftEdge;
  const int i0 = std::max(0, static_cast<int>(std::floor(cell.cy - reach)));
  const int i1 = std::min(img.rows - 1, static_cast<int>(std::ceil(cell.cy + reach)));
  const int j0 = std::max(0, static_cast<int>(std::floor(cell.cx - reach)));
  const int j1 = std::min(img.cols - 1, static_cast<int>(std::ceil(cell.cx + reach)));
  for (int i = i0; i <= i1; ++i) {
    for (int j = j0; j <= j1; ++j) {
      const double dy = i - cell.cy;
      const double dx = j - cell.cx;
      const double rho = std::hypot(dx, dy);
      if (rho > reach) continue;
      const double boundary = cell.boundary_radius(std::atan2(dy, dx));
      const double alpha = std::clamp(0.5 + (boundary - rho) / kSoftEdge, 0.0, 1.0);
      if (alpha <= 0.0) continue;
      // Slightly darker core approximates the denser center of a stained cell.
      const double shade = 0.82 + 0.18 * std::min(1.0, rho / std::max(boundary, 1e-6));
      img.at(i, j, 0) = (1 - alpha) * img.at(i, j, 0) + alpha * cell.color.r * shade;
      img.at(i, j, 1) = (1 - alpha) * img.at(i, j, 1) + alpha * cell.color.g * shade;
      img.at(i, j, 2) = (1 - alpha) * img.at(i, j, 2) + alpha * cell.color.b * shade;
      if (alpha >= 0.5) coverage.at(i, j) = 1;
    }
  }
}

}  // namespace

void SynthSpec::validate() const {
  if (m < 32 || n < 32) throw UserError("synth: image size must be at least 32x32");
  if (n_clusters < 0) throw UserError("synth: n_clusters must be >= 0");
  if (cells_per_cluster.lo < 1 || cells_per_cluster.hi < cells_per_cluster.lo) {
    throw UserError("synth: cells_per_cluster range must satisfy 1 <= lo <= hi");
  }
  if (n_other.lo < 0 || n_other.hi < n_other.lo) {
    throw UserError("synth: n_other range must satisfy 0 <= lo <= hi");
  }
  if (cell_radius_lo < 2.0 || cell_radius_hi < cell_radius_lo) {
    throw UserError("synth: cell radius range must satisfy 2 <= lo <= hi");
  }
  if (cell_radius_hi > std::min(m, n) / 8.0) {
    throw UserError(fmt::format("synth: cell radius {} exceeds min(m,n)/8 = {}", cell_radius_hi,
                                std::min(m, n) / 8.0));
  }
  if (shape_jitter < 0.0 || shape_jitter > 1.0) {
    throw UserError("synth: shape_jitter must be in [0, 1]");
  }
  if (stain_intensity < 0.0 || stain_intensity > 1.0) {
    throw UserError("synth: stain_intensity must be in [0, 1]");
  }
  if (background_noise < 0.0 || background_noise > 0.25) {
    throw UserError("synth: background_noise must be in [0, 0.25]");
  }
}

ImageRecord generate_image(const SynthSpec& spec, std::uint64_t seed, SynthTruth* truth) {
  spec.validate();
  Rng rng(mix_seed(seed, 0x73796e7468ull));  // one stream, fixed draw order

  const double cluster_radius = std::min(spec.m, spec.n) / 8.0;
  std::vector<Cell> cells;

  // Tumor clusters: disk-shaped groups of label-1 cells.
  std::vector<std::pair<double, double>> cluster_centers;
  for (int c = 0; c < spec.n_clusters; ++c) {
    const double margin = cluster_radius + 2.0;
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
      const double cx = rng.uniform(margin, spec.n - 1 - margin);
      const double cy = rng.uniform(margin, spec.m - 1 - margin);
      bool ok = true;
      for (const auto& [ox, oy] : cluster_centers) {
        const double dx = cx - ox;
        const double dy = cy - oy;
        if (dx * dx + dy * dy < cluster_radius * cluster_radius) {
          ok = false;
          break;
        }
      }
      if (ok) {
        cluster_centers.emplace_back(cx, cy);
        placed = true;
      }
    }
    if (!placed) {
      throw UserError(fmt::format(
          "synth: could not place cluster {} after {} attempts (spec infeasible)", c,
          kPlacementAttempts));
    }
  }

  for (const auto& [ccx, ccy] : cluster_centers) {
    const int count = rng.uniform_int(spec.cells_per_cluster.lo, spec.cells_per_cluster.hi);
    for (int i = 0; i < count; ++i) {
      bool placed = false;
      for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
        const double r = rng.uniform(spec.cell_radius_lo, spec.cell_radius_hi);
        // The cluster bound constrains centroids: offsets up to radius - 1 keep
        // every pairwise centroid distance at most 2 * cluster_radius even
        // after annotations round to integer pixels. Cell bodies may poke past
        // the cluster circle, which gives the touching/overlapping look.
        const double offset_max = std::max(0.0, cluster_radius - 1.0);
        const double angle = rng.uniform(0.0, kTwoPi);
        const double offset = offset_max * std::sqrt(rng.uniform());
        const double cx = ccx + offset * std::cos(angle);
        const double cy = ccy + offset * std::sin(angle);
        if (!placement_ok(cells, cx, cy, r)) continue;
        cells.push_back(make_cell(rng, cx, cy, r, 1, spec.shape_jitter, spec.stain_intensity));
        placed = true;
      }
      if (!placed) {
        throw UserError(fmt::format(
            "synth: could not place cell {} of a {}-cell cluster after {} attempts "
            "(spec infeasible)",
            i, count, kPlacementAttempts));
      }
    }
  }

  // Dispersed other cells over the whole image.
  const int other_count = rng.uniform_int(spec.n_other.lo, spec.n_other.hi);
  for (int i = 0; i < other_count; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
      const double r = rng.uniform(spec.cell_radius_lo, spec.cell_radius_hi);
      const double margin = r * (1.0 + spec.shape_jitter) + kSoftEdge + 1.0;
      if (spec.n - 1 - margin <= margin || spec.m - 1 - margin <= margin) continue;
      const double cx = rng.uniform(margin, spec.n - 1 - margin);
      const double cy = rng.uniform(margin, spec.m - 1 - margin);
      if (!placement_ok(cells, cx, cy, r)) continue;
      cells.push_back(make_cell(rng, cx, cy, r, 0, spec.shape_jitter, spec.stain_intensity));
      placed = true;
    }
    if (!placed) {
      throw UserError(fmt::format(
          "synth: could not place other cell {} of {} after {} attempts (spec infeasible)", i,
          other_count, kPlacementAttempts));
    }
  }

  ImageRecord rec;
  rec.pixels = ImagePixels(spec.m, spec.n);
  for (int i = 0; i < spec.m; ++i) {
    for (int j = 0; j < spec.n; ++j) {
      rec.pixels.at(i, j, 0) = kBackground.r;
      rec.pixels.at(i, j, 1) = kBackground.g;
      rec.pixels.at(i, j, 2) = kBackground.b;
    }
  }
  MaskPair coverage{Mask(spec.m, spec.n), Mask(spec.m, spec.n)};
  for (const auto& cell : cells) {
    render_cell(cell, rec.pixels, coverage.of(cell.label));
    rec.annotations.push_back(PointAnnotation{static_cast<int>(std::lround(cell.cx)),
                                              static_cast<int>(std::lround(cell.cy)), cell.label});
  }

  // Additive pixel noise, then 8-bit quantization so a PNG round trip is
  // lossless (bit-for-bit determinism of the on-disk dataset).
  for (double& v : rec.pixels.rgb) {
    v = std::clamp(v + rng.normal(0.0, spec.background_noise), 0.0, 1.0);
    v = std::lround(v * 255.0) / 255.0;
  }

  rec.annotations = validate_annotations(rec.annotations, spec.m, spec.n);
  if (truth) truth->coverage = std::move(coverage);
  return rec;
}

double mean_brown_response(const ImagePixels& image, const Mask& coverage) {
  double sum = 0.0;
  long long count = 0;
  for (int i = 0; i < image.rows; ++i) {
    for (int j = 0; j < image.cols; ++j) {
      if (!coverage.at(i, j)) continue;
      sum += 0.5 * (image.at(i, j, 0) + image.at(i, j, 1)) - image.at(i, j, 2);
      ++count;
    }
  }
  return count > 0 ? sum / count : 0.0;
}

Dataset generate_dataset(const SynthSpec& spec, int count, std::uint64_t seed,
                         const std::filesystem::path& out, Split split,
                         const std::string& id_prefix) {
  if (count < 1) throw UserError("synth: dataset image count must be >= 1");
  spec.validate();
  Dataset ds;
  ds.split = split;
  ds.records.reserve(count);
  for (int i = 0; i < count; ++i) {
    ImageRecord rec = generate_image(spec, seed + static_cast<std::uint64_t>(i));
    rec.id = fmt::format("{}{:04d}", id_prefix, i);
    ds.records.push_back(std::move(rec));
  }
  save_dataset(ds, out);
  return ds;
}

}  // namespace cyto
