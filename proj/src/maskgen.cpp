#include "cytocount/maskgen.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "cytocount/rng.hpp"

namespace cyto {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Crossing-number point-in-polygon test against pixel center (px, py).
bool point_in_polygon(double px, double py, const std::vector<double>& vx,
                      const std::vector<double>& vy) {
  bool inside = false;
  const std::size_t k = vx.size();
  for (std::size_t i = 0, j = k - 1; i < k; j = i++) {
    if ((vy[i] > py) != (vy[j] > py)) {
      const double cross_x = (vx[j] - vx[i]) * (py - vy[i]) / (vy[j] - vy[i]) + vx[i];
      if (px < cross_x) inside = !inside;
    }
  }
  return inside;
}

void fill_polygon(Mask& mask, const std::vector<double>& vx, const std::vector<double>& vy) {
  const double min_x = *std::min_element(vx.begin(), vx.end());
  const double max_x = *std::max_element(vx.begin(), vx.end());
  const double min_y = *std::min_element(vy.begin(), vy.end());
  const double max_y = *std::max_element(vy.begin(), vy.end());
  const int j0 = std::max(0, static_cast<int>(std::floor(min_x)));
  const int j1 = std::min(mask.cols - 1, static_cast<int>(std::ceil(max_x)));
  const int i0 = std::max(0, static_cast<int>(std::floor(min_y)));
  const int i1 = std::min(mask.rows - 1, static_cast<int>(std::ceil(max_y)));
  for (int i = i0; i <= i1; ++i) {
    for (int j = j0; j <= j1; ++j) {
      if (point_in_polygon(j, i, vx, vy)) mask.at(i, j) = 1;
    }
  }
}

}  // namespace

MaskPair make_circle_masks(const std::vector<PointAnnotation>& annotations, int rows, int cols,
                           double radius) {
  if (radius < 1.0) throw std::invalid_argument("circle mask radius must be >= 1");
  MaskPair masks{Mask(rows, cols), Mask(rows, cols)};
  const int r_ceil = static_cast<int>(std::ceil(radius));
  const double r2 = radius * radius;
  for (const auto& a : annotations) {
    Mask& m = masks.of(a.label);
    const int i0 = std::max(0, a.y - r_ceil);
    const int i1 = std::min(rows - 1, a.y + r_ceil);
    const int j0 = std::max(0, a.x - r_ceil);
    const int j1 = std::min(cols - 1, a.x + r_ceil);
    for (int i = i0; i <= i1; ++i) {
      for (int j = j0; j <= j1; ++j) {
        const double dy = i - a.y;
        const double dx = j - a.x;
        if (dy * dy + dx * dx <= r2) m.at(i, j) = 1;
      }
    }
  }
  return masks;
}

MaskPair make_dynamic_masks(const std::vector<PointAnnotation>& annotations, int rows, int cols,
                            const DynamicMaskParams& params, std::uint64_t iteration) {
  if (params.vertex_min < 3 || params.vertex_max < params.vertex_min) {
    throw std::invalid_argument("polygon vertex range must satisfy 3 <= min <= max");
  }
  if (params.radius_min < 1.0 || params.radius_max < params.radius_min) {
    throw std::invalid_argument("polygon radius range must satisfy 1 <= min <= max");
  }
  if (params.radial_jitter < 0.0 || params.radial_jitter > 0.5) {
    throw std::invalid_argument("radial jitter must be in [0, 0.5]");
  }
  MaskPair masks{Mask(rows, cols), Mask(rows, cols)};
  std::vector<double> vx, vy;
  for (std::size_t idx = 0; idx < annotations.size(); ++idx) {
    const auto& a = annotations[idx];
    Rng rng(mix_seed(params.seed, iteration, idx));
    const int k = rng.uniform_int(params.vertex_min, params.vertex_max);
    const double base_r = rng.uniform(params.radius_min, params.radius_max);
    const double rotation = rng.uniform(0.0, kTwoPi);
    vx.assign(k, 0.0);
    vy.assign(k, 0.0);
    for (int v = 0; v < k; ++v) {
      const double angle = rotation + kTwoPi * v / k;
      const double r = base_r * (1.0 + params.radial_jitter * rng.uniform(-1.0, 1.0));
      vx[v] = a.x + r * std::cos(angle);
      vy[v] = a.y + r * std::sin(angle);
    }
    fill_polygon(masks.of(a.label), vx, vy);
  }
  return masks;
}

Mask dilate_disk(const Mask& mask, int radius) {
  if (radius < 0) throw std::invalid_argument("dilation radius must be >= 0");
  Mask out(mask.rows, mask.cols);
  const int r2 = radius * radius;
  for (int i = 0; i < mask.rows; ++i) {
    for (int j = 0; j < mask.cols; ++j) {
      bool hit = false;
      for (int di = -radius; di <= radius && !hit; ++di) {
        const int ii = i + di;
        if (ii < 0 || ii >= mask.rows) continue;
        for (int dj = -radius; dj <= radius; ++dj) {
          const int jj = j + dj;
          if (jj < 0 || jj >= mask.cols) continue;
          if (di * di + dj * dj <= r2 && mask.at(ii, jj)) {
            hit = true;
            break;
          }
        }
      }
      out.at(i, j) = hit ? 1 : 0;
    }
  }
  return out;
}

Mask erode_disk(const Mask& mask, int radius) {
  if (radius < 0) throw std::invalid_argument("erosion radius must be >= 0");
  Mask out(mask.rows, mask.cols);
  const int r2 = radius * radius;
  for (int i = 0; i < mask.rows; ++i) {
    for (int j = 0; j < mask.cols; ++j) {
      bool keep = mask.at(i, j) != 0;
      for (int di = -radius; di <= radius && keep; ++di) {
        const int ii = i + di;
        if (ii < 0 || ii >= mask.rows) continue;  // out-of-bounds neighbors are ignored
        for (int dj = -radius; dj <= radius; ++dj) {
          const int jj = j + dj;
          if (jj < 0 || jj >= mask.cols) continue;
          if (di * di + dj * dj <= r2 && !mask.at(ii, jj)) {
            keep = false;
            break;
          }
        }
      }
      out.at(i, j) = keep ? 1 : 0;
    }
  }
  return out;
}

Mask make_prior_mask(const Map& probability, const PriorMaskParams& params) {
  if (params.threshold <= 0.0 || params.threshold >= 1.0) {
    throw std::invalid_argument("prior threshold must be in (0, 1)");
  }
  Mask binary(probability.rows, probability.cols);
  for (std::size_t i = 0; i < probability.size(); ++i) {
    binary.v[i] = probability.v[i] >= params.threshold ? 1 : 0;
  }
  return erode_disk(dilate_disk(binary, params.closing_radius), params.closing_radius);
}

const Mask& PriorBank::get(const std::string& id) const {
  const auto it = by_image.find(id);
  if (it == by_image.end()) {
    throw UserError(fmt::format("missing prior mask for image id '{}'", id));
  }
  return it->second;
}

void save_prior_bank(const PriorBank& bank, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [id, mask] : bank.by_image) {
    save_mask_png(mask, dir / (id + ".png"));
  }
}

PriorBank load_prior_bank(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw UserError(fmt::format("prior mask directory '{}' does not exist", dir.string()));
  }
  PriorBank bank;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".png") {
      bank.by_image[entry.path().stem().string()] = load_mask_png(entry.path());
    }
  }
  return bank;
}

}  // namespace cyto
