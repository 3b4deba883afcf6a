// Independent reference implementations used to cross-check the library.
// Everything here is deliberately written as direct brute force, separate
// from the production algorithms.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <utility>
#include <vector>

#include "cytocount/core.hpp"
#include "cytocount/losses.hpp"

namespace oracle {

using PixelSet = std::set<std::pair<int, int>>;

// All in-bounds pixels within Euclidean distance `radius` of (x, y).
inline PixelSet disk_pixels(int x, int y, double radius, int rows, int cols) {
  PixelSet out;
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      const double dy = i - y, dx = j - x;
      if (dy * dy + dx * dx <= radius * radius) out.insert({i, j});
    }
  }
  return out;
}

inline PixelSet mask_pixels(const cyto::Mask& mask) {
  PixelSet out;
  for (int i = 0; i < mask.rows; ++i) {
    for (int j = 0; j < mask.cols; ++j) {
      if (mask.at(i, j)) out.insert({i, j});
    }
  }
  return out;
}

// Winding-number point-in-polygon (the production code uses crossing counts).
inline bool point_in_polygon(double px, double py, const std::vector<double>& vx,
                             const std::vector<double>& vy) {
  const int k = static_cast<int>(vx.size());
  double winding = 0.0;
  for (int a = 0; a < k; ++a) {
    const int b = (a + 1) % k;
    const double ax = vx[a] - px, ay = vy[a] - py;
    const double bx = vx[b] - px, by = vy[b] - py;
    winding += std::atan2(ax * by - ay * bx, ax * bx + ay * by);
  }
  return std::abs(winding) > 3.141592653589793;  // ~2*pi inside, ~0 outside
}

// Pixel centers inside the polygon, clipped to the grid.
inline PixelSet polygon_pixels(const std::vector<double>& vx, const std::vector<double>& vy,
                               int rows, int cols) {
  PixelSet out;
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      if (point_in_polygon(j, i, vx, vy)) out.insert({i, j});
    }
  }
  return out;
}

// Maximum-cardinality one-to-one matching (Kuhn's augmenting paths) between
// detections and annotations of one class with distance strictly below r.
inline int max_matching_tp(const std::vector<std::pair<double, double>>& dets,
                           const std::vector<std::pair<double, double>>& gts, double r) {
  const int nd = static_cast<int>(dets.size());
  const int ng = static_cast<int>(gts.size());
  std::vector<std::vector<int>> adj(nd);
  for (int d = 0; d < nd; ++d) {
    for (int g = 0; g < ng; ++g) {
      const double dist = std::hypot(dets[d].first - gts[g].first, dets[d].second - gts[g].second);
      if (dist < r) adj[d].push_back(g);
    }
  }
  std::vector<int> match_gt(ng, -1);
  std::function<bool(int, std::vector<bool>&)> augment = [&](int d, std::vector<bool>& used) {
    for (const int g : adj[d]) {
      if (used[g]) continue;
      used[g] = true;
      if (match_gt[g] < 0 || augment(match_gt[g], used)) {
        match_gt[g] = d;
        return true;
      }
    }
    return false;
  };
  int tp = 0;
  for (int d = 0; d < nd; ++d) {
    std::vector<bool> used(ng, false);
    if (augment(d, used)) ++tp;
  }
  return tp;
}

// 4-connected component count of the 1-pixels.
inline int count_components(const cyto::Mask& mask) {
  cyto::Mask seen(mask.rows, mask.cols);
  int components = 0;
  std::vector<std::pair<int, int>> stack;
  for (int i = 0; i < mask.rows; ++i) {
    for (int j = 0; j < mask.cols; ++j) {
      if (!mask.at(i, j) || seen.at(i, j)) continue;
      ++components;
      stack.push_back({i, j});
      seen.at(i, j) = 1;
      while (!stack.empty()) {
        const auto [ci, cj] = stack.back();
        stack.pop_back();
        const int di[4] = {-1, 1, 0, 0}, dj[4] = {0, 0, -1, 1};
        for (int d = 0; d < 4; ++d) {
          const int ni = ci + di[d], nj = cj + dj[d];
          if (ni < 0 || ni >= mask.rows || nj < 0 || nj >= mask.cols) continue;
          if (!mask.at(ni, nj) || seen.at(ni, nj)) continue;
          seen.at(ni, nj) = 1;
          stack.push_back({ni, nj});
        }
      }
    }
  }
  return components;
}

// Max relative error between an analytic gradient and central finite
// differences of `value_of` over every entry of `p`. Entries whose finite
// difference and analytic gradient are both tiny are skipped (denominator
// floor), matching the usual gradient-check recipe.
inline double fd_max_rel_error(std::vector<double>& p, const std::vector<double>& analytic,
                               const std::function<double()>& value_of, double h = 1e-4) {
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double keep = p[i];
    p[i] = keep + h;
    const double up = value_of();
    p[i] = keep - h;
    const double down = value_of();
    p[i] = keep;
    const double fd = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-8});
    worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
  }
  return worst;
}

// A map whose value at each pixel is the max over isotropic Gaussian bumps.
inline cyto::Map gaussian_blobs(int rows, int cols,
                                const std::vector<std::pair<double, double>>& centers_xy,
                                double amplitude, double sigma) {
  cyto::Map map(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      double v = 0.0;
      for (const auto& [cx, cy] : centers_xy) {
        const double d2 = (j - cx) * (j - cx) + (i - cy) * (i - cy);
        v = std::max(v, amplitude * std::exp(-d2 / (2.0 * sigma * sigma)));
      }
      map.at(i, j) = v;
    }
  }
  return map;
}

}  // namespace oracle
