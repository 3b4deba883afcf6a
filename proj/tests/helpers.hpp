// Shared scaffolding for the test binaries.
#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>

#include "cytocount/losses.hpp"
#include "cytocount/rng.hpp"

namespace testutil {

// Self-deleting unique temp directory.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("cytocount_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline cyto::Map random_prob_map(cyto::Rng& rng, int rows, int cols, double lo = 0.05,
                                 double hi = 0.95) {
  cyto::Map m(rows, cols);
  for (double& v : m.v) v = rng.uniform(lo, hi);
  return m;
}

inline cyto::MapPair random_prob_pair(cyto::Rng& rng, int rows, int cols) {
  return {random_prob_map(rng, rows, cols), random_prob_map(rng, rows, cols)};
}

inline cyto::Mask random_mask(cyto::Rng& rng, int rows, int cols, double density = 0.4) {
  cyto::Mask m(rows, cols);
  for (auto& v : m.v) v = rng.uniform() < density ? 1 : 0;
  return m;
}

inline cyto::MaskPair random_mask_pair(cyto::Rng& rng, int rows, int cols) {
  return {random_mask(rng, rows, cols), random_mask(rng, rows, cols)};
}

}  // namespace testutil
