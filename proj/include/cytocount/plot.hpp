// Rendering of radius-sweep curves as a two-panel line plot (total F1 and
// mean F1 against the match radius), one line per (series, class).
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cytocount/eval.hpp"

namespace cyto {

struct SweepSeries {
  std::string label;  // legend entry, e.g. the ablation tier
  std::vector<SweepPoint> points;
};

// Writes a PNG. Throws UserError when no series contains any point.
void render_sweep_plot(const std::vector<SweepSeries>& series,
                       const std::filesystem::path& out_png);

}  // namespace cyto
