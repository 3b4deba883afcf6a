#include "cytocount/detect.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace cyto {

namespace {

// Candidate test: strict window maximum with lexicographic (y, x) tie-break.
bool is_window_peak(const Map& prob, int i, int j, int min_distance) {
  const double v = prob.at(i, j);
  const int i0 = std::max(0, i - min_distance);
  const int i1 = std::min(prob.rows - 1, i + min_distance);
  const int j0 = std::max(0, j - min_distance);
  const int j1 = std::min(prob.cols - 1, j + min_distance);
  for (int ni = i0; ni <= i1; ++ni) {
    for (int nj = j0; nj <= j1; ++nj) {
      if (ni == i && nj == j) continue;
      const double nv = prob.at(ni, nj);
      if (nv > v) return false;
      if (nv == v && (ni < i || (ni == i && nj < j))) return false;
    }
  }
  return true;
}

}  // namespace

std::vector<Detection> find_peaks(const Map& probability, const PostprocParams& params) {
  if (params.min_distance < 1) throw std::invalid_argument("min_distance must be >= 1");
  if (params.prob_threshold <= 0.0 || params.prob_threshold >= 1.0) {
    throw std::invalid_argument("prob_threshold must be in (0, 1)");
  }

  std::vector<Detection> candidates;
  for (int i = 0; i < probability.rows; ++i) {
    for (int j = 0; j < probability.cols; ++j) {
      const double v = probability.at(i, j);
      if (v < params.prob_threshold) continue;
      if (is_window_peak(probability, i, j, params.min_distance)) {
        candidates.push_back(Detection{j, i, 0, v});
      }
    }
  }
  // Greedy score-descending suppression; candidates arrive in (y, x) order,
  // so a stable sort by descending score keeps the lexicographic tie-break.
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  std::vector<Detection> accepted;
  const double limit2 = static_cast<double>(params.min_distance) * params.min_distance;
  for (const auto& c : candidates) {
    bool ok = true;
    for (const auto& a : accepted) {
      const double dy = c.y - a.y;
      const double dx = c.x - a.x;
      if (dy * dy + dx * dx <= limit2) {
        ok = false;
        break;
      }
    }
    if (ok) accepted.push_back(c);
  }
  return accepted;
}

MapPair predict_maps(const Network& model, const ImagePixels& image) {
  return model.forward_main(image);
}

DetectionSet detect_cells(const Network& model, const ImagePixels& image,
                          const PostprocParams& params, const std::string& image_id) {
  const MapPair maps = predict_maps(model, image);
  DetectionSet set;
  set.image_id = image_id;
  for (int label = 0; label < 2; ++label) {
    for (auto det : find_peaks(maps.of(label), params)) {
      det.label = label;
      set.detections.push_back(det);
    }
  }
  return set;
}

void save_detections_csv(const std::vector<DetectionSet>& sets,
                         const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw UserError(fmt::format("cannot write detections file '{}'", path.string()));
  out << "image_id,x,y,label,score\n";
  for (const auto& set : sets) {
    for (const auto& d : set.detections) {
      out << fmt::format("{},{},{},{},{:.9g}\n", set.image_id, d.x, d.y, d.label, d.score);
    }
  }
}

std::vector<DetectionSet> load_detections_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UserError(fmt::format("cannot open detections file '{}'", path.string()));
  std::vector<DetectionSet> sets;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != "image_id,x,y,label,score") {
        throw UserError(fmt::format("{}:1: expected header 'image_id,x,y,label,score'",
                                    path.string()));
      }
      continue;
    }
    std::stringstream ss(line);
    std::string id, xs, ys, ls, ss_score;
    if (!std::getline(ss, id, ',') || !std::getline(ss, xs, ',') || !std::getline(ss, ys, ',') ||
        !std::getline(ss, ls, ',') || !std::getline(ss, ss_score)) {
      throw UserError(fmt::format("{}:{}: malformed detection row", path.string(), line_no));
    }
    Detection d;
    try {
      d.x = std::stoi(xs);
      d.y = std::stoi(ys);
      d.label = std::stoi(ls);
      d.score = std::stod(ss_score);
    } catch (const std::exception&) {
      throw UserError(fmt::format("{}:{}: malformed detection row", path.string(), line_no));
    }
    if (sets.empty() || sets.back().image_id != id) {
      sets.push_back(DetectionSet{id, {}});
    }
    sets.back().detections.push_back(d);
  }
  return sets;
}

}  // namespace cyto
