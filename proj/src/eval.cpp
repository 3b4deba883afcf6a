#include "cytocount/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace cyto {

MatchReport match_detections(const DetectionSet& dets, const std::vector<PointAnnotation>& gts,
                             double r) {
  if (r < 1.0) throw std::invalid_argument("match radius must be >= 1");
  MatchReport report;
  report.radius = r;

  struct Candidate {
    double distance;
    int det_index;
    int gt_index;
  };

  for (int label = 0; label < 2; ++label) {
    std::vector<Candidate> candidates;
    long long n_dets = 0;
    long long n_gts = 0;
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
      if (gts[gi].label == label) ++n_gts;
    }
    for (std::size_t di = 0; di < dets.detections.size(); ++di) {
      const Detection& d = dets.detections[di];
      if (d.label != label) continue;
      ++n_dets;
      for (std::size_t gi = 0; gi < gts.size(); ++gi) {
        const PointAnnotation& g = gts[gi];
        if (g.label != label) continue;
        const double dist = std::hypot(static_cast<double>(d.x - g.x),
                                       static_cast<double>(d.y - g.y));
        if (dist < r) {
          candidates.push_back({dist, static_cast<int>(di), static_cast<int>(gi)});
        }
      }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
      if (a.distance != b.distance) return a.distance < b.distance;
      if (a.det_index != b.det_index) return a.det_index < b.det_index;
      return a.gt_index < b.gt_index;
    });

    std::vector<bool> det_used(dets.detections.size(), false);
    std::vector<bool> gt_used(gts.size(), false);
    for (const auto& c : candidates) {
      if (det_used[c.det_index] || gt_used[c.gt_index]) continue;
      det_used[c.det_index] = true;
      gt_used[c.gt_index] = true;
      report.pairs[label].push_back({c.det_index, c.gt_index, c.distance});
    }
    const long long tp = static_cast<long long>(report.pairs[label].size());
    report.counts[label] = ClassCounts{tp, n_dets - tp, n_gts - tp};
  }
  return report;
}

PrecisionRecallF1 f1_from_counts(const ClassCounts& c) {
  if (c.tp == 0 && c.fp == 0 && c.fn == 0) {
    return PrecisionRecallF1{1.0, 1.0, 1.0};  // perfect empty agreement
  }
  PrecisionRecallF1 out;
  out.precision = (c.tp + c.fp) > 0 ? static_cast<double>(c.tp) / (c.tp + c.fp) : 0.0;
  out.recall = (c.tp + c.fn) > 0 ? static_cast<double>(c.tp) / (c.tp + c.fn) : 0.0;
  out.f1 = (out.precision + out.recall) > 0.0
               ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

std::array<PrecisionRecallF1, 2> f1_scores(const MatchReport& report) {
  return {f1_from_counts(report.counts[0]), f1_from_counts(report.counts[1])};
}

std::array<PrecisionRecallF1, 2> total_f1(const std::vector<MatchReport>& per_image) {
  if (per_image.empty()) throw std::invalid_argument("total_f1: empty report list");
  std::array<ClassCounts, 2> pooled;
  for (const auto& rep : per_image) {
    if (rep.radius != per_image.front().radius) {
      throw std::invalid_argument("total_f1: reports use mixed match radii");
    }
    for (int l = 0; l < 2; ++l) {
      pooled[l].tp += rep.counts[l].tp;
      pooled[l].fp += rep.counts[l].fp;
      pooled[l].fn += rep.counts[l].fn;
    }
  }
  return {f1_from_counts(pooled[0]), f1_from_counts(pooled[1])};
}

std::array<double, 2> mean_f1(const std::vector<MatchReport>& per_image) {
  if (per_image.empty()) throw std::invalid_argument("mean_f1: empty report list");
  std::array<double, 2> sums{0.0, 0.0};
  for (const auto& rep : per_image) {
    if (rep.radius != per_image.front().radius) {
      throw std::invalid_argument("mean_f1: reports use mixed match radii");
    }
    const auto scores = f1_scores(rep);
    sums[0] += scores[0].f1;
    sums[1] += scores[1].f1;
  }
  return {sums[0] / per_image.size(), sums[1] / per_image.size()};
}

std::vector<SweepPoint> radius_sweep(const std::vector<DetectionSet>& dets,
                                     const std::vector<std::vector<PointAnnotation>>& gts,
                                     const std::vector<double>& radii) {
  if (dets.size() != gts.size()) {
    throw std::invalid_argument("radius_sweep: detections and annotations count differ");
  }
  if (!std::is_sorted(radii.begin(), radii.end())) {
    throw std::invalid_argument("radius_sweep: radii must be ascending");
  }
  std::vector<SweepPoint> curve;
  for (const double r : radii) {
    std::vector<MatchReport> reports;
    reports.reserve(dets.size());
    for (std::size_t i = 0; i < dets.size(); ++i) {
      reports.push_back(match_detections(dets[i], gts[i], r));
    }
    const auto totals = total_f1(reports);
    const auto means = mean_f1(reports);
    for (int l = 0; l < 2; ++l) {
      curve.push_back(SweepPoint{r, l, totals[l].f1, means[l]});
    }
  }
  return curve;
}

void save_sweep_csv(const std::vector<SweepPoint>& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw UserError(fmt::format("cannot write sweep file '{}'", path.string()));
  out << "r,class,total_f1,mean_f1\n";
  for (const auto& p : curve) {
    out << fmt::format("{:.9g},{},{:.9g},{:.9g}\n", p.r, p.label, p.total_f1, p.mean_f1);
  }
}

std::vector<SweepPoint> load_sweep_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UserError(fmt::format("cannot open sweep file '{}'", path.string()));
  std::vector<SweepPoint> curve;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != "r,class,total_f1,mean_f1") {
        throw UserError(
            fmt::format("{}:1: expected header 'r,class,total_f1,mean_f1'", path.string()));
      }
      continue;
    }
    std::stringstream ss(line);
    std::string rs, cs, ts, ms;
    if (!std::getline(ss, rs, ',') || !std::getline(ss, cs, ',') || !std::getline(ss, ts, ',') ||
        !std::getline(ss, ms)) {
      throw UserError(fmt::format("{}:{}: malformed sweep row", path.string(), line_no));
    }
    SweepPoint p;
    try {
      p.r = std::stod(rs);
      p.label = std::stoi(cs);
      p.total_f1 = std::stod(ts);
      p.mean_f1 = std::stod(ms);
    } catch (const std::exception&) {
      throw UserError(fmt::format("{}:{}: malformed sweep row", path.string(), line_no));
    }
    if (p.label != 0 && p.label != 1) {
      throw UserError(fmt::format("{}:{}: class must be 0 or 1", path.string(), line_no));
    }
    curve.push_back(p);
  }
  return curve;
}

}  // namespace cyto
