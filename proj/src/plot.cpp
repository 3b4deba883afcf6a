#include "cytocount/plot.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace cyto {

namespace {

constexpr int kPanelW = 520;
constexpr int kPanelH = 420;
constexpr int kMarginL = 64;
constexpr int kMarginR = 18;
constexpr int kMarginT = 46;
constexpr int kMarginB = 96;  // leaves room for the legend under the x axis

// BGR palette cycled per series; class 0 is drawn dashed, class 1 solid.
const std::vector<cv::Scalar> kPalette = {
    cv::Scalar(180, 119, 31),  // blue
    cv::Scalar(14, 127, 255),  // orange
    cv::Scalar(44, 160, 44),   // green
    cv::Scalar(40, 39, 214),   // red
    cv::Scalar(189, 103, 148), // purple
};

struct Axis {
  double r_lo = 0, r_hi = 1;
  int x0 = 0;  // left edge of the plot area in the full canvas

  cv::Point2d to_px(double r, double f1) const {
    const double fx = (r - r_lo) / std::max(1e-12, r_hi - r_lo);
    const double x = x0 + kMarginL + fx * (kPanelW - kMarginL - kMarginR);
    const double y = kMarginT + (1.0 - f1) * (kPanelH - kMarginT - kMarginB);
    return {x, y};
  }
};

void draw_dashed_line(cv::Mat& img, cv::Point2d a, cv::Point2d b, const cv::Scalar& color) {
  const double len = std::hypot(b.x - a.x, b.y - a.y);
  const double dash = 6.0;
  const int n = std::max(1, static_cast<int>(len / dash));
  for (int i = 0; i < n; i += 2) {
    const double t0 = static_cast<double>(i) / n;
    const double t1 = static_cast<double>(std::min(i + 1, n)) / n;
    cv::line(img, a + t0 * (b - a), a + t1 * (b - a), color, 2, cv::LINE_AA);
  }
}

void draw_panel(cv::Mat& img, int x0, const std::string& title,
                const std::vector<SweepSeries>& series, bool mean_panel, double r_lo,
                double r_hi) {
  const Axis ax{r_lo, r_hi, x0};

  // Frame and gridlines at every 0.25 of F1.
  const cv::Scalar grid(210, 210, 210), frame(60, 60, 60), text(30, 30, 30);
  for (int g = 0; g <= 4; ++g) {
    const double f1 = g * 0.25;
    const auto p0 = ax.to_px(r_lo, f1), p1 = ax.to_px(r_hi, f1);
    cv::line(img, p0, p1, g == 0 ? frame : grid, 1, cv::LINE_AA);
    cv::putText(img, fmt::format("{:.2f}", f1), {x0 + 16, static_cast<int>(p0.y) + 4},
                cv::FONT_HERSHEY_SIMPLEX, 0.38, text, 1, cv::LINE_AA);
  }
  std::set<double> radii;
  for (const auto& s : series)
    for (const auto& p : s.points) radii.insert(p.r);
  for (const double r : radii) {
    const auto p0 = ax.to_px(r, 0.0), p1 = ax.to_px(r, 1.0);
    cv::line(img, p0, p1, grid, 1, cv::LINE_AA);
    cv::putText(img, fmt::format("{:g}", r), {static_cast<int>(p0.x) - 6,
                static_cast<int>(p0.y) + 16},
                cv::FONT_HERSHEY_SIMPLEX, 0.38, text, 1, cv::LINE_AA);
  }
  cv::line(img, ax.to_px(r_lo, 0.0), ax.to_px(r_lo, 1.0), frame, 1, cv::LINE_AA);
  cv::putText(img, title, {x0 + kMarginL, kMarginT - 14}, cv::FONT_HERSHEY_SIMPLEX, 0.5, text,
              1, cv::LINE_AA);
  cv::putText(img, "match radius r (px)", {x0 + kPanelW / 2 - 60, kPanelH - kMarginB + 34},
              cv::FONT_HERSHEY_SIMPLEX, 0.4, text, 1, cv::LINE_AA);

  // One polyline per (series, class).
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& color = kPalette[si % kPalette.size()];
    for (int label = 0; label <= 1; ++label) {
      std::vector<SweepPoint> pts;
      for (const auto& p : series[si].points)
        if (p.label == label) pts.push_back(p);
      std::sort(pts.begin(), pts.end(),
                [](const SweepPoint& a, const SweepPoint& b) { return a.r < b.r; });
      for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        const double f0 = mean_panel ? pts[i].mean_f1 : pts[i].total_f1;
        const double f1 = mean_panel ? pts[i + 1].mean_f1 : pts[i + 1].total_f1;
        const auto a = ax.to_px(pts[i].r, f0), b = ax.to_px(pts[i + 1].r, f1);
        if (label == 0) {
          draw_dashed_line(img, a, b, color);
        } else {
          cv::line(img, a, b, color, 2, cv::LINE_AA);
        }
      }
      for (const auto& p : pts) {
        const double f = mean_panel ? p.mean_f1 : p.total_f1;
        cv::circle(img, ax.to_px(p.r, f), 3, color, -1, cv::LINE_AA);
      }
    }
  }
}

}  // namespace

void render_sweep_plot(const std::vector<SweepSeries>& series,
                       const std::filesystem::path& out_png) {
  std::size_t n_points = 0;
  for (const auto& s : series) n_points += s.points.size();
  if (n_points == 0) throw UserError("sweep plot: no data points to draw");

  double r_lo = std::numeric_limits<double>::infinity(), r_hi = -r_lo;
  for (const auto& s : series) {
    for (const auto& p : s.points) {
      r_lo = std::min(r_lo, p.r);
      r_hi = std::max(r_hi, p.r);
    }
  }
  if (r_hi <= r_lo) {
    r_lo -= 1.0;
    r_hi += 1.0;
  }

  cv::Mat img(kPanelH, 2 * kPanelW, CV_8UC3, cv::Scalar(255, 255, 255));
  draw_panel(img, 0, "total F1 (pooled counts)", series, false, r_lo, r_hi);
  draw_panel(img, kPanelW, "mean F1 (per image)", series, true, r_lo, r_hi);

  // Legend: series color + class line style, bottom-left of the canvas.
  const cv::Scalar text(30, 30, 30);
  int ly = kPanelH - kMarginB + 52;
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& color = kPalette[si % kPalette.size()];
    const int lx = kMarginL + static_cast<int>(si % 3) * 170;
    if (si % 3 == 0 && si > 0) ly += 18;
    cv::line(img, {lx, ly - 4}, {lx + 26, ly - 4}, color, 2, cv::LINE_AA);
    cv::putText(img, series[si].label, {lx + 32, ly}, cv::FONT_HERSHEY_SIMPLEX, 0.42, text, 1,
                cv::LINE_AA);
  }
  ly += 18;
  draw_dashed_line(img, {double(kMarginL), double(ly - 4)}, {double(kMarginL + 26), double(ly - 4)},
                   cv::Scalar(90, 90, 90));
  cv::putText(img, "class 0 (other)", {kMarginL + 32, ly}, cv::FONT_HERSHEY_SIMPLEX, 0.42, text,
              1, cv::LINE_AA);
  cv::line(img, {kMarginL + 170, ly - 4}, {kMarginL + 196, ly - 4}, cv::Scalar(90, 90, 90), 2,
           cv::LINE_AA);
  cv::putText(img, "class 1 (positive)", {kMarginL + 202, ly}, cv::FONT_HERSHEY_SIMPLEX, 0.42,
              text, 1, cv::LINE_AA);

  if (out_png.has_parent_path()) std::filesystem::create_directories(out_png.parent_path());
  if (!cv::imwrite(out_png.string(), img)) {
    throw UserError(fmt::format("cannot write plot image '{}'", out_png.string()));
  }
}

}  // namespace cyto
