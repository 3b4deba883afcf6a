#include <doctest.h>

#include <fmt/format.h>

#include <cmath>
#include <fstream>

#include "cytocount/eval.hpp"
#include "cytocount/rng.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace cyto;
using doctest::Approx;

namespace {

DetectionSet dets_of(std::vector<Detection> d) { return {"img", std::move(d)}; }

MatchReport report_with(double radius, ClassCounts cls0, ClassCounts cls1) {
  MatchReport r;
  r.radius = radius;
  r.counts = {cls0, cls1};
  return r;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("the two-point fixture matches one pair and leaves one of each side") {
  const std::vector<PointAnnotation> gts = {{10, 10, 1}, {50, 50, 1}};
  const DetectionSet dets = dets_of({{12, 10, 1, 0.9}, {80, 80, 1, 0.8}});
  const MatchReport rep = match_detections(dets, gts, 6.0);
  CHECK(rep.counts[1].tp == 1);
  CHECK(rep.counts[1].fp == 1);
  CHECK(rep.counts[1].fn == 1);
  CHECK(rep.counts[0].tp == 0);
  REQUIRE(rep.pairs[1].size() == 1);
  CHECK(rep.pairs[1][0].det_index == 0);
  CHECK(rep.pairs[1][0].gt_index == 0);
  CHECK(rep.pairs[1][0].distance == Approx(2.0));
}

TEST_CASE("matching is per class: equal coordinates with different labels never pair") {
  const std::vector<PointAnnotation> gts = {{10, 10, 0}};
  const DetectionSet dets = dets_of({{10, 10, 1, 0.9}});
  const MatchReport rep = match_detections(dets, gts, 6.0);
  CHECK(rep.counts[0].tp == 0);
  CHECK(rep.counts[0].fn == 1);
  CHECK(rep.counts[1].fp == 1);
}

TEST_CASE("the radius comparison is strict") {
  const std::vector<PointAnnotation> gts = {{10, 10, 1}};
  const DetectionSet exact = dets_of({{16, 10, 1, 0.9}});  // distance exactly 6
  CHECK(match_detections(exact, gts, 6.0).counts[1].tp == 0);
  CHECK(match_detections(exact, gts, 6.0 + 1e-9).counts[1].tp == 1);
}

TEST_CASE("identical points match perfectly; empty detections are all misses") {
  const std::vector<PointAnnotation> gts = {{3, 4, 0}, {20, 20, 1}, {30, 5, 1}};
  DetectionSet dets{"img", {}};
  for (const auto& g : gts) dets.detections.push_back({g.x, g.y, g.label, 1.0});
  const MatchReport perfect = match_detections(dets, gts, 1.0);
  CHECK(perfect.counts[0].tp == 1);
  CHECK(perfect.counts[1].tp == 2);
  CHECK(perfect.counts[0].fp + perfect.counts[1].fp == 0);
  CHECK(perfect.counts[0].fn + perfect.counts[1].fn == 0);

  const MatchReport misses = match_detections(dets_of({}), gts, 6.0);
  CHECK(misses.counts[0].fn == 1);
  CHECK(misses.counts[1].fn == 2);
  CHECK(misses.counts[0].tp + misses.counts[1].tp == 0);
}

TEST_CASE("greedy prefers the closer pair and each endpoint matches once") {
  // Two detections compete for one annotation; the closer one wins, the other
  // becomes a false positive.
  const std::vector<PointAnnotation> gts = {{10, 10, 1}};
  const DetectionSet dets = dets_of({{13, 10, 1, 0.9}, {11, 10, 1, 0.8}});
  const MatchReport rep = match_detections(dets, gts, 6.0);
  CHECK(rep.counts[1].tp == 1);
  CHECK(rep.counts[1].fp == 1);
  REQUIRE(rep.pairs[1].size() == 1);
  CHECK(rep.pairs[1][0].det_index == 1);
}

TEST_CASE("match counts always satisfy the bookkeeping identities") {
  Rng rng(501);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<PointAnnotation> gts;
    DetectionSet dets{"img", {}};
    const int n_gts = rng.uniform_int(0, 12);
    const int n_dets = rng.uniform_int(0, 12);
    for (int i = 0; i < n_gts; ++i) {
      gts.push_back({rng.uniform_int(0, 40), rng.uniform_int(0, 40), rng.uniform_int(0, 1)});
    }
    for (int i = 0; i < n_dets; ++i) {
      dets.detections.push_back(
          {rng.uniform_int(0, 40), rng.uniform_int(0, 40), rng.uniform_int(0, 1), rng.uniform()});
    }
    const double r = rng.uniform(1.0, 15.0);
    const MatchReport rep = match_detections(dets, gts, r);
    for (int label = 0; label < 2; ++label) {
      long long n_gt_l = 0, n_det_l = 0;
      for (const auto& g : gts) n_gt_l += g.label == label;
      for (const auto& d : dets.detections) n_det_l += d.label == label;
      CHECK(rep.counts[label].tp + rep.counts[label].fn == n_gt_l);
      CHECK(rep.counts[label].tp + rep.counts[label].fp == n_det_l);
      for (const auto& p : rep.pairs[label]) {
        CHECK(p.distance < r);
        CHECK(dets.detections[p.det_index].label == label);
        CHECK(gts[p.gt_index].label == label);
      }
    }
  }
}

TEST_CASE("greedy ties with the optimal matching on most fixtures but can fall short") {
  // Constructed discrepancy: d1 can pair with g1 (dist 3) or g2 (dist 4);
  // d2 only with g1 (dist 4). Greedy takes (d1, g1) first and strands d2,
  // while the optimal assignment (d1-g2, d2-g1) matches both.
  const std::vector<PointAnnotation> gts = {{0, 0, 1}, {0, 7, 1}};
  const DetectionSet dets = dets_of({{0, 3, 1, 0.9}, {0, -4, 1, 0.8}});
  const MatchReport rep = match_detections(dets, gts, 5.0);
  CHECK(rep.counts[1].tp == 1);
  std::vector<std::pair<double, double>> det_xy, gt_xy;
  for (const auto& d : dets.detections) det_xy.push_back({d.x, d.y});
  for (const auto& g : gts) gt_xy.push_back({g.x, g.y});
  CHECK(oracle::max_matching_tp(det_xy, gt_xy, 5.0) == 2);

  // On random fixtures greedy can only ever lose TPs to the optimum.
  Rng rng(502);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<PointAnnotation> rgts;
    DetectionSet rdets{"img", {}};
    for (int i = 0; i < rng.uniform_int(0, 6); ++i) {
      rgts.push_back({rng.uniform_int(0, 20), rng.uniform_int(0, 20), 1});
    }
    for (int i = 0; i < rng.uniform_int(0, 6); ++i) {
      rdets.detections.push_back({rng.uniform_int(0, 20), rng.uniform_int(0, 20), 1, 0.5});
    }
    const double r = rng.uniform(2.0, 10.0);
    std::vector<std::pair<double, double>> dxy, gxy;
    for (const auto& d : rdets.detections) dxy.push_back({d.x, d.y});
    for (const auto& g : rgts) gxy.push_back({g.x, g.y});
    CHECK(match_detections(rdets, rgts, r).counts[1].tp <=
          oracle::max_matching_tp(dxy, gxy, r));
  }
}

TEST_CASE("f1_from_counts covers the division conventions") {
  const auto half = f1_from_counts({1, 1, 1});
  CHECK(half.precision == Approx(0.5));
  CHECK(half.recall == Approx(0.5));
  CHECK(half.f1 == Approx(0.5));

  const auto empty = f1_from_counts({0, 0, 0});
  CHECK(empty.precision == Approx(1.0));
  CHECK(empty.recall == Approx(1.0));
  CHECK(empty.f1 == Approx(1.0));

  CHECK(f1_from_counts({0, 3, 2}).f1 == Approx(0.0));
  CHECK(f1_from_counts({0, 3, 0}).f1 == Approx(0.0));
  CHECK(f1_from_counts({0, 0, 2}).f1 == Approx(0.0));
  CHECK(f1_from_counts({5, 0, 0}).f1 == Approx(1.0));
}

TEST_CASE("pooled and mean F1 disagree on the two-image fixture") {
  // Image A: tp=1. Image B: tp=1, fp=1, fn=1. Pooled: tp=2, fp=1, fn=1 ->
  // P = 2/3, R = 2/3, F1 = 2/3. Mean of per-image F1: (1 + 0.5) / 2 = 0.75.
  const std::vector<MatchReport> reports = {
      report_with(6.0, {0, 0, 0}, {1, 0, 0}),
      report_with(6.0, {0, 0, 0}, {1, 1, 1}),
  };
  CHECK(total_f1(reports)[1].f1 == Approx(2.0 / 3.0));
  CHECK(mean_f1(reports)[1] == Approx(0.75));
  // Class 0 is empty everywhere: perfect by convention in both summaries.
  CHECK(total_f1(reports)[0].f1 == Approx(1.0));
  CHECK(mean_f1(reports)[0] == Approx(1.0));
}

TEST_CASE("a singleton list makes pooled, mean and per-image F1 coincide") {
  const std::vector<MatchReport> one = {report_with(6.0, {2, 1, 0}, {3, 0, 2})};
  const auto scores = f1_scores(one[0]);
  CHECK(total_f1(one)[0].f1 == Approx(scores[0].f1));
  CHECK(total_f1(one)[1].f1 == Approx(scores[1].f1));
  CHECK(mean_f1(one)[0] == Approx(scores[0].f1));
  CHECK(mean_f1(one)[1] == Approx(scores[1].f1));
}

TEST_CASE("mixing radii in a pooled summary is an error") {
  const std::vector<MatchReport> mixed = {
      report_with(6.0, {1, 0, 0}, {1, 0, 0}),
      report_with(8.0, {1, 0, 0}, {1, 0, 0}),
  };
  CHECK_THROWS_AS(total_f1(mixed), std::invalid_argument);
  CHECK_THROWS_AS(total_f1(std::vector<MatchReport>{}), std::invalid_argument);
  CHECK_THROWS_AS(mean_f1(std::vector<MatchReport>{}), std::invalid_argument);
}

TEST_CASE("radius_sweep turns a fixed 5 px offset into an F1 step at r = 6") {
  // One detection 5 px from its annotation: misses at r = 5 (strict),
  // matches at r = 6.
  const std::vector<DetectionSet> dets = {dets_of({{15, 10, 1, 0.9}})};
  const std::vector<std::vector<PointAnnotation>> gts = {{{10, 10, 1}}};
  const auto curve = radius_sweep(dets, gts, {5.0, 6.0});
  REQUIRE(curve.size() == 4);  // 2 radii x 2 classes
  for (const auto& p : curve) {
    if (p.label != 1) continue;
    const double expected = p.r < 6.0 ? 0.0 : 1.0;
    CHECK(p.total_f1 == Approx(expected));
    CHECK(p.mean_f1 == Approx(expected));
  }
}

TEST_CASE("true positives are monotone in the matching radius") {
  Rng rng(503);
  std::vector<DetectionSet> dets;
  std::vector<std::vector<PointAnnotation>> gts;
  for (int img = 0; img < 4; ++img) {
    DetectionSet d{fmt::format("img{}", img), {}};
    std::vector<PointAnnotation> g;
    for (int i = 0; i < 10; ++i) {
      g.push_back({rng.uniform_int(0, 60), rng.uniform_int(0, 60), rng.uniform_int(0, 1)});
      d.detections.push_back(
          {rng.uniform_int(0, 60), rng.uniform_int(0, 60), rng.uniform_int(0, 1), rng.uniform()});
    }
    dets.push_back(std::move(d));
    gts.push_back(std::move(g));
  }
  const std::vector<double> radii = {2, 4, 6, 8, 12, 16, 24};
  for (int label = 0; label < 2; ++label) {
    long long previous = -1;
    for (const double r : radii) {
      long long tp = 0;
      for (std::size_t i = 0; i < dets.size(); ++i) {
        tp += match_detections(dets[i], gts[i], r).counts[label].tp;
      }
      CHECK(tp >= previous);
      previous = tp;
    }
  }
  CHECK_THROWS_AS(radius_sweep(dets, gts, {6.0, 4.0}), std::invalid_argument);
}

TEST_CASE("sweep curves round trip through CSV") {
  testutil::TempDir dir("sweep_csv");
  const std::vector<SweepPoint> curve = {
      {4.0, 0, 0.5, 0.625}, {4.0, 1, 0.75, 0.8125}, {6.0, 0, 1.0, 1.0}, {6.0, 1, 0.0, 0.0}};
  const auto path = dir.path() / "sweep.csv";
  save_sweep_csv(curve, path);
  const auto back = load_sweep_csv(path);
  REQUIRE(back.size() == curve.size());
  for (std::size_t i = 0; i < curve.size(); ++i) {
    CHECK(back[i].r == Approx(curve[i].r));
    CHECK(back[i].label == curve[i].label);
    CHECK(back[i].total_f1 == Approx(curve[i].total_f1));
    CHECK(back[i].mean_f1 == Approx(curve[i].mean_f1));
  }

  {
    std::ofstream out(dir.path() / "bad.csv");
    out << "r,class,total_f1,mean_f1\n4.0,0,0.5\n";
  }
  CHECK_THROWS_AS(load_sweep_csv(dir.path() / "bad.csv"), UserError);
}

}  // TEST_SUITE
