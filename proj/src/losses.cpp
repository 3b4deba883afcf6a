#include "cytocount/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cyto {

namespace {

constexpr double kProbClampLo = 1e-7;
constexpr double kProbClampHi = 1.0 - 1e-7;

void check_same_shape(const Map& a, int rows, int cols, const char* what) {
  if (a.rows != rows || a.cols != cols) {
    throw std::invalid_argument(std::string(what) + ": map dimensions do not match");
  }
}

void check_pair_shapes(const MapPair& p, const MaskPair& g, const char* what) {
  if (p.cls0.rows <= 0 || p.cls0.cols <= 0) {
    throw std::invalid_argument(std::string(what) + ": empty prediction");
  }
  check_same_shape(p.cls1, p.cls0.rows, p.cls0.cols, what);
  if (g.cls0.rows != p.cls0.rows || g.cls0.cols != p.cls0.cols || !g.cls0.same_shape(g.cls1)) {
    throw std::invalid_argument(std::string(what) + ": target dimensions do not match");
  }
}

double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

LossGrad ce_loss(const MapPair& prediction, const MaskPair& target) {
  check_pair_shapes(prediction, target, "ce_loss");
  const int rows = prediction.cls0.rows;
  const int cols = prediction.cls0.cols;
  const double scale = 1.0 / (2.0 * rows * cols);

  LossGrad out;
  out.grad = MapPair{Map(rows, cols), Map(rows, cols)};
  double sum = 0.0;
  for (int l = 0; l < 2; ++l) {
    const Map& p = prediction.of(l);
    const Mask& g = target.of(l);
    Map& grad = out.grad.of(l);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double raw = p.v[i];
      const double pc = std::clamp(raw, kProbClampLo, kProbClampHi);
      const double gi = g.v[i] ? 1.0 : 0.0;
      sum -= gi * std::log(pc) + (1.0 - gi) * std::log(1.0 - pc);
      // Zero gradient where the clamp is active.
      if (raw >= kProbClampLo && raw <= kProbClampHi) {
        grad.v[i] = scale * (-gi / pc + (1.0 - gi) / (1.0 - pc));
      }
    }
  }
  out.value = scale * sum;
  return out;
}

LossGrad iou_loss(const MapPair& prediction, const MaskPair& target, double epsilon) {
  check_pair_shapes(prediction, target, "iou_loss");
  const int rows = prediction.cls0.rows;
  const int cols = prediction.cls0.cols;

  LossGrad out;
  out.grad = MapPair{Map(rows, cols), Map(rows, cols)};
  double value = 0.0;
  for (int l = 0; l < 2; ++l) {
    const Map& p = prediction.of(l);
    const Mask& g = target.of(l);
    double intersection = 0.0;
    double sum_g = 0.0;
    double sum_p = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g.v[i] ? 1.0 : 0.0;
      intersection += gi * p.v[i];
      sum_g += gi;
      sum_p += p.v[i];
    }
    const double numer = intersection + epsilon;
    const double denom = sum_g + sum_p - intersection + epsilon;
    value += 0.5 * (1.0 - numer / denom);

    // d/dp ( -(I+eps)/(U+eps) ) with dI/dp = g and dU/dp = 1 - g.
    Map& grad = out.grad.of(l);
    const double inv_d2 = 1.0 / (denom * denom);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g.v[i] ? 1.0 : 0.0;
      grad.v[i] = -0.5 * (gi * denom - numer * (1.0 - gi)) * inv_d2;
    }
  }
  out.value = value;
  return out;
}

LossGrad main_loss(const MapPair& prediction, const MaskPair& target, double alpha) {
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("main_loss: alpha must be in [0,1]");
  LossGrad ce = ce_loss(prediction, target);
  const LossGrad iou = iou_loss(prediction, target);
  ce.value = alpha * ce.value + (1.0 - alpha) * iou.value;
  for (int l = 0; l < 2; ++l) {
    Map& g = ce.grad.of(l);
    const Map& gi = iou.grad.of(l);
    for (std::size_t i = 0; i < g.size(); ++i) {
      g.v[i] = alpha * g.v[i] + (1.0 - alpha) * gi.v[i];
    }
  }
  return ce;
}

LossGrad l1_map_loss(const MapPair& prediction, const MaskPair& target) {
  check_pair_shapes(prediction, target, "l1_map_loss");
  const int rows = prediction.cls0.rows;
  const int cols = prediction.cls0.cols;
  const double scale = 1.0 / (2.0 * rows * cols);

  LossGrad out;
  out.grad = MapPair{Map(rows, cols), Map(rows, cols)};
  double sum = 0.0;
  for (int l = 0; l < 2; ++l) {
    const Map& p = prediction.of(l);
    const Mask& g = target.of(l);
    Map& grad = out.grad.of(l);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double d = p.v[i] - (g.v[i] ? 1.0 : 0.0);
      sum += std::abs(d);
      grad.v[i] = scale * sign_of(d);
    }
  }
  out.value = scale * sum;
  return out;
}

TwoSidedLossGrad consistency_loss(const MapPair& a, const MapPair& b) {
  if (!a.cls0.same_shape(b.cls0) || !a.cls1.same_shape(b.cls1) || !a.cls0.same_shape(a.cls1)) {
    throw std::invalid_argument("consistency_loss: map dimensions do not match");
  }
  const int rows = a.cls0.rows;
  const int cols = a.cls0.cols;
  const double scale = 1.0 / (2.0 * rows * cols);

  TwoSidedLossGrad out;
  out.grad_a = MapPair{Map(rows, cols), Map(rows, cols)};
  out.grad_b = MapPair{Map(rows, cols), Map(rows, cols)};
  double sum = 0.0;
  for (int l = 0; l < 2; ++l) {
    const Map& pa = a.of(l);
    const Map& pb = b.of(l);
    Map& ga = out.grad_a.of(l);
    Map& gb = out.grad_b.of(l);
    for (std::size_t i = 0; i < pa.size(); ++i) {
      const double d = pa.v[i] - pb.v[i];
      sum += std::abs(d);
      const double s = scale * sign_of(d);
      ga.v[i] = s;
      gb.v[i] = -s;
    }
  }
  out.value = scale * sum;
  return out;
}

PriorLossGrad prior_loss(const Map& prediction_cls1, const Mask& prior_cls1, bool normalize) {
  if (prediction_cls1.rows != prior_cls1.rows || prediction_cls1.cols != prior_cls1.cols) {
    throw std::invalid_argument("prior_loss: map dimensions do not match");
  }
  const double scale =
      normalize ? 1.0 / (static_cast<double>(prediction_cls1.rows) * prediction_cls1.cols) : 1.0;

  PriorLossGrad out;
  out.grad = Map(prediction_cls1.rows, prediction_cls1.cols);
  double sum = 0.0;
  for (std::size_t i = 0; i < prediction_cls1.size(); ++i) {
    const double d = prediction_cls1.v[i] - (prior_cls1.v[i] ? 1.0 : 0.0);
    sum += std::abs(d);
    out.grad.v[i] = scale * sign_of(d);
  }
  out.value = scale * sum;
  return out;
}

double total_loss(double l_m, double l_c, double l_p, double l_d, const LossWeights& w) {
  const double t = l_m + w.lambda_c * l_c + w.lambda_p * l_p + w.lambda_d * l_d;
  if (!std::isfinite(t)) {
    throw std::invalid_argument("total_loss: non-finite loss component (training diverged)");
  }
  return t;
}

}  // namespace cyto
