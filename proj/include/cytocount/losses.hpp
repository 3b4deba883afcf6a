// Loss terms for the three-branch training objective.
//
// Per-class targets G and predictions P are rows x cols maps; predictions are
// probabilities in (0, 1). Every loss also exposes its gradient with respect
// to the prediction maps so the network backward pass can chain through it.
#pragma once

#include "cytocount/core.hpp"
#include "cytocount/maskgen.hpp"

namespace cyto {

// A per-class pair of real-valued maps (class 0 and class 1).
struct MapPair {
  Map cls0;
  Map cls1;

  const Map& of(int label) const { return label == 0 ? cls0 : cls1; }
  Map& of(int label) { return label == 0 ? cls0 : cls1; }
};

struct LossWeights {
  double alpha = 0.8;     // CE weight inside the main loss
  double lambda_c = 0.5;  // consistency
  double lambda_p = 0.5;  // prior
  double lambda_d = 1.0;  // dynamic
};

struct LossGrad {
  double value = 0.0;
  MapPair grad;  // d value / d prediction, same shapes as the prediction
};

// Binary cross entropy averaged over both classes and all pixels:
//   (1 / (2 m n)) * sum_l sum_ij -[G log P + (1 - G) log(1 - P)].
// Predictions are clamped to [1e-7, 1 - 1e-7] before the logs and the
// gradient is zero where the clamp is active.
LossGrad ce_loss(const MapPair& prediction, const MaskPair& target);

// Complement of soft-IOU, summed over classes and halved:
//   (1/2) * sum_l [ 1 - (I_l + eps) / (sum G + sum P - I_l + eps) ]
// with I_l = sum_ij G * P and eps = 1e-6. With eps in both numerator and
// denominator a class empty in both target and prediction contributes 0
// (treated as perfect agreement).
LossGrad iou_loss(const MapPair& prediction, const MaskPair& target, double epsilon = 1e-6);

// Main-branch loss: alpha * ce_loss + (1 - alpha) * iou_loss.
LossGrad main_loss(const MapPair& prediction, const MaskPair& target, double alpha);

// Mean absolute difference over both classes and all pixels (1/(2mn) sum).
// Serves the dynamic-branch loss (prediction vs polygon target).
LossGrad l1_map_loss(const MapPair& prediction, const MaskPair& target);

// Same value, but between two prediction pairs with gradients for both sides.
// Serves the consistency loss between the main and dynamic outputs, which
// backpropagates into both branches (no stop-gradient).
struct TwoSidedLossGrad {
  double value = 0.0;
  MapPair grad_a;
  MapPair grad_b;
};
TwoSidedLossGrad consistency_loss(const MapPair& a, const MapPair& b);

struct PriorLossGrad {
  double value = 0.0;
  Map grad;
};

// Prior-branch loss over the positive class only:
//   sum_ij |G - P|     when normalize is false (the definition)
//   mean_ij |G - P|    when normalize is true
// The unnormalized sum scales with image area, so training configs typically
// enable normalization to keep the term comparable with the other losses.
PriorLossGrad prior_loss(const Map& prediction_cls1, const Mask& prior_cls1,
                         bool normalize = false);

// Total objective L_t = l_m + lambda_c * l_c + lambda_p * l_p + lambda_d * l_d.
// Throws std::invalid_argument on any non-finite input (training divergence).
double total_loss(double l_m, double l_c, double l_p, double l_d, const LossWeights& w);

}  // namespace cyto
