// Two-phase training orchestration.
//
// Phase 1 (tiers with a prior head only): pretrain encoder + main decoder on
// circle masks with cross entropy for a fixed epoch budget, then capture each
// training image's positive-class output as a binarized, closed prior mask.
// Phase 2: joint training of every instantiated head with the total loss and
// Adam (decoupled weight decay), fresh dynamic masks every iteration.
#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "cytocount/losses.hpp"
#include "cytocount/maskgen.hpp"
#include "cytocount/net.hpp"

namespace cyto {

enum class Tier { Ours, OursPlus, OursPlusPlus };

std::string tier_name(Tier tier);
Tier tier_from_string(const std::string& name);  // accepts ours | ours+ | ours++

struct TrainConfig {
  int epochs_pretrain = 10;
  int epochs_main = 24;
  int batch_size = 4;
  double learning_rate = 1e-3;
  double momentum_beta1 = 0.9;  // Adam beta1
  double beta2 = 0.999;         // Adam beta2
  double weight_decay = 2e-5;   // decoupled
  LossWeights weights;
  double circle_radius = 7.0;
  DynamicMaskParams dynamic_params;
  double prior_threshold = 0.5;
  int prior_closing_radius = 5;
  bool normalize_prior_loss = false;  // see prior_loss
  bool warm_start = false;            // phase 2 starts from the pretrained
                                      // encoder + main decoder instead of scratch
  std::uint64_t seed = 1;
  NetworkConfig net;

  void validate() const;  // throws UserError on any violated invariant
};

// Applies an ablation tier: Ours keeps only the main head and zeroes every
// lambda; Ours+ adds the dynamic head (lambda_p = 0); Ours++ instantiates all
// heads with the configured lambdas.
TrainConfig ablation_variant(TrainConfig cfg, Tier tier);

// One row of the training-curve CSV (`step,l_m,l_ce,l_iou,l_c,l_p,l_d,l_t`),
// each value averaged over the step's batch.
struct StepLossRow {
  long long step = 0;
  double l_m = 0, l_ce = 0, l_iou = 0, l_c = 0, l_p = 0, l_d = 0, l_t = 0;
};

void save_loss_csv(const std::vector<StepLossRow>& rows, const std::filesystem::path& path);

using ProgressFn = std::function<void(const std::string&)>;

struct PretrainResult {
  Network model;
  PriorBank priors;
  std::vector<StepLossRow> losses;  // l_ce = l_m = l_t, other columns zero
};

// Phase 1. Deterministic in cfg.seed; throws UserError on a non-finite loss
// (divergence) naming the step.
PretrainResult pretrain_prior_model(const Dataset& dataset, const TrainConfig& cfg,
                                    const ProgressFn& progress = {});

struct TrainResult {
  Network model;
  std::vector<StepLossRow> losses;
};

// Phase 2. `priors` is required exactly when the prior head is instantiated
// and must cover every training image id. `init` (when given) seeds the
// parameters for a warm start; otherwise parameters are freshly initialized
// from cfg.seed. When `out_dir` is given, losses.csv and one checkpoint per
// epoch (checkpoint_epoch_NNNN.bin, plus final model.bin) are written there.
TrainResult train_multitask(const Dataset& dataset, const PriorBank* priors,
                            const TrainConfig& cfg,
                            const std::optional<std::filesystem::path>& out_dir = {},
                            const Network* init = nullptr, const ProgressFn& progress = {});

}  // namespace cyto
