#include "cytocount/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

#include "cytocount/rng.hpp"

namespace cyto {

namespace {

// Seed-stream tags so the phases draw from independent streams.
constexpr std::uint64_t kTagPretrainInit = 0x70726531;
constexpr std::uint64_t kTagMainInit = 0x6d61696e;
constexpr std::uint64_t kTagPretrainShuffle = 0x73687531;
constexpr std::uint64_t kTagMainShuffle = 0x73687532;
constexpr std::uint64_t kTagDynamic = 0x64796e61;

// Adam with decoupled weight decay.
class AdamW {
 public:
  AdamW(Network& net, double lr, double beta1, double beta2, double weight_decay)
      : net_(net), lr_(lr), beta1_(beta1), beta2_(beta2), wd_(weight_decay) {
    for (const auto* layer : net.parameter_layers()) {
      mw_.emplace_back(Eigen::MatrixXd::Zero(layer->w.rows(), layer->w.cols()));
      vw_.emplace_back(Eigen::MatrixXd::Zero(layer->w.rows(), layer->w.cols()));
      mb_.emplace_back(Eigen::VectorXd::Zero(layer->b.size()));
      vb_.emplace_back(Eigen::VectorXd::Zero(layer->b.size()));
    }
  }

  void step(const Gradients& g) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    auto refs = net_.parameters();
    for (std::size_t i = 0; i < refs.size(); ++i) {
      auto& w = refs[i].layer->w;
      auto& b = refs[i].layer->b;
      mw_[i] = beta1_ * mw_[i] + (1.0 - beta1_) * g.dw[i];
      vw_[i] = (beta2_ * vw_[i].array() + (1.0 - beta2_) * g.dw[i].array().square()).matrix();
      w.array() -= lr_ * ((mw_[i].array() / bc1) / ((vw_[i].array() / bc2).sqrt() + kEps) +
                          wd_ * w.array());
      mb_[i] = beta1_ * mb_[i] + (1.0 - beta1_) * g.db[i];
      vb_[i] = (beta2_ * vb_[i].array() + (1.0 - beta2_) * g.db[i].array().square()).matrix();
      b.array() -= lr_ * ((mb_[i].array() / bc1) / ((vb_[i].array() / bc2).sqrt() + kEps) +
                          wd_ * b.array());
    }
  }

 private:
  static constexpr double kEps = 1e-8;
  Network& net_;
  double lr_, beta1_, beta2_, wd_;
  long long t_ = 0;
  std::vector<Eigen::MatrixXd> mw_, vw_;
  std::vector<Eigen::VectorXd> mb_, vb_;
};

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, int batch_size, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  return batches;
}

void require_finite(double l_t, long long step) {
  if (!std::isfinite(l_t)) {
    throw UserError(fmt::format("training diverged: non-finite loss at step {}", step));
  }
}

void scale_pair(MapPair& pair, double s) {
  for (double& v : pair.cls0.v) v *= s;
  for (double& v : pair.cls1.v) v *= s;
}

void add_scaled(MapPair& into, const MapPair& from, double s) {
  for (std::size_t i = 0; i < into.cls0.v.size(); ++i) into.cls0.v[i] += s * from.cls0.v[i];
  for (std::size_t i = 0; i < into.cls1.v.size(); ++i) into.cls1.v[i] += s * from.cls1.v[i];
}

}  // namespace

std::string tier_name(Tier tier) {
  switch (tier) {
    case Tier::Ours: return "ours";
    case Tier::OursPlus: return "ours+";
    default: return "ours++";
  }
}

Tier tier_from_string(const std::string& name) {
  if (name == "ours") return Tier::Ours;
  if (name == "ours+") return Tier::OursPlus;
  if (name == "ours++") return Tier::OursPlusPlus;
  throw UserError(fmt::format("unknown tier '{}' (expected ours, ours+ or ours++)", name));
}

void TrainConfig::validate() const {
  if (epochs_pretrain < 1) throw UserError("train: epochs_pretrain must be >= 1");
  if (epochs_main < 1) throw UserError("train: epochs_main must be >= 1");
  if (batch_size < 1) throw UserError("train: batch_size must be >= 1");
  if (learning_rate <= 0.0) throw UserError("train: learning_rate must be > 0");
  if (momentum_beta1 < 0.0 || momentum_beta1 >= 1.0) {
    throw UserError("train: momentum_beta1 must be in [0, 1)");
  }
  if (beta2 < 0.0 || beta2 >= 1.0) throw UserError("train: beta2 must be in [0, 1)");
  if (weight_decay < 0.0) throw UserError("train: weight_decay must be >= 0");
  if (weights.alpha < 0.0 || weights.alpha > 1.0) throw UserError("train: alpha must be in [0, 1]");
  if (weights.lambda_c < 0.0 || weights.lambda_p < 0.0 || weights.lambda_d < 0.0) {
    throw UserError("train: loss weights must be >= 0");
  }
  if (circle_radius < 1.0) throw UserError("train: circle_radius must be >= 1");
  if (prior_threshold <= 0.0 || prior_threshold >= 1.0) {
    throw UserError("train: prior_threshold must be in (0, 1)");
  }
  if (prior_closing_radius < 0) throw UserError("train: prior_closing_radius must be >= 0");
  if (dynamic_params.vertex_min < 3 || dynamic_params.vertex_max < dynamic_params.vertex_min) {
    throw UserError("train: dynamic vertex range must satisfy 3 <= min <= max");
  }
  if (dynamic_params.radius_min < 1.0 ||
      dynamic_params.radius_max < dynamic_params.radius_min) {
    throw UserError("train: dynamic radius range must satisfy 1 <= min <= max");
  }
  if (dynamic_params.radial_jitter < 0.0 || dynamic_params.radial_jitter > 0.5) {
    throw UserError("train: dynamic jitter must be in [0, 0.5]");
  }
}

TrainConfig ablation_variant(TrainConfig cfg, Tier tier) {
  switch (tier) {
    case Tier::Ours:
      cfg.net.heads = HeadSet{true, false, false};
      cfg.weights.lambda_c = 0.0;
      cfg.weights.lambda_p = 0.0;
      cfg.weights.lambda_d = 0.0;
      break;
    case Tier::OursPlus:
      cfg.net.heads = HeadSet{true, true, false};
      cfg.weights.lambda_p = 0.0;
      break;
    case Tier::OursPlusPlus:
      cfg.net.heads = HeadSet{true, true, true};
      break;
  }
  return cfg;
}

void save_loss_csv(const std::vector<StepLossRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw UserError(fmt::format("cannot write loss file '{}'", path.string()));
  out << "step,l_m,l_ce,l_iou,l_c,l_p,l_d,l_t\n";
  for (const auto& r : rows) {
    out << fmt::format("{},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g}\n", r.step,
                       r.l_m, r.l_ce, r.l_iou, r.l_c, r.l_p, r.l_d, r.l_t);
  }
}

PretrainResult pretrain_prior_model(const Dataset& dataset, const TrainConfig& cfg,
                                    const ProgressFn& progress) {
  cfg.validate();
  if (dataset.records.empty()) throw UserError("pretraining requires a non-empty dataset");

  NetworkConfig net_cfg = cfg.net;
  net_cfg.heads = HeadSet{true, false, false};
  Network net(net_cfg);
  net.init_parameters(mix_seed(cfg.seed, kTagPretrainInit));

  std::vector<MaskPair> circle_masks;
  circle_masks.reserve(dataset.records.size());
  for (const auto& rec : dataset.records) {
    circle_masks.push_back(make_circle_masks(rec.annotations, rec.pixels.rows, rec.pixels.cols,
                                             cfg.circle_radius));
  }

  AdamW opt(net, cfg.learning_rate, cfg.momentum_beta1, cfg.beta2, cfg.weight_decay);
  Gradients grads = net.make_gradients();
  Workspace ws;
  std::vector<StepLossRow> rows;
  long long step = 0;
  for (int epoch = 0; epoch < cfg.epochs_pretrain; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, kTagPretrainShuffle, static_cast<std::uint64_t>(epoch)));
    for (const auto& batch : make_batches(dataset.records.size(), cfg.batch_size, shuffle_rng)) {
      ++step;
      grads.set_zero();
      double batch_ce = 0.0;
      for (const std::size_t idx : batch) {
        const auto& rec = dataset.records[idx];
        const auto outputs = net.forward(rec.pixels, &ws);
        LossGrad ce = ce_loss(outputs.main, circle_masks[idx]);
        batch_ce += ce.value;
        scale_pair(ce.grad, 1.0 / static_cast<double>(batch.size()));
        Network::Outputs head_grads;
        head_grads.main = std::move(ce.grad);
        net.backward(ws, head_grads, grads);
      }
      batch_ce /= static_cast<double>(batch.size());
      require_finite(batch_ce, step);
      opt.step(grads);
      StepLossRow row;
      row.step = step;
      row.l_m = row.l_ce = row.l_t = batch_ce;
      rows.push_back(row);
    }
    if (progress) {
      progress(fmt::format("pretrain epoch {}/{}: l_ce = {:.6f}", epoch + 1, cfg.epochs_pretrain,
                           rows.back().l_ce));
    }
  }

  PretrainResult result{std::move(net), {}, std::move(rows)};
  const PriorMaskParams prior_params{cfg.prior_threshold, cfg.prior_closing_radius};
  for (const auto& rec : dataset.records) {
    const MapPair maps = result.model.forward_main(rec.pixels);
    result.priors.by_image[rec.id] = make_prior_mask(maps.cls1, prior_params);
  }
  return result;
}

TrainResult train_multitask(const Dataset& dataset, const PriorBank* priors,
                            const TrainConfig& cfg,
                            const std::optional<std::filesystem::path>& out_dir,
                            const Network* init, const ProgressFn& progress) {
  cfg.validate();
  if (dataset.records.empty()) throw UserError("training requires a non-empty dataset");

  const HeadSet heads = cfg.net.heads;
  if (heads.prior) {
    if (!priors) throw UserError("the prior head requires a prior mask bank");
    for (const auto& rec : dataset.records) priors->get(rec.id);  // throws on a missing id
  }

  Network net(cfg.net);
  net.init_parameters(mix_seed(cfg.seed, kTagMainInit));
  if (init) {
    // Warm start: copy every layer whose name exists in the source network
    // (encoder, bottleneck and main decoder when init is a pretrained model).
    Network source = *init;
    auto src_refs = source.parameters();
    for (auto& dst : net.parameters()) {
      for (auto& src : src_refs) {
        if (src.name == dst.name) {
          if (src.layer->w.rows() != dst.layer->w.rows() ||
              src.layer->w.cols() != dst.layer->w.cols()) {
            throw UserError(fmt::format("warm start: layer '{}' shape mismatch", src.name));
          }
          dst.layer->w = src.layer->w;
          dst.layer->b = src.layer->b;
        }
      }
    }
  }

  std::vector<MaskPair> circle_masks;
  circle_masks.reserve(dataset.records.size());
  for (const auto& rec : dataset.records) {
    circle_masks.push_back(make_circle_masks(rec.annotations, rec.pixels.rows, rec.pixels.cols,
                                             cfg.circle_radius));
  }

  if (out_dir) std::filesystem::create_directories(*out_dir);

  AdamW opt(net, cfg.learning_rate, cfg.momentum_beta1, cfg.beta2, cfg.weight_decay);
  Gradients grads = net.make_gradients();
  Workspace ws;
  std::vector<StepLossRow> rows;
  long long step = 0;

  for (int epoch = 0; epoch < cfg.epochs_main; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, kTagMainShuffle, static_cast<std::uint64_t>(epoch)));
    for (const auto& batch : make_batches(dataset.records.size(), cfg.batch_size, shuffle_rng)) {
      ++step;
      grads.set_zero();
      const double inv_batch = 1.0 / static_cast<double>(batch.size());
      StepLossRow row;
      row.step = step;

      for (const std::size_t idx : batch) {
        const auto& rec = dataset.records[idx];
        const auto outputs = net.forward(rec.pixels, &ws);

        Network::Outputs head_grads;
        LossGrad lm = main_loss(outputs.main, circle_masks[idx], cfg.weights.alpha);
        const LossGrad lce = ce_loss(outputs.main, circle_masks[idx]);
        const LossGrad liou = iou_loss(outputs.main, circle_masks[idx]);
        head_grads.main = std::move(lm.grad);

        double l_c = 0.0, l_p = 0.0, l_d = 0.0;
        if (heads.dynamic) {
          DynamicMaskParams dyn = cfg.dynamic_params;
          dyn.seed = mix_seed(cfg.seed, kTagDynamic, static_cast<std::uint64_t>(idx));
          const MaskPair dynamic_masks = make_dynamic_masks(
              rec.annotations, rec.pixels.rows, rec.pixels.cols, dyn,
              static_cast<std::uint64_t>(step));
          LossGrad ld = l1_map_loss(outputs.dynamic, dynamic_masks);
          l_d = ld.value;
          head_grads.dynamic = std::move(ld.grad);
          scale_pair(head_grads.dynamic, cfg.weights.lambda_d);

          TwoSidedLossGrad lc = consistency_loss(outputs.main, outputs.dynamic);
          l_c = lc.value;
          add_scaled(head_grads.main, lc.grad_a, cfg.weights.lambda_c);
          add_scaled(head_grads.dynamic, lc.grad_b, cfg.weights.lambda_c);
        }
        if (heads.prior) {
          PriorLossGrad lp =
              prior_loss(outputs.prior, priors->get(rec.id), cfg.normalize_prior_loss);
          l_p = lp.value;
          head_grads.prior = std::move(lp.grad);
          for (double& v : head_grads.prior.v) v *= cfg.weights.lambda_p * inv_batch;
        }

        const double l_t = total_loss(lm.value, l_c, l_p, l_d, cfg.weights);
        row.l_m += inv_batch * lm.value;
        row.l_ce += inv_batch * lce.value;
        row.l_iou += inv_batch * liou.value;
        row.l_c += inv_batch * l_c;
        row.l_p += inv_batch * l_p;
        row.l_d += inv_batch * l_d;
        row.l_t += inv_batch * l_t;

        scale_pair(head_grads.main, inv_batch);
        if (heads.dynamic) scale_pair(head_grads.dynamic, inv_batch);
        net.backward(ws, head_grads, grads);
      }
      require_finite(row.l_t, step);
      opt.step(grads);
      rows.push_back(row);
    }
    if (out_dir) {
      save_checkpoint(net,
                      {{"phase", "multitask"},
                       {"epoch", fmt::format("{}", epoch + 1)},
                       {"global_step", fmt::format("{}", step)},
                       {"seed", fmt::format("{}", cfg.seed)}},
                      *out_dir / fmt::format("checkpoint_epoch_{:04d}.bin", epoch + 1));
    }
    if (progress) {
      progress(fmt::format("epoch {}/{}: l_t = {:.6f}", epoch + 1, cfg.epochs_main,
                           rows.back().l_t));
    }
  }

  if (out_dir) {
    save_loss_csv(rows, *out_dir / "losses.csv");
    save_checkpoint(net,
                    {{"phase", "multitask"},
                     {"epoch", fmt::format("{}", cfg.epochs_main)},
                     {"global_step", fmt::format("{}", step)},
                     {"seed", fmt::format("{}", cfg.seed)}},
                    *out_dir / "model.bin");
  }
  return TrainResult{std::move(net), std::move(rows)};
}

}  // namespace cyto
