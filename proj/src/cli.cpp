#include "cytocount/cli.hpp"

#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "cytocount/config.hpp"
#include "cytocount/detect.hpp"
#include "cytocount/eval.hpp"
#include "cytocount/plot.hpp"
#include "cytocount/synthgen.hpp"
#include "cytocount/train.hpp"

namespace cyto {

namespace {

using ordered_json = nlohmann::ordered_json;

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError(fmt::format("cannot write '{}'", path.string()));
  out << text;
}

// Manifest + config snapshot, written before any real work so a run directory
// is reproducible from its own contents. Only run-identity fields go in (no
// output paths): rerunning the same manifest elsewhere must byte-match.
void write_manifest(const std::filesystem::path& out_dir, const std::string& command,
                    const RunConfig& cfg, const std::optional<std::string>& tier) {
  std::filesystem::create_directories(out_dir);
  ordered_json manifest;
  manifest["tool"] = "cytocount";
  manifest["version"] = kVersion;
  manifest["command"] = command;
  if (tier) manifest["tier"] = *tier;
  manifest["seed"] = cfg.seed;
  manifest["data_dir"] = cfg.data_dir;
  manifest["config_snapshot"] = "config_snapshot.cfg";
  write_text_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  write_text_file(out_dir / "config_snapshot.cfg", serialize_run_config(cfg));
}

std::vector<double> parse_radii(const std::string& text) {
  std::vector<double> radii;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string tok = text.substr(start, comma == std::string::npos ? comma : comma - start);
    try {
      std::size_t pos = 0;
      radii.push_back(std::stod(tok, &pos));
      if (pos != tok.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw UserError(fmt::format("bad radius '{}' in --radii '{}'", tok, text));
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (radii.empty()) throw UserError("--radii must list at least one radius");
  for (std::size_t i = 1; i < radii.size(); ++i) {
    if (radii[i] <= radii[i - 1]) throw UserError("--radii must be strictly ascending");
  }
  return radii;
}

int run_synth(const std::string& config_path, const std::string& out_dir) {
  const RunConfig cfg = load_run_config(config_path);
  write_manifest(out_dir, "synth", cfg, std::nullopt);
  generate_dataset(cfg.synth, cfg.synth_train_count, cfg.seed, out_dir, Split::Train, "train_");
  // Offset keeps the per-image seed streams of the two splits disjoint.
  generate_dataset(cfg.synth, cfg.synth_test_count,
                   cfg.seed + static_cast<std::uint64_t>(cfg.synth_train_count), out_dir,
                   Split::Test, "test_");
  fmt::print("wrote {} train / {} test images to {}\n", cfg.synth_train_count,
             cfg.synth_test_count, out_dir);
  return 0;
}

int run_train(const std::string& config_path, const std::string& tier_flag,
              const std::string& out_dir, const std::string& data_override) {
  RunConfig cfg = load_run_config(config_path);
  if (!data_override.empty()) cfg.data_dir = data_override;
  const Tier tier = tier_from_string(tier_flag);
  write_manifest(out_dir, "train", cfg, tier_name(tier));

  const Dataset dataset = load_dataset(cfg.data_dir, Split::Train);
  const TrainConfig train_cfg = ablation_variant(cfg.train, tier);
  const auto progress = [](const std::string& msg) { fmt::print("{}\n", msg); };

  const std::filesystem::path out(out_dir);
  PriorBank priors;
  const PriorBank* priors_ptr = nullptr;
  std::optional<Network> pretrained;
  if (train_cfg.net.heads.prior) {
    PretrainResult pre = pretrain_prior_model(dataset, train_cfg, progress);
    save_loss_csv(pre.losses, out / "pretrain_losses.csv");
    save_prior_bank(pre.priors, out / "priors");
    save_checkpoint(pre.model, {{"phase", "pretrain"}, {"seed", fmt::format("{}", cfg.seed)}},
                    out / "pretrained.bin");
    priors = std::move(pre.priors);
    priors_ptr = &priors;
    if (train_cfg.warm_start) pretrained = std::move(pre.model);
  }
  train_multitask(dataset, priors_ptr, train_cfg, out,
                  pretrained ? &*pretrained : nullptr, progress);
  fmt::print("training done; model at {}\n", (out / "model.bin").string());
  return 0;
}

int run_eval(const std::string& ckpt_path, const std::string& data_dir,
             const std::string& split_flag, const std::string& radii_flag, int min_distance,
             double threshold, const std::string& out_flag) {
  const Split split = split_from_string(split_flag);
  const std::vector<double> radii = parse_radii(radii_flag);
  if (min_distance < 1) throw UserError("--min-distance must be >= 1");
  if (threshold <= 0.0 || threshold >= 1.0) throw UserError("--threshold must be in (0, 1)");

  if (!std::filesystem::exists(ckpt_path)) {
    throw UserError(fmt::format("checkpoint '{}' does not exist", ckpt_path));
  }
  const Network model = load_checkpoint(ckpt_path);
  const Dataset dataset = load_dataset(data_dir, split);
  if (dataset.records.empty()) {
    throw UserError(fmt::format("split '{}' of '{}' is empty", split_flag, data_dir));
  }

  const std::filesystem::path out =
      out_flag.empty() ? std::filesystem::path(ckpt_path).parent_path() /
                             fmt::format("eval_{}", split_name(split))
                       : std::filesystem::path(out_flag);
  std::filesystem::create_directories(out);

  const PostprocParams postproc{min_distance, threshold};
  std::vector<DetectionSet> dets;
  std::vector<std::vector<PointAnnotation>> gts;
  for (const auto& rec : dataset.records) {
    dets.push_back(detect_cells(model, rec.pixels, postproc, rec.id));
    gts.push_back(rec.annotations);
  }
  save_detections_csv(dets, out / "detections.csv");

  const std::vector<SweepPoint> curve = radius_sweep(dets, gts, radii);
  save_sweep_csv(curve, out / "sweep.csv");

  // Headline radius for the summary table: 6 px when swept, else the median.
  double headline = radii[radii.size() / 2];
  for (const double r : radii) {
    if (r == 6.0) headline = 6.0;
  }

  ordered_json report;
  report["split"] = split_name(split);
  report["postprocess"] = {{"min_distance", min_distance}, {"prob_threshold", threshold}};
  report["headline_radius"] = headline;
  report["per_radius"] = ordered_json::array();
  for (const double r : radii) {
    std::vector<MatchReport> reports;
    reports.reserve(dets.size());
    for (std::size_t i = 0; i < dets.size(); ++i) {
      reports.push_back(match_detections(dets[i], gts[i], r));
    }
    const auto totals = total_f1(reports);
    const auto means = mean_f1(reports);
    ClassCounts pooled[2];
    for (const auto& rep : reports) {
      for (int c = 0; c < 2; ++c) {
        pooled[c].tp += rep.counts[c].tp;
        pooled[c].fp += rep.counts[c].fp;
        pooled[c].fn += rep.counts[c].fn;
      }
    }
    ordered_json row;
    row["r"] = r;
    const char* keys[2] = {"class0", "class1"};
    for (int c = 0; c < 2; ++c) {
      row[keys[c]] = {{"tp", pooled[c].tp},
                      {"fp", pooled[c].fp},
                      {"fn", pooled[c].fn},
                      {"precision", totals[c].precision},
                      {"recall", totals[c].recall},
                      {"total_f1", totals[c].f1},
                      {"mean_f1", means[c]}};
    }
    if (r == headline) {
      ordered_json per_image = ordered_json::array();
      for (std::size_t i = 0; i < dets.size(); ++i) {
        const auto scores = f1_scores(reports[i]);
        per_image.push_back({{"id", dets[i].image_id},
                             {"f1_class0", scores[0].f1},
                             {"f1_class1", scores[1].f1}});
      }
      report["per_image"] = std::move(per_image);
    }
    report["per_radius"].push_back(std::move(row));
  }
  write_text_file(out / "eval.json", report.dump(2) + "\n");

  for (const auto& row : report["per_radius"]) {
    if (row["r"] == headline) {
      fmt::print("r={}: total F1 (P) = {:.4f}, total F1 (N) = {:.4f}, "
                 "mean F1 (P) = {:.4f}, mean F1 (N) = {:.4f}\n",
                 headline, row["class1"]["total_f1"].get<double>(),
                 row["class0"]["total_f1"].get<double>(),
                 row["class1"]["mean_f1"].get<double>(),
                 row["class0"]["mean_f1"].get<double>());
    }
  }
  fmt::print("eval artifacts in {}\n", out.string());
  return 0;
}

int run_sweep(const std::string& detections_path, const std::string& data_dir,
              const std::string& split_flag, const std::string& radii_flag,
              const std::string& out_path) {
  const Split split = split_from_string(split_flag);
  const std::vector<double> radii = parse_radii(radii_flag);
  const std::vector<DetectionSet> dets = load_detections_csv(detections_path);
  const Dataset dataset = load_dataset(data_dir, split);

  std::vector<std::vector<PointAnnotation>> gts;
  gts.reserve(dets.size());
  for (const auto& set : dets) {
    const ImageRecord* rec = dataset.find(set.image_id);
    if (!rec) {
      throw UserError(fmt::format("detections reference image '{}' absent from split '{}'",
                                  set.image_id, split_flag));
    }
    gts.push_back(rec->annotations);
  }
  save_sweep_csv(radius_sweep(dets, gts, radii), out_path);
  fmt::print("wrote {}\n", out_path);
  return 0;
}

int run_plot(const std::vector<std::string>& sweep_paths, const std::vector<std::string>& labels,
             const std::string& out_png) {
  if (!labels.empty() && labels.size() != sweep_paths.size()) {
    throw UserError("--label count must match --sweep count");
  }
  std::vector<SweepSeries> series;
  for (std::size_t i = 0; i < sweep_paths.size(); ++i) {
    SweepSeries s;
    s.label = i < labels.size() ? labels[i] : std::filesystem::path(sweep_paths[i]).stem().string();
    s.points = load_sweep_csv(sweep_paths[i]);
    series.push_back(std::move(s));
  }
  render_sweep_plot(series, out_png);
  fmt::print("wrote {}\n", out_png);
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Weakly supervised cell classification and counting"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string config_path, out_dir, data_dir, tier_flag;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled dataset");
  synth->add_option("-c,--config", config_path, "Experiment config file")
      ->required()
      ->check(CLI::ExistingFile);
  synth->add_option("--out", out_dir, "Dataset output directory")->required();

  auto* train = app.add_subcommand("train", "Train a model on a dataset");
  train->add_option("-c,--config", config_path, "Experiment config file")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--tier", tier_flag, "Ablation tier: ours, ours+ or ours++")->required();
  train->add_option("--out", out_dir, "Run output directory")->required();
  train->add_option("--data", data_dir, "Dataset root (overrides data.dir from the config)");

  std::string ckpt_path, split_flag = "test", radii_flag = "4,6,8,10,12,14,16", eval_out;
  int min_distance = 6;
  double threshold = 0.5;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  eval->add_option("--ckpt", ckpt_path, "Model checkpoint")->required();
  eval->add_option("--data", data_dir, "Dataset root")->required();
  eval->add_option("--split", split_flag, "Dataset split (train or test)");
  eval->add_option("--radii", radii_flag, "Match radii, ascending, comma separated");
  eval->add_option("--min-distance", min_distance, "Peak suppression distance in pixels");
  eval->add_option("--threshold", threshold, "Peak probability threshold");
  eval->add_option("--out", eval_out, "Output directory (default: <ckpt dir>/eval_<split>)");

  std::string detections_path, sweep_out;
  auto* sweep = app.add_subcommand("sweep", "Recompute a radius sweep from saved detections");
  sweep->add_option("--detections", detections_path, "detections.csv from a previous eval")
      ->required()
      ->check(CLI::ExistingFile);
  sweep->add_option("--data", data_dir, "Dataset root")->required();
  sweep->add_option("--split", split_flag, "Dataset split (train or test)");
  sweep->add_option("--radii", radii_flag, "Match radii, ascending, comma separated");
  sweep->add_option("--out", sweep_out, "Output sweep CSV path")->required();

  std::vector<std::string> sweep_paths, labels;
  std::string plot_out;
  auto* plot = app.add_subcommand("plot", "Render sweep curves as a two-panel PNG");
  plot->add_option("--sweep", sweep_paths, "Sweep CSV (repeat to overlay series)")
      ->required()
      ->check(CLI::ExistingFile);
  plot->add_option("--label", labels, "Legend label per --sweep (default: file stem)");
  plot->add_option("--out", plot_out, "Output PNG path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // bad usage is a user error
  }

  try {
    if (synth->parsed()) return run_synth(config_path, out_dir);
    if (train->parsed()) return run_train(config_path, tier_flag, out_dir, data_dir);
    if (eval->parsed()) {
      return run_eval(ckpt_path, data_dir, split_flag, radii_flag, min_distance, threshold,
                      eval_out);
    }
    if (sweep->parsed()) {
      return run_sweep(detections_path, data_dir, split_flag, radii_flag, sweep_out);
    }
    if (plot->parsed()) return run_plot(sweep_paths, labels, plot_out);
    return 0;
  } catch (const UserError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    fmt::print(stderr, "internal error: {}\n", e.what());
    return 2;
  }
}

}  // namespace cyto
