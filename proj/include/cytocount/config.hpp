// Flat key-value experiment configuration ("key = value" lines, '#' comments)
// with a fixed schema. Unknown keys and malformed values are user errors, so
// typos fail loudly. The same file drives synthesis and training; flag
// overrides happen in the CLI layer.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "cytocount/synthgen.hpp"
#include "cytocount/train.hpp"

namespace cyto {

struct RunConfig {
  std::uint64_t seed = 1;      // master seed; mirrored into train.seed
  std::string data_dir;        // dataset root used by train/eval
  SynthSpec synth;
  int synth_train_count = 40;
  int synth_test_count = 10;
  TrainConfig train;
};

RunConfig default_run_config();

// Parses `path`, applies the CYTOCOUNT_SEED environment override (when set it
// replaces the seed), and validates every value. Throws UserError with the
// offending line on any problem.
RunConfig load_run_config(const std::filesystem::path& path);

// Serializes a config back into the flat format with every key present, in a
// fixed order — the run-manifest snapshot. Round-trips through
// load_run_config (modulo the environment override).
std::string serialize_run_config(const RunConfig& cfg);

}  // namespace cyto
