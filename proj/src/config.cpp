#include "cytocount/config.hpp"

#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <string>

#include <fmt/format.h>

namespace cyto {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

long long parse_int(const std::string& s) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(fmt::format("expected an integer, got '{}'", s));
  }
}

int parse_i32(const std::string& s) {
  const long long v = parse_int(s);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw std::invalid_argument(fmt::format("integer out of range: '{}'", s));
  }
  return static_cast<int>(v);
}

std::uint64_t parse_u64(const std::string& s) {
  try {
    if (s.empty() || s[0] == '-') throw std::invalid_argument("");
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(fmt::format("expected an unsigned integer, got '{}'", s));
  }
}

double parse_real(const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(fmt::format("expected a number, got '{}'", s));
  }
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument(fmt::format("expected true or false, got '{}'", s));
}

// "lo,hi" pairs for ranges.
std::pair<std::string, std::string> split_pair(const std::string& s) {
  const auto comma = s.find(',');
  if (comma == std::string::npos) {
    throw std::invalid_argument(fmt::format("expected 'lo,hi', got '{}'", s));
  }
  return {trim(s.substr(0, comma)), trim(s.substr(comma + 1))};
}

IntRange parse_int_range(const std::string& s) {
  const auto [lo, hi] = split_pair(s);
  return IntRange{parse_i32(lo), parse_i32(hi)};
}

// Returns false for unknown keys; throws std::invalid_argument on bad values.
bool apply_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "seed") cfg.seed = parse_u64(value);
  else if (key == "data.dir") cfg.data_dir = value;
  else if (key == "synth.m") cfg.synth.m = parse_i32(value);
  else if (key == "synth.n") cfg.synth.n = parse_i32(value);
  else if (key == "synth.n_clusters") cfg.synth.n_clusters = parse_i32(value);
  else if (key == "synth.cells_per_cluster") cfg.synth.cells_per_cluster = parse_int_range(value);
  else if (key == "synth.n_other") cfg.synth.n_other = parse_int_range(value);
  else if (key == "synth.cell_radius") {
    const auto [lo, hi] = split_pair(value);
    cfg.synth.cell_radius_lo = parse_real(lo);
    cfg.synth.cell_radius_hi = parse_real(hi);
  } else if (key == "synth.shape_jitter") cfg.synth.shape_jitter = parse_real(value);
  else if (key == "synth.stain_intensity") cfg.synth.stain_intensity = parse_real(value);
  else if (key == "synth.background_noise") cfg.synth.background_noise = parse_real(value);
  else if (key == "synth.train_count") cfg.synth_train_count = parse_i32(value);
  else if (key == "synth.test_count") cfg.synth_test_count = parse_i32(value);
  else if (key == "net.depth") cfg.train.net.depth = parse_i32(value);
  else if (key == "net.feature_channels") cfg.train.net.feature_channels = parse_i32(value);
  else if (key == "train.epochs_pretrain") cfg.train.epochs_pretrain = parse_i32(value);
  else if (key == "train.epochs_main") cfg.train.epochs_main = parse_i32(value);
  else if (key == "train.batch_size") cfg.train.batch_size = parse_i32(value);
  else if (key == "train.learning_rate") cfg.train.learning_rate = parse_real(value);
  else if (key == "train.momentum_beta1") cfg.train.momentum_beta1 = parse_real(value);
  else if (key == "train.beta2") cfg.train.beta2 = parse_real(value);
  else if (key == "train.weight_decay") cfg.train.weight_decay = parse_real(value);
  else if (key == "train.alpha") cfg.train.weights.alpha = parse_real(value);
  else if (key == "train.lambda_c") cfg.train.weights.lambda_c = parse_real(value);
  else if (key == "train.lambda_p") cfg.train.weights.lambda_p = parse_real(value);
  else if (key == "train.lambda_d") cfg.train.weights.lambda_d = parse_real(value);
  else if (key == "train.circle_radius") cfg.train.circle_radius = parse_real(value);
  else if (key == "train.prior_threshold") cfg.train.prior_threshold = parse_real(value);
  else if (key == "train.prior_closing_radius") cfg.train.prior_closing_radius = parse_i32(value);
  else if (key == "train.normalize_prior_loss") cfg.train.normalize_prior_loss = parse_bool(value);
  else if (key == "train.warm_start") cfg.train.warm_start = parse_bool(value);
  else if (key == "dynamic.vertex_min") cfg.train.dynamic_params.vertex_min = parse_i32(value);
  else if (key == "dynamic.vertex_max") cfg.train.dynamic_params.vertex_max = parse_i32(value);
  else if (key == "dynamic.radius_min") cfg.train.dynamic_params.radius_min = parse_real(value);
  else if (key == "dynamic.radius_max") cfg.train.dynamic_params.radius_max = parse_real(value);
  else if (key == "dynamic.jitter") cfg.train.dynamic_params.radial_jitter = parse_real(value);
  else return false;
  return true;
}

}  // namespace

RunConfig default_run_config() {
  RunConfig cfg;
  cfg.data_dir = "data";
  // The raw prior term sums |G - P| over all pixels and would swamp the
  // pixel-averaged losses at realistic image sizes, so runs normalize it.
  cfg.train.normalize_prior_loss = true;
  cfg.train.seed = cfg.seed;
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UserError(fmt::format("cannot open config file '{}'", path.string()));

  RunConfig cfg = default_run_config();
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = line;
    if (const auto hash = s.find('#'); hash != std::string::npos) s.erase(hash);
    s = trim(s);
    if (s.empty()) continue;

    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw UserError(
          fmt::format("{}:{}: expected 'key = value', got '{}'", path.string(), lineno, s));
    }
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (key.empty()) {
      throw UserError(fmt::format("{}:{}: missing key before '='", path.string(), lineno));
    }
    if (!seen.insert(key).second) {
      throw UserError(fmt::format("{}:{}: duplicate key '{}'", path.string(), lineno, key));
    }
    try {
      if (!apply_key(cfg, key, value)) {
        throw UserError(fmt::format("{}:{}: unknown config key '{}'", path.string(), lineno, key));
      }
    } catch (const std::invalid_argument& e) {
      throw UserError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }

  if (const char* env = std::getenv("CYTOCOUNT_SEED")) {
    try {
      cfg.seed = parse_u64(env);
    } catch (const std::invalid_argument&) {
      throw UserError(
          fmt::format("CYTOCOUNT_SEED must be an unsigned integer, got '{}'", env));
    }
  }
  cfg.train.seed = cfg.seed;

  if (cfg.synth_train_count < 1) throw UserError("synth.train_count must be >= 1");
  if (cfg.synth_test_count < 1) throw UserError("synth.test_count must be >= 1");
  cfg.synth.validate();
  cfg.train.validate();
  return cfg;
}

std::string serialize_run_config(const RunConfig& cfg) {
  std::string out;
  const auto& t = cfg.train;
  const auto& s = cfg.synth;
  out += fmt::format("seed = {}\n", cfg.seed);
  out += fmt::format("data.dir = {}\n", cfg.data_dir);
  out += fmt::format("synth.m = {}\n", s.m);
  out += fmt::format("synth.n = {}\n", s.n);
  out += fmt::format("synth.n_clusters = {}\n", s.n_clusters);
  out += fmt::format("synth.cells_per_cluster = {},{}\n", s.cells_per_cluster.lo,
                     s.cells_per_cluster.hi);
  out += fmt::format("synth.n_other = {},{}\n", s.n_other.lo, s.n_other.hi);
  out += fmt::format("synth.cell_radius = {},{}\n", s.cell_radius_lo, s.cell_radius_hi);
  out += fmt::format("synth.shape_jitter = {}\n", s.shape_jitter);
  out += fmt::format("synth.stain_intensity = {}\n", s.stain_intensity);
  out += fmt::format("synth.background_noise = {}\n", s.background_noise);
  out += fmt::format("synth.train_count = {}\n", cfg.synth_train_count);
  out += fmt::format("synth.test_count = {}\n", cfg.synth_test_count);
  out += fmt::format("net.depth = {}\n", t.net.depth);
  out += fmt::format("net.feature_channels = {}\n", t.net.feature_channels);
  out += fmt::format("train.epochs_pretrain = {}\n", t.epochs_pretrain);
  out += fmt::format("train.epochs_main = {}\n", t.epochs_main);
  out += fmt::format("train.batch_size = {}\n", t.batch_size);
  out += fmt::format("train.learning_rate = {}\n", t.learning_rate);
  out += fmt::format("train.momentum_beta1 = {}\n", t.momentum_beta1);
  out += fmt::format("train.beta2 = {}\n", t.beta2);
  out += fmt::format("train.weight_decay = {}\n", t.weight_decay);
  out += fmt::format("train.alpha = {}\n", t.weights.alpha);
  out += fmt::format("train.lambda_c = {}\n", t.weights.lambda_c);
  out += fmt::format("train.lambda_p = {}\n", t.weights.lambda_p);
  out += fmt::format("train.lambda_d = {}\n", t.weights.lambda_d);
  out += fmt::format("train.circle_radius = {}\n", t.circle_radius);
  out += fmt::format("train.prior_threshold = {}\n", t.prior_threshold);
  out += fmt::format("train.prior_closing_radius = {}\n", t.prior_closing_radius);
  out += fmt::format("train.normalize_prior_loss = {}\n",
                     t.normalize_prior_loss ? "true" : "false");
  out += fmt::format("train.warm_start = {}\n", t.warm_start ? "true" : "false");
  out += fmt::format("dynamic.vertex_min = {}\n", t.dynamic_params.vertex_min);
  out += fmt::format("dynamic.vertex_max = {}\n", t.dynamic_params.vertex_max);
  out += fmt::format("dynamic.radius_min = {}\n", t.dynamic_params.radius_min);
  out += fmt::format("dynamic.radius_max = {}\n", t.dynamic_params.radius_max);
  out += fmt::format("dynamic.jitter = {}\n", t.dynamic_params.radial_jitter);
  return out;
}

}  // namespace cyto
