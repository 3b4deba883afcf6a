#include <doctest.h>

#include <fmt/format.h>

#include <cstdlib>
#include <fstream>

#include "cytocount/cli.hpp"
#include "cytocount/config.hpp"
#include "helpers.hpp"

using namespace cyto;
using doctest::Approx;

namespace {

int run_cli(std::initializer_list<const char*> args) {
  std::vector<const char*> argv = {"cytocount"};
  argv.insert(argv.end(), args.begin(), args.end());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

std::filesystem::path write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  return path;
}

// A config small enough for in-process end-to-end runs: 64 px images, sparse
// cells, two snappy epochs.
std::string tiny_config_text() {
  return R"(seed = 5
data.dir = data
synth.m = 64
synth.n = 64
synth.n_clusters = 1
synth.cells_per_cluster = 2,3
synth.n_other = 2,4
synth.cell_radius = 3,5
synth.train_count = 3
synth.test_count = 2
net.depth = 2
net.feature_channels = 8
train.epochs_pretrain = 1
train.epochs_main = 2
train.batch_size = 2
train.circle_radius = 3
train.prior_closing_radius = 2
dynamic.radius_min = 2
dynamic.radius_max = 4
)";
}

struct EnvGuard {
  explicit EnvGuard(const char* name) : name_(name) { ::unsetenv(name); }
  ~EnvGuard() { ::unsetenv(name_); }
  const char* name_;
};

}  // namespace

TEST_SUITE("config") {

TEST_CASE("the default config serializes and loads back unchanged") {
  EnvGuard guard("CYTOCOUNT_SEED");
  testutil::TempDir dir("config_rt");
  RunConfig cfg = default_run_config();
  cfg.seed = 99;
  cfg.train.seed = 99;
  cfg.data_dir = "some/dataset";
  cfg.synth.n_clusters = 5;
  cfg.train.weights.lambda_p = 0.25;
  cfg.train.normalize_prior_loss = false;
  cfg.train.warm_start = true;

  const auto path = write_file(dir.path() / "run.cfg", serialize_run_config(cfg));
  const RunConfig back = load_run_config(path);
  CHECK(back.seed == cfg.seed);
  CHECK(back.data_dir == cfg.data_dir);
  CHECK(back.synth.n_clusters == 5);
  CHECK(back.train.weights.lambda_p == Approx(0.25));
  CHECK(back.train.normalize_prior_loss == false);
  CHECK(back.train.warm_start == true);
  CHECK(back.train.seed == cfg.seed);
  CHECK(serialize_run_config(back) == serialize_run_config(cfg));
}

TEST_CASE("config errors name the file and line") {
  EnvGuard guard("CYTOCOUNT_SEED");
  testutil::TempDir dir("config_err");

  const auto unknown = write_file(dir.path() / "a.cfg", "seed = 1\nsynth.radius = 4\n");
  CHECK_THROWS_WITH_AS(load_run_config(unknown),
                       doctest::Contains(fmt::format("{}:2", unknown.string()).c_str()),
                       UserError);

  const auto dup = write_file(dir.path() / "b.cfg", "seed = 1\nseed = 2\n");
  CHECK_THROWS_WITH_AS(load_run_config(dup), doctest::Contains("duplicate"), UserError);

  const auto bad_value = write_file(dir.path() / "c.cfg", "synth.m = sixty\n");
  CHECK_THROWS_WITH_AS(load_run_config(bad_value), doctest::Contains("c.cfg:1"), UserError);

  const auto no_eq = write_file(dir.path() / "d.cfg", "seed 1\n");
  CHECK_THROWS_AS(load_run_config(no_eq), UserError);

  const auto bad_range = write_file(dir.path() / "e.cfg", "synth.n_other = 5,2\n");
  CHECK_THROWS_AS(load_run_config(bad_range), UserError);

  CHECK_THROWS_AS(load_run_config(dir.path() / "absent.cfg"), UserError);
}

TEST_CASE("comments, blank lines and inline comments are ignored") {
  EnvGuard guard("CYTOCOUNT_SEED");
  testutil::TempDir dir("config_comments");
  const auto path = write_file(dir.path() / "run.cfg",
                               "# leading comment\n\nseed = 7   # trailing comment\n");
  CHECK(load_run_config(path).seed == 7);
}

TEST_CASE("CYTOCOUNT_SEED overrides the configured seed everywhere") {
  EnvGuard guard("CYTOCOUNT_SEED");
  testutil::TempDir dir("config_env");
  const auto path = write_file(dir.path() / "run.cfg", "seed = 7\n");

  ::setenv("CYTOCOUNT_SEED", "1234", 1);
  const RunConfig cfg = load_run_config(path);
  CHECK(cfg.seed == 1234);
  CHECK(cfg.train.seed == 1234);

  ::setenv("CYTOCOUNT_SEED", "not-a-number", 1);
  CHECK_THROWS_AS(load_run_config(path), UserError);
}

}  // TEST_SUITE

TEST_SUITE("cli") {

TEST_CASE("synth, train, eval and plot run end to end in process") {
  EnvGuard guard("CYTOCOUNT_SEED");
  testutil::TempDir dir("cli_e2e");
  const auto cfg = write_file(dir.path() / "run.cfg", tiny_config_text());
  const auto data = (dir.path() / "data").string();
  const auto run = (dir.path() / "run").string();

  REQUIRE(run_cli({"synth", "-c", cfg.string().c_str(), "--out", data.c_str()}) == 0);
  CHECK(std::filesystem::exists(dir.path() / "data/images/train_0000.png"));
  CHECK(std::filesystem::exists(dir.path() / "data/annotations/test_0001.csv"));
  CHECK(std::filesystem::exists(dir.path() / "data/splits/train.txt"));
  CHECK(std::filesystem::exists(dir.path() / "data/manifest.json"));

  REQUIRE(run_cli({"train", "-c", cfg.string().c_str(), "--data", data.c_str(), "--tier",
                   "ours++", "--out", run.c_str()}) == 0);
  CHECK(std::filesystem::exists(dir.path() / "run/model.bin"));
  CHECK(std::filesystem::exists(dir.path() / "run/losses.csv"));
  CHECK(std::filesystem::exists(dir.path() / "run/pretrain_losses.csv"));
  CHECK(std::filesystem::exists(dir.path() / "run/priors"));
  CHECK(std::filesystem::exists(dir.path() / "run/manifest.json"));

  const auto model = (dir.path() / "run/model.bin").string();
  const auto eval_out = (dir.path() / "eval").string();
  REQUIRE(run_cli({"eval", "--ckpt", model.c_str(), "--data", data.c_str(), "--out",
                   eval_out.c_str(), "--radii", "4,6,8"}) == 0);
  CHECK(std::filesystem::exists(dir.path() / "eval/eval.json"));
  CHECK(std::filesystem::exists(dir.path() / "eval/detections.csv"));
  CHECK(std::filesystem::exists(dir.path() / "eval/sweep.csv"));

  const auto sweep = (dir.path() / "eval/sweep.csv").string();
  const auto png = (dir.path() / "curve.png").string();
  REQUIRE(run_cli({"plot", "--sweep", sweep.c_str(), "--sweep", sweep.c_str(), "--label",
                   "a", "--label", "b", "--out", png.c_str()}) == 0);
  REQUIRE(std::filesystem::exists(png));
  CHECK(std::filesystem::file_size(png) > 1000);
}

TEST_CASE("bad invocations exit with the user-error code") {
  EnvGuard guard("CYTOCOUNT_SEED");
  testutil::TempDir dir("cli_bad");
  const auto cfg = write_file(dir.path() / "run.cfg", tiny_config_text());

  // Missing config file: CLI validation rejects the path.
  CHECK(run_cli({"synth", "-c", "/nonexistent/run.cfg", "--out", "x"}) == 1);
  // Unknown tier.
  const auto out = (dir.path() / "out").string();
  CHECK(run_cli({"train", "-c", cfg.string().c_str(), "--tier", "quux", "--out",
                 out.c_str()}) == 1);
  // Unknown subcommand.
  CHECK(run_cli({"frobnicate"}) == 1);
  // eval on a missing checkpoint.
  CHECK(run_cli({"eval", "--ckpt", (dir.path() / "no.bin").string().c_str(), "--data",
                 (dir.path() / "nodata").string().c_str(), "--out", out.c_str()}) == 1);
  // plot on a malformed sweep file.
  const auto bad = write_file(dir.path() / "bad.csv", "r,class,total_f1,mean_f1\n4,0\n");
  CHECK(run_cli({"plot", "--sweep", bad.string().c_str(), "--out",
                 (dir.path() / "p.png").string().c_str()}) == 1);
}

TEST_CASE("identical seeds give identical datasets; different seeds differ") {
  EnvGuard guard("CYTOCOUNT_SEED");
  testutil::TempDir dir("cli_det");
  const auto cfg = write_file(dir.path() / "run.cfg", tiny_config_text());

  const auto read_bytes = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  };

  const auto a = (dir.path() / "a").string();
  const auto b = (dir.path() / "b").string();
  REQUIRE(run_cli({"synth", "-c", cfg.string().c_str(), "--out", a.c_str()}) == 0);
  REQUIRE(run_cli({"synth", "-c", cfg.string().c_str(), "--out", b.c_str()}) == 0);
  CHECK(read_bytes(dir.path() / "a/images/train_0000.png") ==
        read_bytes(dir.path() / "b/images/train_0000.png"));
  CHECK(read_bytes(dir.path() / "a/annotations/train_0002.csv") ==
        read_bytes(dir.path() / "b/annotations/train_0002.csv"));

  ::setenv("CYTOCOUNT_SEED", "777", 1);
  const auto c = (dir.path() / "c").string();
  REQUIRE(run_cli({"synth", "-c", cfg.string().c_str(), "--out", c.c_str()}) == 0);
  CHECK(read_bytes(dir.path() / "a/images/train_0000.png") !=
        read_bytes(dir.path() / "c/images/train_0000.png"));
}

}  // TEST_SUITE
