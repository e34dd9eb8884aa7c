#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "cli_app.hpp"
#include "iml/checkpoint.hpp"
#include "iml/experiment_config.hpp"

using namespace iml;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("iml_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("dispatch: unknown subcommand fails, help succeeds") {
  CHECK(imltool::dispatch({"definitely-not-a-command"}) != 0);
  CHECK(imltool::dispatch({}) != 0);
}

TEST_CASE("dispatch: config file plus seed override drives a tiny run") {
  TempDir dir;
  ExperimentConfig base;
  base.name = "from-config";
  base.meta.inner_steps = 5;
  base.meta.meta_updates = 3;
  base.meta.batch_size = 8;
  base.data.blob_dim = 6;
  base.data.blob_classes = 3;
  base.data.blob_per_class = 30;
  base.data.split = SplitSpec{30, 20, 20, 5, true};
  base.seeds = {7};  // overridden below
  fs::path cfg = dir.path / "exp.cfg";
  std::ofstream(cfg) << emit_config(base);

  int rc = imltool::dispatch({"overfit-val", "--config", cfg.string(), "--seeds",
                              "231,981,1110", "--out", dir.str()});
  CHECK(rc == 0);
  std::string csv = slurp(dir.path / "results.csv");
  CHECK(csv.find("from-config,231,") != std::string::npos);
  CHECK(csv.find("from-config,981,") != std::string::npos);
  CHECK(csv.find("from-config,1110,") != std::string::npos);
  // Three data rows, stable seed order.
  CHECK(csv.find("231") < csv.find("981"));
  CHECK(csv.find("981") < csv.find("1110"));
}

TEST_CASE("dispatch: t1t2 schedule changes the method column") {
  TempDir dir;
  int rc = imltool::dispatch({"overfit-val", "--schedule", "t1t2", "--meta-updates", "3",
                              "--inner-steps", "4", "--seeds", "231", "--out", dir.str()});
  CHECK(rc == 0);
  CHECK(slurp(dir.path / "results.csv").find(",t1t2,") != std::string::npos);
}

TEST_CASE("dispatch: a saved checkpoint round-trips against its config hash") {
  TempDir dir;
  int rc = imltool::dispatch({"overfit-val", "--meta-updates", "4", "--inner-steps", "5",
                              "--seeds", "231", "--patience", "10", "--out", dir.str()});
  CHECK(rc == 0);
  fs::path ckpt = dir.path / "checkpoint_seed231.ckpt";
  REQUIRE(fs::exists(ckpt));
  LoadedCheckpoint loaded = load_checkpoint(ckpt.string());
  CHECK(loaded.checkpoint.params.param_count() > 0);
  CHECK(loaded.config_hash != 0);
}

TEST_CASE("dispatch: missing config file is a clean failure") {
  CHECK(imltool::dispatch({"overfit-val", "--config", "/nonexistent/nope.cfg"}) != 0);
}

TEST_CASE("dispatch: json and plot artifacts appear when requested") {
  TempDir dir;
  int rc = imltool::dispatch({"overfit-val", "--meta-updates", "3", "--inner-steps", "4",
                              "--seeds", "231", "--json", "--plots", "--out", dir.str()});
  CHECK(rc == 0);
  CHECK(fs::exists(dir.path / "results.json"));
  CHECK(fs::exists(dir.path / "val_loss.svg"));
  CHECK(fs::exists(dir.path / "train_loss.svg"));
}
