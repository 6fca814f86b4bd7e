#include <doctest.h>

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "afflab/cli.hpp"
#include "afflab/convnet.hpp"
#include "test_util.hpp"

using namespace afflab;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "afflab");
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  testutil::TempDir dir("cli_usage");
  const std::string out = dir.path.string();
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"frobnicate"}).code == kExitUsage);
  CHECK(cli({"--out", out, "dataset", "--scenes", "0"}).code == kExitUsage);
  CHECK(cli({"--out", out, "dataset", "--scenes", "many"}).code == kExitUsage);
  CHECK(cli({"--out", out, "train", "--task", "push"}).code == kExitUsage);
  CHECK(cli({"--out", out, "--config", (dir.path / "missing.txt").string(), "dataset"}).code == kExitUsage);
  const auto help = cli({"--help"});
  CHECK(help.code == kExitOk);
  CHECK(help.out.find("bench") != std::string::npos);
}

TEST_CASE("data and model errors") {
  testutil::TempDir dir("cli_err");
  const std::string out = dir.path.string();
  const auto missing = cli({"--out", out, "pretrain", "--task", "edge", "--dataset", (dir.path / "nope").string()});
  CHECK(missing.code == kExitData);
  CHECK_FALSE(missing.err.empty());

  nn::save_params(nn::init_params(1), dir.path / "w.anp1");
  const std::string bytes = slurp(dir.path / "w.anp1");
  std::ofstream(dir.path / "cut.anp1", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  CHECK(cli({"--out", out, "eval", "--task", "suction", "--weights", (dir.path / "cut.anp1").string()}).code ==
        kExitModel);
  CHECK(cli({"--out", out, "train", "--task", "suction", "--init", "full", "--from", (dir.path / "cut.anp1").string(),
             "--attempts", "1"})
            .code == kExitModel);
}

TEST_CASE("end-to-end commands are reproducible") {
  testutil::TempDir a("cli_a"), b("cli_b");
  for (const auto* dir : {&a, &b}) {
    const std::string out = dir->path.string();
    REQUIRE(cli({"--out", out, "--seed", "3", "dataset", "--scenes", "3"}).code == kExitOk);
    REQUIRE(cli({"--out", out, "--seed", "3", "pretrain", "--task", "foreground", "--steps", "3"}).code == kExitOk);
    REQUIRE(cli({"--out", out, "--seed", "3", "train", "--task", "suction", "--init", "backbone_only", "--from",
                 (dir->path / "foreground.anp1").string(), "--attempts", "4"})
                .code == kExitOk);
    const auto ev = cli({"--out", out, "--seed", "3", "eval", "--task", "suction", "--objects", "test", "--weights",
                         (dir->path / "suction_backbone_only.anp1").string()});
    REQUIRE(ev.code == kExitOk);
    const auto record = nlohmann::json::parse(ev.out);
    CHECK(record["attempts"].get<int>() <= 15);
    CHECK(record["task"] == "suction");
  }
  for (const char* file : {"dataset/scene_00000.ahm", "dataset/scene_00002.edge.alb", "dataset/norm_stats.txt",
                           "foreground.anp1", "suction_backbone_only.anp1", "suction_backbone_only.curve.csv",
                           "eval_suction_test.json"}) {
    INFO(std::string(file));
    REQUIRE(fs::exists(a.path / file));
    CHECK(slurp(a.path / file) == slurp(b.path / file));
  }
  // timestamps live only in the sidecar logs
  CHECK(slurp(a.path / "train.log").find("start train") != std::string::npos);

  const std::string resolved = slurp(a.path / "resolved_config_train.txt");
  CHECK(resolved.find("attempts = 4") != std::string::npos);
  CHECK(resolved.find("init = backbone_only") != std::string::npos);
  CHECK(resolved.find("lr = ") != std::string::npos);
}

TEST_CASE("config file values are overridden by flags") {
  testutil::TempDir dir("cli_cfg");
  const std::string out = dir.path.string();
  std::ofstream(dir.path / "run.cfg") << "[global]\nseed = 5\n\n[dataset]\nscenes = 2\nobjects = test\n";
  REQUIRE(cli({"--out", out, "--config", (dir.path / "run.cfg").string(), "dataset", "--scenes", "1"}).code ==
          kExitOk);
  CHECK(fs::exists(dir.path / "dataset/scene_00000.ahm"));
  CHECK_FALSE(fs::exists(dir.path / "dataset/scene_00001.ahm"));
  const std::string resolved = slurp(dir.path / "resolved_config_dataset.txt");
  CHECK(resolved.find("objects = test") != std::string::npos);
  CHECK(resolved.find("seed = 5") != std::string::npos);
}

TEST_CASE("bench with one seed reports a degenerate interval") {
  testutil::TempDir dir("cli_bench");
  const std::string out = dir.path.string();
  const auto r = cli({"--out", out, "bench", "--seeds", "1", "--vision-tasks", "random", "--tasks", "suction",
                      "--dataset-scenes", "2", "--suction-attempts", "2", "--threads", "1"});
  REQUIRE(r.code == kExitOk);
  std::ifstream csv(dir.path / "report.csv");
  std::string line;
  std::getline(csv, line);
  CHECK(line == "vision_task,strategy,affordance_task,object_set,mean,ci95_low,ci95_high,n_seeds");
  int rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
    REQUIRE(f.size() == 8);
    CHECK(f[4] == f[5]);
    CHECK(f[4] == f[6]);
    CHECK(f[7] == "1");
  }
  CHECK(rows == 3);
  CHECK(fs::exists(dir.path / "report.txt"));
}

TEST_CASE("render writes heatmaps") {
  testutil::TempDir dir("cli_render");
  const std::string out = dir.path.string();
  REQUIRE(cli({"--out", out, "render", "--task", "grasp", "--plane", "3"}).code == kExitOk);
  CHECK(fs::exists(dir.path / "render/plane_03.png"));
  CHECK(fs::exists(dir.path / "render/overlay.png"));
  CHECK(cli({"--out", out, "render", "--task", "grasp", "--plane", "16"}).code == kExitUsage);
}
