#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <unistd.h>

#include "cli.hpp"
#include "minigcn/classmap.hpp"
#include "minigcn/config.hpp"
#include "minigcn/data.hpp"
#include "minigcn/model.hpp"
#include "minigcn/sampler.hpp"

using namespace minigcn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("minigcn_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

// Synth scene plus its config; returns the config path.
std::string make_scene(const TempDir& dir) {
  REQUIRE(invoke({"synth", "--out", dir / "data"}).code == 0);
  return dir / "data/config.json";
}

}  // namespace

TEST_CASE("config precedence is flags over file over defaults") {
  TempDir dir("cfg");
  {
    std::ofstream os(dir / "c.json");
    os << R"({"train": {"epochs": 7, "batch": 16}, "graph": {"sigma": 2}})";
  }
  const RunConfig d = resolve_run_config(std::nullopt, {});
  CHECK(d.train.epochs == 200);
  CHECK(d.train.batch == 32);
  CHECK(d.train.base_lr == 0.001);
  CHECK(d.train.l2 == 0.001);
  CHECK(d.train.bn_momentum == 0.9);
  CHECK(d.train.graph_k == 10);
  CHECK(d.train.graph_sigma == 1.0);
  const RunConfig f = resolve_run_config(fs::path(dir / "c.json"), {});
  CHECK(f.train.epochs == 7);
  CHECK(f.train.batch == 16);
  CHECK(f.train.graph_sigma == 2.0);
  const RunConfig o = resolve_run_config(fs::path(dir / "c.json"), {"--train.epochs=3", "model.architecture=funet-c"});
  CHECK(o.train.epochs == 3);
  CHECK(o.train.batch == 16);
  CHECK(o.model.architecture == Architecture::funet_c);
  const RunConfig s = resolve_run_config(std::nullopt, {}, std::string("42"));
  CHECK(s.train.seed == 42);
  CHECK(resolve_run_config(std::nullopt, {"train.seed=5"}, std::string("42")).train.seed == 5);

  CHECK_THROWS_AS(resolve_run_config(std::nullopt, {"train.epoch=3"}), ConfigError);
  CHECK_THROWS_AS(resolve_run_config(std::nullopt, {"train.epochs=2.5"}), ConfigError);
  CHECK_THROWS_AS(resolve_run_config(std::nullopt, {"train.batch=1"}), ConfigError);
  CHECK_THROWS_AS(resolve_run_config(std::nullopt, {"model.architecture=resnet"}), ConfigError);
  CHECK_THROWS_AS(resolve_run_config(std::nullopt, {}, std::string("-3")), ConfigError);
  CHECK_THROWS_AS(resolve_run_config(fs::path(dir / "missing.json"), {}), IoError);
  const RunConfig back = resolve_run_config(std::nullopt, {"graph.k=4", "paths.cube=a.hsc"});
  CHECK(run_config_json(back).find("\"k\": 4") != std::string::npos);
}

TEST_CASE("exit codes are stable") {
  TempDir dir("codes");
  const std::string cfg = make_scene(dir);
  CHECK(invoke({"--help"}).code == 0);
  CHECK(invoke({}).code == 1);
  CHECK(invoke({"train", "--bogus"}).code == 1);
  CHECK(invoke({"train", "-c", cfg, "--train.epoch=3"}).code == 1);
  CHECK(invoke({"train", "-c", dir / "nope.json"}).code == 2);
  CHECK(invoke({"eval", "-c", cfg, "--paths.checkpoint=" + dir / "missing.mgk", "--paths.output=" + dir / "r.csv"}).code == 2);
  const Run missing = invoke({"train", "--paths.cube=" + dir / "none.hsc"});
  CHECK(missing.code == 2);
  const Run bad = invoke({"train", "-c", cfg, "--train.epochs=1", "--paths.output=" + dir / "log.csv",
                       "--paths.checkpoint=" + dir / "m.mgk", "--train.base_lr=1e300"});
  CHECK(bad.code == 1);
  CHECK(bad.err.find("epoch") != std::string::npos);
  CHECK(bad.err.find(".cpp:") != std::string::npos);
}

TEST_CASE("train is deterministic and epochs=0 writes the initialization") {
  TempDir dir("train");
  const std::string cfg = make_scene(dir);
  auto train_to = [&](const std::string& tag, std::vector<std::string> extra) {
    std::vector<std::string> args{"train", "-c", cfg, "--log-every=0", "--paths.checkpoint=" + dir / (tag + ".mgk"),
                                  "--paths.output=" + dir / (tag + ".csv")};
    args.insert(args.end(), extra.begin(), extra.end());
    REQUIRE(invoke(args).code == 0);
  };
  train_to("a", {"--train.epochs=5"});
  train_to("b", {"--train.epochs=5"});
  CHECK(slurp(dir / "a.mgk") == slurp(dir / "b.mgk"));
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  CHECK(read_csv(dir / "a.csv").size() == 6);

  train_to("s", {"--train.epochs=5", "--train.seed=9"});
  CHECK(slurp(dir / "a.mgk") != slurp(dir / "s.mgk"));
  ::setenv("MGK_SEED", "9", 1);
  train_to("e", {"--train.epochs=5"});
  ::unsetenv("MGK_SEED");
  CHECK(slurp(dir / "e.mgk") == slurp(dir / "s.mgk"));

  train_to("z", {"--train.epochs=0"});
  const Model loaded = load_model(dir / "z.mgk");
  const Model init = build_model(loaded.config, stream_seed(0, 0));
  REQUIRE(loaded.layers.size() == init.layers.size());
  for (std::size_t i = 0; i < init.layers.size(); ++i) CHECK(loaded.layers[i] == init.layers[i]);
}

TEST_CASE("training on the synthetic scene converges") {
  TempDir dir("conv");
  const std::string cfg = make_scene(dir);
  REQUIRE(invoke({"train", "-c", cfg, "--train.epochs=50", "--log-every=0", "--paths.checkpoint=" + dir / "m.mgk",
               "--paths.output=" + dir / "log.csv"})
              .code == 0);
  const auto rows = read_csv(dir / "log.csv");
  REQUIRE(rows.size() == 51);
  CHECK(rows[0] == std::vector<std::string>{"epoch", "lr", "loss", "train_oa"});
  CHECK(std::stod(rows.back()[2]) < 0.1);

  SUBCASE("eval reports are self-consistent and train OA >= test OA") {
    REQUIRE(invoke({"eval", "-c", cfg, "--paths.checkpoint=" + dir / "m.mgk", "--paths.output=" + dir / "test.csv"}).code == 0);
    REQUIRE(invoke({"eval", "-c", cfg, "--side", "train", "--paths.checkpoint=" + dir / "m.mgk",
                 "--paths.output=" + dir / "train.csv"})
                .code == 0);
    CHECK(fs::exists(dir / "test.txt"));
    auto metric = [](const std::vector<std::vector<std::string>>& r, const std::string& name) {
      for (const auto& row : r)
        if (row.size() == 2 && row[0] == name) return std::stod(row[1]);
      FAIL("metric missing: " << name);
      return 0.0;
    };
    const auto test = read_csv(dir / "test.csv");
    const auto train = read_csv(dir / "train.csv");
    CHECK(metric(train, "OA") >= metric(test, "OA"));
    double sum = 0.0;
    int classes = 0;
    for (std::size_t i = 1; i < test.size(); ++i) {
      if (test[i][0] == "OA") break;
      sum += std::stod(test[i][1]);
      ++classes;
    }
    CHECK(classes == 3);
    CHECK(metric(test, "AA") == doctest::Approx(sum / classes).epsilon(1e-12));
  }

  SUBCASE("prediction map agrees with the ground-truth map") {
    REQUIRE(invoke({"predict-map", "-c", cfg, "--ground-truth", "--paths.output=" + dir / "gt.ppm"}).code == 0);
    REQUIRE(invoke({"predict-map", "-c", cfg, "--paths.checkpoint=" + dir / "m.mgk", "--paths.output=" + dir / "pred.ppm"})
                .code == 0);
    std::ifstream a(dir / "gt.ppm", std::ios::binary), b(dir / "pred.ppm", std::ios::binary);
    const PixelImage gt = read_ppm(a), pred = read_ppm(b);
    const LabelGrid labels = load_labels(dir / "data/labels.hsl");
    REQUIRE(gt.pixels.size() == labels.labels.size());
    std::size_t same = 0;
    for (std::size_t i = 0; i < gt.pixels.size(); ++i) {
      CHECK(gt.pixels[i] == class_color(labels.labels[i]));
      same += gt.pixels[i] == pred.pixels[i];
    }
    CHECK(static_cast<double>(same) >= 0.95 * static_cast<double>(gt.pixels.size()));
    const std::string legend = slurp(dir / "gt.legend.txt");
    CHECK(legend.find("\n0 0 0 0\n") != std::string::npos);
  }

  SUBCASE("a constant predictor renders a single color") {
    Model m = load_model(dir / "m.mgk");
    auto& fc2 = m.layers[static_cast<std::size_t>(m.layout.fc2)];
    fc2.weights.setZero();
    fc2.bias << 0.0, 5.0, 0.0;
    save_model(dir / "const.mgk", m);
    REQUIRE(invoke({"predict-map", "-c", cfg, "--paths.checkpoint=" + dir / "const.mgk",
                 "--paths.output=" + dir / "const.ppm"})
                .code == 0);
    std::ifstream in(dir / "const.ppm", std::ios::binary);
    const PixelImage img = read_ppm(in);
    for (const auto& p : img.pixels) CHECK(p == class_color(2));
  }
}

TEST_CASE("eval rejects empty splits and class-count mismatches") {
  TempDir dir("evalerr");
  const std::string cfg = make_scene(dir);
  REQUIRE(invoke({"train", "-c", cfg, "--train.epochs=1", "--log-every=0", "--paths.checkpoint=" + dir / "m.mgk",
               "--paths.output=" + dir / "log.csv"})
              .code == 0);
  SplitSpec split = load_split(dir / "data/split.json");
  split.test.clear();
  save_split(dir / "empty.json", split);
  const Run empty = invoke({"eval", "-c", cfg, "--paths.split=" + dir / "empty.json", "--paths.checkpoint=" + dir / "m.mgk",
                         "--paths.output=" + dir / "r.csv"});
  CHECK(empty.code == 1);

  REQUIRE(invoke({"synth", "--out", dir / "four", "--classes", "4"}).code == 0);
  const Run mismatch = invoke({"eval", "-c", dir / "four/config.json", "--paths.checkpoint=" + dir / "m.mgk",
                            "--paths.output=" + dir / "r.csv"});
  CHECK(mismatch.code == 1);
  CHECK(mismatch.err.find("classes") != std::string::npos);
}

TEST_CASE("sweep covers the grid and a 1x1 grid matches train plus eval") {
  TempDir dir("sweep");
  const std::string cfg = make_scene(dir);
  REQUIRE(invoke({"sweep", "-c", cfg, "--train.epochs=20", "--k-grid", "5,10", "--sigma-grid", "0.5,1",
               "--paths.output=" + dir / "grid.csv"})
              .code == 0);
  const auto grid = read_csv(dir / "grid.csv");
  REQUIRE(grid.size() == 5);
  CHECK(grid[0] == std::vector<std::string>{"k", "sigma", "oa"});
  for (std::size_t i = 1; i < grid.size(); ++i) CHECK(std::stod(grid[i][2]) > 90.0);

  REQUIRE(invoke({"sweep", "-c", cfg, "--train.epochs=20", "--k-grid", "5", "--sigma-grid", "0.5",
               "--paths.output=" + dir / "one.csv"})
              .code == 0);
  REQUIRE(invoke({"train", "-c", cfg, "--train.epochs=20", "--graph.k=5", "--graph.sigma=0.5", "--log-every=0",
               "--paths.checkpoint=" + dir / "m.mgk", "--paths.output=" + dir / "log.csv"})
              .code == 0);
  REQUIRE(invoke({"eval", "-c", cfg, "--graph.k=5", "--graph.sigma=0.5", "--paths.checkpoint=" + dir / "m.mgk",
               "--paths.output=" + dir / "r.csv"})
              .code == 0);
  const auto one = read_csv(dir / "one.csv");
  const auto report = read_csv(dir / "r.csv");
  std::string oa;
  for (const auto& row : report)
    if (row[0] == "OA") oa = row[1];
  CHECK(std::stod(one[1][2]) == doctest::Approx(std::stod(oa)).epsilon(1e-12));
  CHECK(invoke({"sweep", "-c", cfg, "--k-grid", "5", "--paths.output=" + dir / "x.csv"}).code == 1);
}

TEST_CASE("bias command writes both reports and M=N has zero bias") {
  TempDir dir("bias");
  REQUIRE(invoke({"bias", "--toy", "path3", "--train.batch=3", "--trials", "500", "--paths.output=" + dir / "b"}).code == 0);
  for (const char* name : {"bias_unit.csv", "bias_cooccurrence.csv"}) {
    std::ifstream in(dir / (std::string("b/") + name));
    const BiasReport r = read_bias_csv(in);
    REQUIRE(r.rows.size() == 3);
    for (const auto& row : r.rows) CHECK(row.bias == 0.0);
  }
  REQUIRE(invoke({"bias", "--toy", "k3", "--train.batch=2", "--trials", "2000", "--paths.output=" + dir / "k"}).code == 0);
  std::ifstream in(dir / "k/bias_unit.csv");
  CHECK(read_bias_csv(in).rows.size() == 3);
  CHECK(invoke({"bias", "--toy", "k3", "--paths.output=" + dir / "k"}).code == 1);

  const std::string cfg = make_scene(dir);
  CHECK(invoke({"bias", "-c", cfg, "--trials", "50", "--paths.output=" + dir / "scene"}).code == 0);
}

TEST_CASE("bench writes the CSV schema") {
  TempDir dir("bench");
  const Run r = invoke({"bench", "--modes", "full-gcn", "--n-grid", "256,384,512", "--d", "64", "--repeats", "3",
                     "--paths.output=" + dir / "b.csv"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("full-gcn slope") != std::string::npos);
  const auto rows = read_csv(dir / "b.csv");
  CHECK(rows[0] == std::vector<std::string>{"mode", "n", "d", "p", "m", "repeat", "seconds"});
  CHECK(rows.size() == 10);
  CHECK(invoke({"bench", "--modes", "dense"}).code == 1);
}
