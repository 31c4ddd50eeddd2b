#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "mixlds/io.hpp"

using namespace mixlds;
using io::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mixlds_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(MIXLDS_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path write_config(const fs::path& dir, const json& config) {
  const fs::path path = dir / "config.json";
  io::write_json_file(path, config);
  return path;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

json two_model_config() {
  return json::parse(R"({
    "models": [{"a": [[0.8, 0.0], [0.0, 0.8]], "w": [[1.0, 0.0], [0.0, 1.0]]},
               {"a": [[-0.8, 0.0], [0.0, -0.8]], "w": [[1.0, 0.0], [0.0, 1.0]]}],
    "subspace": {"count": 60, "length": 200},
    "clustering": {"count": 30, "length": 1000},
    "classification": {"count": 40, "length": 20},
    "seed": 9
  })");
}

TEST(Cli, SimulateWritesDatasetAndManifest) {
  const fs::path dir = scratch("simulate");
  const fs::path cfg = write_config(dir, json::parse(R"({
    "models": [{"a": [[0.5]], "w": [[1.0]]}],
    "clustering": {"count": 3, "length": 5},
    "seed": 1
  })"));
  ASSERT_EQ(run("simulate --config " + q(cfg) + " --out " + q(dir / "out")), 0);
  std::ifstream in(dir / "out" / "dataset.jsonl");
  const MixedDataset data = io::read_dataset_jsonl(in);
  ASSERT_EQ(data.clustering_set.size(), 3u);
  EXPECT_EQ(data.clustering_set[0].states.cols(), 6);
  const json manifest = io::read_json_file(dir / "out" / "manifest.json");
  EXPECT_EQ(manifest.at("command"), "simulate");
  EXPECT_EQ(manifest.at("seed"), 1);
  EXPECT_EQ(manifest.at("config_hash").get<std::string>().size(), 16u);
  EXPECT_TRUE(fs::exists(dir / "out" / "models.json"));
}

TEST(Cli, SimulateIsReproducible) {
  const fs::path dir = scratch("repro");
  const fs::path cfg = write_config(dir, two_model_config());
  ASSERT_EQ(run("simulate --config " + q(cfg) + " --out " + q(dir / "a") + " --workers 1"), 0);
  ASSERT_EQ(run("simulate --config " + q(cfg) + " --out " + q(dir / "b") + " --workers 4"), 0);
  EXPECT_EQ(slurp(dir / "a" / "dataset.jsonl"), slurp(dir / "b" / "dataset.jsonl"));
  const json ma = io::read_json_file(dir / "a" / "manifest.json");
  const json mb = io::read_json_file(dir / "b" / "manifest.json");
  EXPECT_EQ(ma.at("config_hash"), mb.at("config_hash"));
  ASSERT_EQ(run("simulate --config " + q(cfg) + " --seed 10 --out " + q(dir / "c")), 0);
  EXPECT_NE(slurp(dir / "a" / "dataset.jsonl"), slurp(dir / "c" / "dataset.jsonl"));
  EXPECT_NE(io::read_json_file(dir / "c" / "manifest.json").at("config_hash"), ma.at("config_hash"));
}

TEST(Cli, UniformLabelsAreBalanced) {
  const fs::path dir = scratch("labels");
  const fs::path cfg = write_config(dir, json::parse(R"({
    "generate": {"d": 2, "k": 4, "rho": 0.5},
    "init": "case1",
    "clustering": {"count": 800, "length": 4},
    "labels": "uniform",
    "seed": 3
  })"));
  ASSERT_EQ(run("simulate --config " + q(cfg) + " --out " + q(dir)), 0);
  std::ifstream in(dir / "dataset.jsonl");
  const MixedDataset data = io::read_dataset_jsonl(in);
  std::map<int, int> counts;
  for (const auto& t : data.clustering_set) ++counts[*t.label];
  ASSERT_EQ(counts.size(), 4u);
  for (const auto& [label, n] : counts) EXPECT_NEAR(n, 200, 45);
}

TEST(Cli, FitRecoversTwoModels) {
  const fs::path dir = scratch("fit");
  const fs::path cfg = write_config(dir, two_model_config());
  ASSERT_EQ(run("simulate --config " + q(cfg) + " --out " + q(dir)), 0);
  ASSERT_EQ(run("fit --config " + q(cfg) + " --dataset " + q(dir / "dataset.jsonl") + " --models " +
                q(dir / "models.json") + " --k 2 --out " + q(dir / "fit")),
            0);
  const json report = io::read_json_file(dir / "fit" / "report.json");
  EXPECT_EQ(report.at("k_hat"), 2);
  EXPECT_EQ(report.at("models").size(), 2u);
  EXPECT_TRUE(report.at("clustering_error").is_number());
  EXPECT_EQ(report.at("clustering_error"), 0.0);
  EXPECT_TRUE(report.at("refined").get<bool>());

  ASSERT_EQ(run("eval --report " + q(dir / "fit" / "report.json") + " --models " + q(dir / "models.json") +
                " --out " + q(dir / "eval")),
            0);
  const json eval = io::read_json_file(dir / "eval" / "eval.json");
  EXPECT_EQ(eval.at("permutation").size(), 2u);
  EXPECT_LT(eval.at("max_a_error").get<double>(), 0.3);
}

TEST(Cli, FitSingleModel) {
  const fs::path dir = scratch("fit_one");
  const fs::path cfg = write_config(dir, json::parse(R"({
    "models": [{"a": [[0.5, 0.1], [0.0, 0.3]], "w": [[1.0, 0.0], [0.0, 2.0]]}],
    "subspace": {"count": 20, "length": 20},
    "clustering": {"count": 20, "length": 20},
    "seed": 2,
    "pipeline": {"k": 1}
  })"));
  ASSERT_EQ(run("simulate --config " + q(cfg) + " --out " + q(dir)), 0);
  ASSERT_EQ(run("fit --config " + q(cfg) + " --dataset " + q(dir / "dataset.jsonl") + " --tau 1e9 --out " + q(dir / "fit")),
            0);
  const json report = io::read_json_file(dir / "fit" / "report.json");
  EXPECT_EQ(report.at("models").size(), 1u);
  EXPECT_FALSE(report.at("refined").get<bool>());
}

TEST(Cli, StageCommandsChain) {
  const fs::path dir = scratch("stages");
  const fs::path cfg = write_config(dir, two_model_config());
  ASSERT_EQ(run("simulate --config " + q(cfg) + " --out " + q(dir)), 0);
  const std::string common = " --dataset " + q(dir / "dataset.jsonl") + " --models " + q(dir / "models.json");
  ASSERT_EQ(run("subspace --k 2" + common + " --out " + q(dir / "sub")), 0);
  const SubspaceBank bank = io::bank_from_json(io::read_json_file(dir / "sub" / "subspaces.json"));
  EXPECT_EQ(bank.r, 2);
  EXPECT_EQ(bank.d, 2);

  ASSERT_EQ(run("cluster --k 2" + common + " --out " + q(dir / "clu")), 0);
  EXPECT_EQ(io::read_json_file(dir / "clu" / "cluster.json").at("clustering_error"), 0.0);
  EXPECT_TRUE(fs::exists(dir / "clu" / "similarity.csv"));
  EXPECT_TRUE(fs::exists(dir / "clu" / "statistics.csv"));

  ASSERT_EQ(run("estimate" + common + " --assignment " + q(dir / "clu" / "assignment.csv") + " --out " + q(dir / "est")),
            0);
  const auto models = io::models_from_json(io::read_json_file(dir / "est" / "models.json"));
  EXPECT_EQ(models.size(), 2u);

  ASSERT_EQ(run("classify --dataset " + q(dir / "dataset.jsonl") + " --models " + q(dir / "est" / "models.json") +
                " --out " + q(dir / "cls")),
            0);
  const std::string losses = slurp(dir / "cls" / "losses.csv");
  EXPECT_EQ(losses.substr(0, losses.find('\n')), "m,loss_1,loss_2,argmin");
  EXPECT_EQ(std::count(losses.begin(), losses.end(), '\n'), 41);
}

TEST(Cli, MissingClassificationSubsetWithRefine) {
  const fs::path dir = scratch("refine");
  json config = two_model_config();
  config["classification"]["count"] = 0;
  config["pipeline"] = {{"refine", true}};
  const fs::path cfg = write_config(dir, config);
  ASSERT_EQ(run("simulate --config " + q(cfg) + " --out " + q(dir)), 0);
  EXPECT_EQ(run("fit --config " + q(cfg) + " --dataset " + q(dir / "dataset.jsonl") + " --models " +
                q(dir / "models.json") + " --out " + q(dir / "fit")),
            4);
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("exit");
  EXPECT_EQ(run("simulate --config " + q(dir / "missing.json") + " --out " + q(dir)), 3);
  std::ofstream(dir / "bad.json") << "{\"seed\": ";
  EXPECT_EQ(run("simulate --config " + q(dir / "bad.json") + " --out " + q(dir)), 2);
  std::ofstream(dir / "nomodels.json") << "{\"seed\": 1}";
  EXPECT_EQ(run("simulate --config " + q(dir / "nomodels.json") + " --out " + q(dir)), 2);
  EXPECT_EQ(run("bogus"), 1);
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("fit --dataset " + q(dir / "none.jsonl") + " --out " + q(dir)), 3);
}

TEST(Cli, ClusterIdenticalCsvTrajectories) {
  const fs::path dir = scratch("csv_same");
  std::ofstream csv(dir / "a.csv");
  csv << "x,y\n";
  for (int t = 0; t < 41; ++t) csv << std::sin(0.3 * t) << ',' << std::cos(0.7 * t) << '\n';
  csv.close();
  fs::copy_file(dir / "a.csv", dir / "b.csv");
  ASSERT_EQ(run("cluster --csv-dir " + q(dir) + " --header --no-subspaces --tau 0 --out " + q(dir / "out")), 0);
  EXPECT_EQ(slurp(dir / "out" / "similarity.csv"), "1,1\n1,1\n");
  EXPECT_EQ(slurp(dir / "out" / "assignment.csv"), "m,label\n0,1\n1,1\n");
}

TEST(Cli, ClusterSimulatedCsvTrajectories) {
  const fs::path dir = scratch("csv_sim");
  const fs::path cfg = write_config(dir, json::parse(R"({
    "models": [{"a": [[0.8, 0.0], [0.0, 0.8]], "w": [[1.0, 0.0], [0.0, 1.0]]},
               {"a": [[-0.8, 0.0], [0.0, -0.8]], "w": [[1.0, 0.0], [0.0, 1.0]]}],
    "clustering": {"count": 24, "length": 2000},
    "seed": 5,
    "pipeline": {"tau_grid": [0, 2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 22, 24, 26, 28, 30, 32, 34, 36, 38, 40, 42, 44]}
  })"));
  ASSERT_EQ(run("simulate --config " + q(cfg) + " --out " + q(dir)), 0);
  std::ifstream in(dir / "dataset.jsonl");
  const MixedDataset data = io::read_dataset_jsonl(in);
  fs::create_directories(dir / "csv");
  for (const auto& t : data.clustering_set) {
    char name[32];
    std::snprintf(name, sizeof(name), "traj_%03zu.csv", t.index);
    io::write_trajectory_csv(dir / "csv" / name, t);
  }
  ASSERT_EQ(run("cluster --config " + q(cfg) + " --csv-dir " + q(dir / "csv") + " --no-subspaces --tau auto --out " +
                q(dir / "out")),
            0);
  const json summary = io::read_json_file(dir / "out" / "cluster.json");
  EXPECT_EQ(summary.at("k_hat"), 2);
  std::ifstream as(dir / "out" / "assignment.csv");
  std::string line;
  std::getline(as, line);
  std::vector<int> labels, truth;
  while (std::getline(as, line)) labels.push_back(std::stoi(line.substr(line.find(',') + 1)) - 1);
  for (const auto& t : data.clustering_set) truth.push_back(*t.label);
  EXPECT_EQ(clustering_error(labels, truth), 0.0);
}

TEST(Cli, ClusterEmptyDirectoryFails) {
  const fs::path dir = scratch("csv_empty");
  EXPECT_NE(run("cluster --csv-dir " + q(dir) + " --out " + q(dir / "out")), 0);
}

TEST(Cli, SweepWritesCsv) {
  const fs::path dir = scratch("sweep");
  const fs::path cfg = write_config(dir, json::parse(R"({
    "sweep": {"experiment": "clustering_curve", "seeds": [1], "d": 4, "m_clustering": 20, "x_values": [20]}
  })"));
  ASSERT_EQ(run("sweep --config " + q(cfg) + " --out " + q(dir)), 0);
  const std::string csv = slurp(dir / "sweep.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "experiment,x,seed,metric,value");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_NE(csv.find("clustering_curve,20,1,error_with_subspaces,"), std::string::npos);
  EXPECT_NE(csv.find("clustering_curve,20,mean,error_without_subspaces,"), std::string::npos);
  EXPECT_EQ(run("sweep --experiment nope --out " + q(dir)), 2);
}

}  // namespace
