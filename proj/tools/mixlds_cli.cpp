// mixlds: simulate mixed-LDS datasets, run the fitting pipeline or single
// stages, and export artifacts.
//
// Exit codes: 0 success, 1 usage, 2 ConfigParse, 3 IoError, 4 MissingSubset,
// 5 any other library error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mixlds/io.hpp"

namespace fs = std::filesystem;
using namespace mixlds;
using io::json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitMissingSubset = 4;
constexpr int kExitOther = 5;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int workers = 0;
  std::string out = ".";
};

struct StageFlags {
  std::string dataset;
  std::string csv_dir;
  bool header = false;
  bool no_subspaces = false;
  std::string tau;
  std::optional<int> copies;
  std::optional<int> k;
  std::string models;
  std::string assignment;
  std::string experiment;
  std::optional<int> seed_count;
  std::string report;
};

class Run {
 public:
  Run(std::string command, const Common& common) : command_(std::move(command)), common_(common) {
    start_ = std::chrono::steady_clock::now();
    config_ = common.config_path.empty() ? json::object() : io::read_json_file(common.config_path);
    if (!config_.is_object()) throw Error(ErrorCode::kConfigParse, "config must be a JSON object");
    if (!common.config_path.empty()) inputs_.push_back(common.config_path);
    if (common.seed) config_["seed"] = *common.seed;
    fs::create_directories(common.out);
  }

  json& config() { return config_; }
  int workers() const { return common_.workers; }
  std::uint64_t seed() const { return config_.value("seed", std::uint64_t{0}); }

  void input(const std::string& path) { inputs_.push_back(path); }

  fs::path output(const std::string& name) {
    outputs_.push_back((fs::path(common_.out) / name).string());
    return fs::path(common_.out) / name;
  }

  std::ofstream open(const std::string& name) {
    const fs::path path = output(name);
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
    return out;
  }

  void finish() {
    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start_);
    json manifest;
    manifest["command"] = command_;
    manifest["config_hash"] = config_hash(config_);
    manifest["seed"] = seed();
    manifest["inputs"] = inputs_;
    manifest["outputs"] = outputs_;
    manifest["wall_time_ms"] = elapsed.count();
    io::write_json_file(fs::path(common_.out) / "manifest.json", manifest);
  }

  /// FNV-1a over the canonical (key-sorted, compact) dump, as 16 hex digits.
  static std::string config_hash(const json& config) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : config.dump()) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

 private:
  std::string command_;
  Common common_;
  json config_;
  std::vector<std::string> inputs_, outputs_;
  std::chrono::steady_clock::time_point start_;
};

template <typename F>
auto parsing(const char* what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigParse, std::string(what) + ": " + e.what());
  }
}

std::vector<LdsModel> models_from_config(const json& config) {
  return parsing("models", [&] {
    if (config.contains("models")) return io::models_from_json(config.at("models"));
    if (!config.contains("generate")) throw Error(ErrorCode::kConfigParse, "config needs \"models\" or \"generate\"");
    const json& g = config.at("generate");
    const std::string construction = g.value("construction", "orthogonal");
    ModelConstruction c = OrthogonalRotation{};
    if (construction == "perturbation") {
      c = IdentityPerturbation{g.value("delta", 0.12)};
    } else if (construction != "orthogonal") {
      throw Error(ErrorCode::kConfigParse, "construction must be \"orthogonal\" or \"perturbation\"");
    }
    return generate_paper_models(g.at("d").get<Eigen::Index>(), g.at("k").get<int>(), g.value("rho", 0.5), c,
                                 g.value("seed", config.value("seed", std::uint64_t{0})));
  });
}

MixtureSpec spec_from_config(const json& config) {
  MixtureSpec spec;
  spec.models = models_from_config(config);
  parsing("mixture", [&] {
    spec.seed = config.value("seed", std::uint64_t{0});
    const std::string init = config.value("init", "case0");
    if (init == "case1") {
      spec.init_mode = InitMode::kCase1;
    } else if (init != "case0") {
      throw Error(ErrorCode::kConfigParse, "init must be \"case0\" or \"case1\"");
    }
    auto shape = [&](const char* key) {
      SubsetShape s;
      if (config.contains(key)) {
        s.count = config.at(key).value("count", std::size_t{0});
        s.length = config.at(key).value("length", Eigen::Index{0});
      }
      return s;
    };
    spec.subspace = shape("subspace");
    spec.clustering = shape("clustering");
    spec.classification = shape("classification");
    if (config.contains("labels")) {
      const json& l = config.at("labels");
      if (l.is_string() && l.get<std::string>() == "uniform") {
        spec.label_mode = UniformLabels{};
      } else if (l.is_object() && l.contains("fractions")) {
        spec.label_mode = FractionLabels{l.at("fractions").get<std::vector<double>>()};
      } else if (l.is_object() && l.contains("fixed")) {
        std::vector<int> fixed = l.at("fixed").get<std::vector<int>>();
        for (int& v : fixed) --v;
        spec.label_mode = FixedLabels{std::move(fixed)};
      } else {
        throw Error(ErrorCode::kConfigParse, "labels must be \"uniform\", {\"fractions\": [...]} or {\"fixed\": [...]}");
      }
    }
    return 0;
  });
  return spec;
}

std::optional<RankRule> rank_rule_from(const json& p) {
  if (!p.contains("rank")) return std::nullopt;
  const json& r = p.at("rank");
  if (r.is_number_integer()) return FixedRank{r.get<int>()};
  if (r.is_object() && r.contains("energy")) return EnergyRank{r.at("energy").get<double>()};
  throw Error(ErrorCode::kConfigParse, "rank must be an integer or {\"energy\": x}");
}

/// Pipeline settings from config["pipeline"] with flag overrides. tau "separation"
/// (the default when truth models are known) means Delta_{Gamma,Y}^2 / 4.
PipelineConfig pipeline_config(Run& run, const StageFlags& flags, std::span<const LdsModel> truth) {
  json& p = run.config()["pipeline"];
  if (p.is_null()) p = json::object();
  if (flags.k) p["k"] = *flags.k;
  if (flags.copies) p["copies"] = *flags.copies;
  if (flags.no_subspaces) p["use_subspaces"] = false;
  if (!flags.tau.empty()) {
    if (flags.tau == "auto" || flags.tau == "separation") {
      p["tau"] = flags.tau;
    } else {
      try {
        p["tau"] = std::stod(flags.tau);
      } catch (const std::exception&) {
        throw Error(ErrorCode::kConfigParse, "--tau expects a number, \"auto\" or \"separation\"");
      }
    }
  }

  PipelineConfig c;
  parsing("pipeline", [&] {
    if (p.contains("k") && !p.at("k").is_null()) c.k = p.at("k").get<int>();
    c.copies = p.value("copies", 1);
    c.use_subspaces = p.value("use_subspaces", true);
    c.sample_split = p.value("sample_split", true);
    c.rank_rule = rank_rule_from(p);
    c.ridge = p.value("ridge", 0.0);
    if (p.contains("refine") && !p.at("refine").is_null()) {
      c.refinement = p.at("refine").get<bool>() ? Refinement::kRequired : Refinement::kOff;
    }
    const json default_tau = truth.size() < 2 ? json("auto") : json("separation");
    const json tau = p.value("tau", default_tau);
    if (tau.is_number()) {
      c.tau = tau.get<double>();
    } else if (tau == "separation") {
      if (truth.empty()) throw Error(ErrorCode::kConfigParse, "tau \"separation\" needs truth models");
      c.tau = separation_threshold(truth);
    } else if (tau == "auto") {
      c.tau = AutoTau{p.value("tau_grid", std::vector<double>{})};
    } else {
      throw Error(ErrorCode::kConfigParse, "tau must be a number, \"auto\" or \"separation\"");
    }
    return 0;
  });
  c.seed = run.seed();
  c.workers = run.workers();
  return c;
}

MixedDataset load_dataset(Run& run, const std::string& path) {
  if (path.empty()) throw Error(ErrorCode::kConfigParse, "--dataset is required");
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  run.input(path);
  return io::read_dataset_jsonl(in);
}

std::vector<LdsModel> load_models(Run& run, const std::string& path) {
  if (path.empty()) return {};
  run.input(path);
  return parsing("models file", [&] { return io::models_from_json(io::read_json_file(path)); });
}

void write_models(Run& run, const std::string& name, std::span<const ModelEstimate> estimates) {
  json j = json::object();
  j["models"] = json::array();
  for (const auto& e : estimates) j["models"].push_back(io::estimate_to_json(e));
  io::write_json_file(run.output(name), j);
}

int cmd_simulate(const Common& common) {
  Run run("simulate", common);
  const MixtureSpec spec = spec_from_config(run.config());
  const MixedDataset data = simulate_dataset(spec, run.workers());
  auto out = run.open("dataset.jsonl");
  io::write_dataset_jsonl(out, data);
  io::write_json_file(run.output("models.json"), json{{"models", io::models_to_json(spec.models)}});
  run.finish();
  return 0;
}

int cmd_fit(const Common& common, const StageFlags& flags) {
  Run run("fit", common);
  const MixedDataset data = load_dataset(run, flags.dataset);
  const std::vector<LdsModel> truth = load_models(run, flags.models);
  const PipelineConfig config = pipeline_config(run, flags, truth);
  const PipelineReport report = run_pipeline(data, config, truth);
  io::write_json_file(run.output("report.json"), io::report_to_json(report));
  run.finish();
  return 0;
}

SubspaceBank bank_for(const PipelineConfig& config, std::span<const Trajectory> clustering,
                      std::span<const Trajectory> subspace_set, int workers) {
  const Eigen::Index d = clustering.front().dim();
  if (!config.use_subspaces) return SubspaceBank::identity(d);
  const RankRule rule = config.rank_rule.value_or(config.k ? RankRule{FixedRank{*config.k}} : RankRule{EnergyRank{0.9}});
  if (config.sample_split && !subspace_set.empty()) return estimate_subspaces(subspace_set, rule, workers);
  return estimate_subspaces(clustering, rule, workers, ComplementOf{config.copies});
}

int cmd_subspace(const Common& common, const StageFlags& flags) {
  Run run("subspace", common);
  const MixedDataset data = load_dataset(run, flags.dataset);
  const PipelineConfig config = pipeline_config(run, flags, {});
  const auto& source = data.subspace_set.empty() ? data.clustering_set : data.subspace_set;
  if (source.empty()) throw Error(ErrorCode::kMissingSubset, "dataset has no subspace or clustering trajectories");
  const RankRule rule = config.rank_rule.value_or(config.k ? RankRule{FixedRank{*config.k}} : RankRule{EnergyRank{0.9}});
  io::write_json_file(run.output("subspaces.json"), io::bank_to_json(estimate_subspaces(source, rule, run.workers())));
  run.finish();
  return 0;
}

int cmd_cluster(const Common& common, const StageFlags& flags) {
  Run run("cluster", common);
  MixedDataset data;
  if (!flags.csv_dir.empty()) {
    run.input(flags.csv_dir);
    data.clustering_set = io::read_trajectory_dir(flags.csv_dir, flags.header);
  } else {
    data = load_dataset(run, flags.dataset);
  }
  if (data.clustering_set.empty()) throw Error(ErrorCode::kMissingSubset, "no clustering trajectories");
  const std::vector<LdsModel> truth = load_models(run, flags.models);
  const PipelineConfig config = pipeline_config(run, flags, truth);
  const auto& trajs = data.clustering_set;

  const SubspaceBank bank = bank_for(config, trajs, data.subspace_set, run.workers());
  const PairwiseStatistics stats = trajs.size() > 1 ? pairwise_statistics(trajs, bank, config.copies, run.workers())
                                                    : PairwiseStatistics{Eigen::MatrixXd::Zero(1, 1),
                                                                         Eigen::MatrixXd::Zero(1, 1), config.copies};
  double tau = 0.0;
  std::optional<int> k = config.k;
  if (const auto* fixed = std::get_if<double>(&config.tau)) {
    tau = *fixed;
  } else {
    std::vector<double> grid = std::get<AutoTau>(config.tau).grid;
    if (grid.empty()) grid = default_threshold_grid(stats);
    const ThresholdChoice choice = auto_threshold(stats, grid);
    tau = choice.tau;
    if (!k) k = choice.k_hat;
  }
  const SimilarityMatrix s = threshold_statistics(stats, tau);
  if (!k) k = connected_components(s.s).k_hat;
  const ClusterAssignment assignment = partition(s, *k, config.seed);

  auto sim = run.open("similarity.csv");
  io::write_similarity_csv(sim, s);
  auto st = run.open("statistics.csv");
  io::write_statistics_csv(st, stats);
  auto as = run.open("assignment.csv");
  io::write_assignment_csv(as, assignment.labels);
  json summary{{"tau", tau}, {"k_hat", assignment.k_hat}, {"subspace_rank", bank.r}};
  std::vector<int> truth_labels;
  for (const auto& t : trajs)
    if (t.label) truth_labels.push_back(*t.label);
  if (truth_labels.size() == trajs.size() && !trajs.empty()) {
    summary["clustering_error"] = clustering_error(assignment.labels, truth_labels);
  }
  io::write_json_file(run.output("cluster.json"), summary);
  run.finish();
  return 0;
}

std::vector<int> read_assignment(Run& run, const std::string& path) {
  run.input(path);
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::string line;
  std::getline(in, line);
  std::vector<int> labels;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    try {
      labels.push_back(std::stoi(line.substr(comma + 1)) - 1);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kConfigParse, "bad assignment row \"" + line + "\"");
    }
  }
  return labels;
}

int cmd_estimate(const Common& common, const StageFlags& flags) {
  Run run("estimate", common);
  const MixedDataset data = load_dataset(run, flags.dataset);
  const auto& trajs = data.clustering_set;
  if (trajs.empty()) throw Error(ErrorCode::kMissingSubset, "no clustering trajectories");
  std::vector<int> labels;
  if (!flags.assignment.empty()) {
    labels = read_assignment(run, flags.assignment);
    if (labels.size() != trajs.size()) throw Error(ErrorCode::kSizeMismatch, "assignment and dataset sizes differ");
  } else {
    for (const auto& t : trajs) {
      if (!t.label) throw Error(ErrorCode::kConfigParse, "unlabeled trajectories need --assignment");
      labels.push_back(*t.label);
    }
  }
  const int k = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<ClusterData> clusters(k);
  for (std::size_t m = 0; m < trajs.size(); ++m) {
    if (labels[m] < 0) throw Error(ErrorCode::kConfigParse, "labels must be >= 1");
    clusters[labels[m]].members.push_back(&trajs[m]);
  }
  const double ridge = run.config().contains("pipeline") ? run.config()["pipeline"].value("ridge", 0.0) : 0.0;
  std::vector<ModelEstimate> estimates;
  for (const auto& c : clusters) estimates.push_back(least_squares_estimate(c, ridge, run.workers()));
  write_models(run, "models.json", estimates);
  run.finish();
  return 0;
}

int cmd_classify(const Common& common, const StageFlags& flags) {
  Run run("classify", common);
  const MixedDataset data = load_dataset(run, flags.dataset);
  if (flags.models.empty()) throw Error(ErrorCode::kConfigParse, "--models is required");
  const std::vector<LdsModel> models = load_models(run, flags.models);
  const auto& trajs = data.classification_set.empty() ? data.clustering_set : data.classification_set;
  if (trajs.empty()) throw Error(ErrorCode::kMissingSubset, "no trajectories to classify");
  const LossTable table = classify(trajs, models, run.workers());
  auto out = run.open("losses.csv");
  io::write_loss_csv(out, table);
  run.finish();
  return 0;
}

int cmd_sweep(const Common& common, const StageFlags& flags) {
  Run run("sweep", common);
  json& s = run.config()["sweep"];
  if (s.is_null()) s = json::object();
  if (!flags.experiment.empty()) s["experiment"] = flags.experiment;
  if (flags.seed_count) s["seeds"] = *flags.seed_count;
  if (flags.copies) s["copies"] = *flags.copies;

  const auto experiment = parse_experiment(parsing("sweep", [&] { return s.value("experiment", std::string()); }));
  if (!experiment) throw Error(ErrorCode::kConfigParse, "experiment must be fig2, clustering_curve or classification_curve");
  SweepParams p = default_sweep_params(*experiment);
  std::vector<std::uint64_t> seeds;
  parsing("sweep", [&] {
    p.d = s.value("d", p.d);
    p.k = s.value("k", p.k);
    p.rho = s.value("rho", p.rho);
    p.delta = s.value("delta", p.delta);
    p.copies = s.value("copies", p.copies);
    p.t_subspace = s.value("t_subspace", p.t_subspace);
    p.t_clustering = s.value("t_clustering", p.t_clustering);
    p.t_classification = s.value("t_classification", p.t_classification);
    p.m_subspace = s.value("m_subspace", p.m_subspace);
    p.m_clustering = s.value("m_clustering", p.m_clustering);
    p.m_classification = s.value("m_classification", p.m_classification);
    p.x_values = s.value("x_values", p.x_values);
    if (s.contains("init")) p.init_mode = s.at("init") == "case1" ? InitMode::kCase1 : InitMode::kCase0;
    const json seeds_json = s.value("seeds", json(10));
    if (seeds_json.is_array()) {
      seeds = seeds_json.get<std::vector<std::uint64_t>>();
    } else {
      const auto base = run.seed();
      for (int i = 1; i <= seeds_json.get<int>(); ++i) seeds.push_back(base + static_cast<std::uint64_t>(i));
    }
    return 0;
  });
  const auto rows = sweep(*experiment, p, seeds, run.workers());
  auto out = run.open("sweep.csv");
  io::write_sweep_csv(out, rows);
  run.finish();
  return 0;
}

int cmd_eval(const Common& common, const StageFlags& flags) {
  Run run("eval", common);
  if (flags.report.empty() || flags.models.empty()) throw Error(ErrorCode::kConfigParse, "--report and --models are required");
  run.input(flags.report);
  const json report = io::read_json_file(flags.report);
  const std::vector<LdsModel> truth = load_models(run, flags.models);
  const std::vector<LdsModel> estimates = parsing("report", [&] { return io::models_from_json(report.at("models")); });
  const ModelMatching m = match_models(estimates, truth);
  json out;
  std::vector<int> perm;
  for (int p : m.permutation) perm.push_back(p + 1);
  out["permutation"] = perm;
  out["a_errors"] = m.a_errors;
  out["w_errors"] = m.w_errors;
  out["max_a_error"] = *std::max_element(m.a_errors.begin(), m.a_errors.end());
  out["max_w_error"] = *std::max_element(m.w_errors.begin(), m.w_errors.end());
  io::write_json_file(run.output("eval.json"), out);
  run.finish();
  return 0;
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfigParse: return kExitConfig;
    case ErrorCode::kIoError: return kExitIo;
    case ErrorCode::kMissingSubset: return kExitMissingSubset;
    default: return kExitOther;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learn mixtures of linear dynamical systems from short trajectories"};
  app.require_subcommand(1);
  Common common;
  StageFlags flags;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON config file");
    sub->add_option("--seed", common.seed, "Seed (overrides config)");
    sub->add_option("--workers", common.workers, "Worker threads (0: all cores)");
    sub->add_option("--out", common.out, "Output directory");
  };
  auto add_stage = [&](CLI::App* sub) {
    sub->add_option("--dataset", flags.dataset, "Dataset JSONL");
    sub->add_flag("--no-subspaces", flags.no_subspaces, "Use full bases instead of estimated subspaces");
    sub->add_option("--tau", flags.tau, "Threshold: number, auto or separation");
    sub->add_option("--g", flags.copies, "Copies G for the median statistic");
    sub->add_option("--k", flags.k, "Number of models");
    sub->add_option("--models", flags.models, "Truth models JSON");
  };

  auto* simulate = app.add_subcommand("simulate", "Simulate a dataset from a config");
  add_common(simulate);
  auto* fit = app.add_subcommand("fit", "Run the two-stage pipeline");
  add_common(fit);
  add_stage(fit);
  auto* subspace = app.add_subcommand("subspace", "Estimate subspaces");
  add_common(subspace);
  add_stage(subspace);
  auto* cluster = app.add_subcommand("cluster", "Cluster trajectories");
  add_common(cluster);
  add_stage(cluster);
  cluster->add_option("--csv-dir", flags.csv_dir, "Directory of per-trajectory CSV files");
  cluster->add_flag("--header", flags.header, "CSV files start with a header row");
  auto* estimate = app.add_subcommand("estimate", "Least-squares estimates per cluster");
  add_common(estimate);
  add_stage(estimate);
  estimate->add_option("--assignment", flags.assignment, "assignment.csv from cluster");
  auto* classify_cmd = app.add_subcommand("classify", "Classify trajectories against models");
  add_common(classify_cmd);
  add_stage(classify_cmd);
  auto* sweep_cmd = app.add_subcommand("sweep", "Run an experiment sweep");
  add_common(sweep_cmd);
  sweep_cmd->add_option("--experiment", flags.experiment, "fig2, clustering_curve or classification_curve");
  sweep_cmd->add_option("--seeds", flags.seed_count, "Number of seeds");
  sweep_cmd->add_option("--g", flags.copies, "Copies G for the median statistic");
  auto* eval = app.add_subcommand("eval", "Match a report's models against truth");
  add_common(eval);
  eval->add_option("--report", flags.report, "report.json");
  eval->add_option("--models", flags.models, "Truth models JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*simulate) return cmd_simulate(common);
    if (*fit) return cmd_fit(common, flags);
    if (*subspace) return cmd_subspace(common, flags);
    if (*cluster) return cmd_cluster(common, flags);
    if (*estimate) return cmd_estimate(common, flags);
    if (*classify_cmd) return cmd_classify(common, flags);
    if (*sweep_cmd) return cmd_sweep(common, flags);
    if (*eval) return cmd_eval(common, flags);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const json::exception& e) {
    std::cerr << "error: ConfigParse: " << e.what() << '\n';
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: IoError: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitOther;
  }
  return kExitUsage;
}
