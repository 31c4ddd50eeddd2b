#include "mixlds/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "mixlds/parallel.hpp"
#include "mixlds/rng.hpp"

namespace mixlds {

namespace {

template <typename F>
auto in_stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.code(), std::string("stage ") + name + ": " + e.message());
  }
}

std::optional<std::vector<int>> truth_labels(std::span<const Trajectory> trajectories) {
  std::vector<int> labels;
  labels.reserve(trajectories.size());
  for (const auto& t : trajectories) {
    if (!t.label) return std::nullopt;
    labels.push_back(*t.label);
  }
  return labels;
}

std::vector<ModelEstimate> fit_clusters(const std::vector<ClusterData>& clusters, double ridge, int workers) {
  std::vector<ModelEstimate> out;
  out.reserve(clusters.size());
  for (const auto& c : clusters) out.push_back(least_squares_estimate(c, ridge, workers));
  return out;
}

double mismatch_rate(std::span<const int> estimated, std::span<const int> truth, std::span<const int> perm) {
  if (estimated.empty()) return 0.0;
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < estimated.size(); ++i) {
    const int e = estimated[i];
    wrong += e >= static_cast<int>(perm.size()) || perm[e] != truth[i];
  }
  return static_cast<double>(wrong) / static_cast<double>(estimated.size());
}

}  // namespace

ModelMatching match_models(std::span<const LdsModel> estimates, std::span<const LdsModel> truth) {
  if (estimates.size() != truth.size()) throw Error(ErrorCode::kSizeMismatch, "estimate and truth counts differ");
  const int k = static_cast<int>(truth.size());
  if (k > 10) throw Error(ErrorCode::kTooManyModels, "brute-force matching supports at most 10 models");

  Eigen::MatrixXd cost(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      if (estimates[i].dim() != truth[j].dim()) {
        throw Error(ErrorCode::kDimensionMismatch, "models differ in dimension");
      }
      cost(i, j) = (estimates[i].a - truth[j].a).norm();
    }

  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (int i = 0; i < k; ++i) c += cost(i, perm[i]);
    if (c < best_cost) {
      best_cost = c;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  ModelMatching out;
  out.permutation = best;
  for (int i = 0; i < k; ++i) {
    const LdsModel& t = truth[best[i]];
    out.a_errors.push_back(spectral_norm(estimates[i].a - t.a));
    out.w_errors.push_back(spectral_norm(estimates[i].w - t.w) / spectral_norm(t.w));
  }
  return out;
}

double PipelineReport::max_a_error() const {
  if (!matching) return std::numeric_limits<double>::quiet_NaN();
  return *std::max_element(matching->a_errors.begin(), matching->a_errors.end());
}

double PipelineReport::max_w_error() const {
  if (!matching) return std::numeric_limits<double>::quiet_NaN();
  return *std::max_element(matching->w_errors.begin(), matching->w_errors.end());
}

double separation_threshold(std::span<const LdsModel> models) {
  const SeparationReport sep = separation_report(std::vector<LdsModel>(models.begin(), models.end()));
  return sep.d_gamma_y * sep.d_gamma_y / 4.0;
}

PipelineReport run_pipeline(const MixedDataset& dataset, const PipelineConfig& config,
                            std::span<const LdsModel> truth_models) {
  if (config.copies < 1) throw Error(ErrorCode::kInvalidArgument, "copy count must be >= 1");
  if (config.k && *config.k < 1) throw Error(ErrorCode::kInvalidK, "k must be >= 1");
  const auto& clustering_set = dataset.clustering_set;
  const auto& classification_set = dataset.classification_set;
  if (clustering_set.empty()) throw Error(ErrorCode::kMissingSubset, "clustering subset is empty");
  if (config.refinement == Refinement::kRequired && classification_set.empty()) {
    throw Error(ErrorCode::kMissingSubset, "refinement requested but classification subset is empty");
  }
  const Eigen::Index d = clustering_set.front().dim();
  const int workers = config.workers;

  PipelineReport report;

  // Stage 1: subspaces.
  const SubspaceBank bank = in_stage("subspace", [&] {
    if (!config.use_subspaces) return SubspaceBank::identity(d);
    const auto& source = config.sample_split ? dataset.subspace_set : clustering_set;
    if (source.empty()) throw Error(ErrorCode::kMissingSubset, "subspace subset is empty");
    const RankRule rule = config.rank_rule.value_or(
        config.k ? RankRule{FixedRank{*config.k}} : RankRule{EnergyRank{0.9}});
    if (config.sample_split) return estimate_subspaces(source, rule, workers);
    return estimate_subspaces(source, rule, workers, ComplementOf{config.copies});
  });
  report.subspace_rank = bank.r;

  // Stage 1: clustering.
  report.clusters = in_stage("clustering", [&] {
    if (clustering_set.size() == 1) return ClusterAssignment{{0}, 1};
    const PairwiseStatistics stats = pairwise_statistics(clustering_set, bank, config.copies, workers);
    int k = config.k.value_or(0);
    if (const auto* fixed = std::get_if<double>(&config.tau)) {
      report.tau = *fixed;
    } else {
      const auto& grid = std::get<AutoTau>(config.tau).grid;
      const ThresholdChoice choice = auto_threshold(stats, grid.empty() ? default_threshold_grid(stats) : grid);
      report.tau = choice.tau;
      if (!config.k) k = choice.k_hat;
    }
    const SimilarityMatrix s = threshold_statistics(stats, report.tau);
    if (!config.k && std::holds_alternative<double>(config.tau)) k = connected_components(s.s).k_hat;
    return partition(s, k, config.seed);
  });
  const int k_hat = report.clusters.k_hat;

  std::vector<ClusterData> clusters(k_hat);
  for (std::size_t m = 0; m < clustering_set.size(); ++m) {
    clusters[report.clusters.labels[m]].members.push_back(&clustering_set[m]);
  }
  report.coarse_models = in_stage("coarse estimation", [&] { return fit_clusters(clusters, config.ridge, workers); });

  // Stage 2: classification and refit.
  if (config.refinement != Refinement::kOff && !classification_set.empty()) {
    std::vector<LdsModel> coarse;
    for (const auto& e : report.coarse_models) coarse.push_back(e.model);
    const LossTable table = in_stage("classification", [&] { return classify(classification_set, coarse, workers); });
    report.classified = table.argmin;
    for (std::size_t m = 0; m < classification_set.size(); ++m) {
      clusters[table.argmin[m]].members.push_back(&classification_set[m]);
    }
    report.models = in_stage("refined estimation", [&] { return fit_clusters(clusters, config.ridge, workers); });
    report.refined = true;
  } else {
    report.models = report.coarse_models;
  }

  // Evaluation.
  const auto clustering_truth = truth_labels(clustering_set);
  const auto classification_truth = truth_labels(classification_set);
  std::optional<std::vector<int>> perm;
  if (!truth_models.empty() && static_cast<std::size_t>(k_hat) == truth_models.size() && k_hat <= 10) {
    std::vector<LdsModel> estimates;
    for (const auto& e : report.models) estimates.push_back(e.model);
    report.matching = match_models(estimates, truth_models);
    perm = report.matching->permutation;
  }
  if (clustering_truth) {
    if (!perm && truth_models.empty()) {
      const int labels = std::max(k_hat, *std::max_element(clustering_truth->begin(), clustering_truth->end()) + 1);
      if (labels <= 10) perm = best_label_matching(report.clusters.labels, *clustering_truth);
    }
    if (perm) {
      report.clustering_error = mismatch_rate(report.clusters.labels, *clustering_truth, *perm);
    } else if (std::max(k_hat, static_cast<int>(truth_models.size())) <= 10) {
      report.clustering_error = clustering_error(report.clusters.labels, *clustering_truth);
    }
  }
  if (report.refined && classification_truth && perm) {
    report.classification_error = mismatch_rate(report.classified, *classification_truth, *perm);
  }
  return report;
}

std::optional<Experiment> parse_experiment(std::string_view name) {
  if (name == "fig2") return Experiment::kFig2;
  if (name == "clustering_curve") return Experiment::kClusteringCurve;
  if (name == "classification_curve") return Experiment::kClassificationCurve;
  return std::nullopt;
}

std::string_view to_string(Experiment e) {
  switch (e) {
    case Experiment::kFig2: return "fig2";
    case Experiment::kClusteringCurve: return "clustering_curve";
    case Experiment::kClassificationCurve: return "classification_curve";
  }
  return "unknown";
}

SweepParams default_sweep_params(Experiment e) {
  SweepParams p;
  switch (e) {
    case Experiment::kFig2:
      p.d = 20;
      p.k = 3;
      p.init_mode = InitMode::kCase1;
      p.t_subspace = 20;
      p.t_clustering = 20;
      p.t_classification = 5;
      p.m_subspace = 30 * p.d;
      p.m_clustering = 10 * p.d;
      p.x_values = {0.0, 50.0 * p.d, 200.0 * p.d, 800.0 * p.d};
      break;
    case Experiment::kClusteringCurve:
      p.d = 40;
      p.k = 2;
      p.init_mode = InitMode::kCase0;
      p.m_clustering = 5 * p.d;
      p.x_values = {10, 20, 30, 40, 60};
      break;
    case Experiment::kClassificationCurve:
      p.d = 40;
      p.k = 2;
      p.init_mode = InitMode::kCase0;
      p.m_clustering = 10 * p.d;
      p.t_clustering = 30;
      p.m_classification = 10 * p.d;
      p.x_values = {4, 10, 20, 50};
      break;
  }
  return p;
}

namespace {

std::uint64_t model_seed(std::uint64_t seed) { return hash_key(seed, 0x6d6f64656cULL); }
std::uint64_t data_seed(std::uint64_t seed, std::uint64_t salt) { return hash_key(seed, 0x64617461ULL, salt); }

using CellRows = std::vector<SweepRow>;

CellRows fig2_seed(const SweepParams& p, std::uint64_t seed) {
  const auto models = generate_paper_models(p.d, p.k, p.rho, OrthogonalRotation{}, model_seed(seed));
  const double tau = separation_threshold(models);
  CellRows rows;
  for (double x : p.x_values) {
    MixtureSpec spec;
    spec.models = models;
    spec.init_mode = p.init_mode;
    spec.subspace = {p.m_subspace, p.t_subspace};
    spec.clustering = {p.m_clustering, p.t_clustering};
    spec.classification = {static_cast<std::size_t>(x), p.t_classification};
    // One data seed per model seed: datasets for growing x share their prefix.
    spec.seed = data_seed(seed, 0);
    const MixedDataset data = simulate_dataset(spec, 1);

    PipelineConfig config;
    config.k = p.k;
    config.tau = tau;
    config.copies = p.copies;
    config.workers = 1;
    const PipelineReport report = run_pipeline(data, config, models);
    const double total_steps = static_cast<double>(p.m_clustering) * static_cast<double>(p.t_clustering) +
                               x * static_cast<double>(p.t_classification);
    const std::string name(to_string(Experiment::kFig2));
    rows.push_back({name, total_steps, seed, "max_a_error", report.max_a_error()});
    rows.push_back({name, total_steps, seed, "max_w_error", report.max_w_error()});
    if (report.clustering_error) rows.push_back({name, total_steps, seed, "clustering_error", *report.clustering_error});
    if (report.classification_error) {
      rows.push_back({name, total_steps, seed, "classification_error", *report.classification_error});
    }
  }
  return rows;
}

CellRows clustering_curve_seed(const SweepParams& p, std::uint64_t seed) {
  const auto models = generate_paper_models(p.d, p.k, p.rho, IdentityPerturbation{p.delta}, model_seed(seed));
  const double tau = separation_threshold(models);
  CellRows rows;
  for (double x : p.x_values) {
    MixtureSpec spec;
    spec.models = models;
    spec.init_mode = p.init_mode;
    spec.clustering = {p.m_clustering, static_cast<Eigen::Index>(x)};
    spec.seed = data_seed(seed, static_cast<std::uint64_t>(x));
    const MixedDataset data = simulate_dataset(spec, 1);
    const auto truth = *truth_labels(data.clustering_set);

    auto error_for = [&](const SubspaceBank& bank) {
      const SimilarityMatrix s = similarity_matrix(data.clustering_set, bank, tau, p.copies, 1);
      return clustering_error(partition(s, p.k).labels, truth);
    };
    const SubspaceBank reduced = estimate_subspaces(data.clustering_set, FixedRank{p.k}, 1, ComplementOf{p.copies});
    const std::string name(to_string(Experiment::kClusteringCurve));
    rows.push_back({name, x, seed, "error_with_subspaces", error_for(reduced)});
    rows.push_back({name, x, seed, "error_without_subspaces", error_for(SubspaceBank::identity(p.d))});
  }
  return rows;
}

CellRows classification_curve_seed(const SweepParams& p, std::uint64_t seed) {
  const auto models = generate_paper_models(p.d, p.k, p.rho, IdentityPerturbation{p.delta}, model_seed(seed));

  // Stage 1 only, subspaces from the clustering data itself.
  MixtureSpec stage1;
  stage1.models = models;
  stage1.init_mode = p.init_mode;
  stage1.clustering = {p.m_clustering, p.t_clustering};
  stage1.seed = data_seed(seed, 0);
  const MixedDataset fit_data = simulate_dataset(stage1, 1);
  PipelineConfig config;
  config.k = p.k;
  config.tau = separation_threshold(models);
  config.copies = p.copies;
  config.sample_split = false;
  config.refinement = Refinement::kOff;
  config.workers = 1;
  const PipelineReport coarse = run_pipeline(fit_data, config, models);
  std::vector<LdsModel> coarse_models;
  for (const auto& e : coarse.coarse_models) coarse_models.push_back(e.model);
  std::vector<int> perm = match_models(coarse_models, models).permutation;

  CellRows rows;
  for (double x : p.x_values) {
    MixtureSpec spec;
    spec.models = models;
    spec.init_mode = p.init_mode;
    spec.classification = {p.m_classification, static_cast<Eigen::Index>(x)};
    spec.seed = data_seed(seed, 1000 + static_cast<std::uint64_t>(x));
    const MixedDataset data = simulate_dataset(spec, 1);
    const LossTable table = classify(data.classification_set, coarse_models, 1);
    const double err = classification_error(table, *truth_labels(data.classification_set), perm);
    rows.push_back({std::string(to_string(Experiment::kClassificationCurve)), x, seed, "classification_error", err});
  }
  return rows;
}

}  // namespace

std::vector<SweepRow> sweep(Experiment experiment, const SweepParams& params,
                            std::span<const std::uint64_t> seeds, int workers) {
  std::vector<CellRows> per_seed(seeds.size());
  parallel_for(seeds.size(), workers, [&](std::size_t i) {
    switch (experiment) {
      case Experiment::kFig2: per_seed[i] = fig2_seed(params, seeds[i]); break;
      case Experiment::kClusteringCurve: per_seed[i] = clustering_curve_seed(params, seeds[i]); break;
      case Experiment::kClassificationCurve: per_seed[i] = classification_curve_seed(params, seeds[i]); break;
    }
  });

  // Data rows ordered by (x, seed), then one mean row per (x, metric).
  std::vector<SweepRow> rows;
  for (const auto& cell : per_seed) rows.insert(rows.end(), cell.begin(), cell.end());
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) { return a.x < b.x; });

  std::vector<SweepRow> out;
  std::size_t begin = 0;
  while (begin < rows.size()) {
    std::size_t end = begin;
    while (end < rows.size() && rows[end].x == rows[begin].x) ++end;
    std::vector<std::string> metrics;
    std::map<std::string, std::pair<double, int>> sums;
    for (std::size_t i = begin; i < end; ++i) {
      out.push_back(rows[i]);
      auto [it, inserted] = sums.try_emplace(rows[i].metric, 0.0, 0);
      if (inserted) metrics.push_back(rows[i].metric);
      it->second.first += rows[i].value;
      ++it->second.second;
    }
    for (const auto& metric : metrics) {
      const auto& [sum, n] = sums[metric];
      out.push_back({rows[begin].experiment, rows[begin].x, std::nullopt, metric, sum / n});
    }
    begin = end;
  }
  return out;
}

}  // namespace mixlds
