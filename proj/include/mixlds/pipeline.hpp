#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mixlds/classification.hpp"
#include "mixlds/clustering.hpp"
#include "mixlds/estimation.hpp"
#include "mixlds/lds_core.hpp"
#include "mixlds/simulate.hpp"
#include "mixlds/subspace.hpp"

namespace mixlds {

struct AutoTau {
  std::vector<double> grid;  // empty: default_threshold_grid
};
using TauSetting = std::variant<double, AutoTau>;

enum class Refinement {
  kIfAvailable,  // classify when the classification subset is nonempty
  kRequired,     // missing classification subset is an error
  kOff,
};

struct PipelineConfig {
  std::optional<int> k;  // nullopt: infer from the similarity matrix
  TauSetting tau = 0.0;
  int copies = 1;
  bool use_subspaces = true;
  bool sample_split = true;  // false: subspaces come from unused time segments of the clustering subset
  std::optional<RankRule> rank_rule;  // default: FixedRank{k}, or EnergyRank{0.9} when k is unknown
  double ridge = 0.0;
  Refinement refinement = Refinement::kIfAvailable;
  std::uint64_t seed = 0;
  int workers = 0;
};

struct ModelMatching {
  std::vector<int> permutation;  // permutation[k] = index of the matched truth model
  std::vector<double> a_errors;  // ||A_hat - A_pi||_2
  std::vector<double> w_errors;  // ||W_hat - W_pi||_2 / ||W_pi||_2
};

/// Brute force over K! assignments minimizing sum_k ||A_hat_k - A_pi(k)||_F.
ModelMatching match_models(std::span<const LdsModel> estimates, std::span<const LdsModel> truth);

struct PipelineReport {
  ClusterAssignment clusters;           // over the clustering subset
  std::vector<int> classified;          // argmin labels over the classification subset
  std::vector<ModelEstimate> coarse_models;
  std::vector<ModelEstimate> models;    // refined
  double tau = 0.0;
  int subspace_rank = 0;
  bool refined = false;

  std::optional<ModelMatching> matching;
  std::optional<double> clustering_error;
  std::optional<double> classification_error;

  double max_a_error() const;
  double max_w_error() const;
};

/// Two-stage fit: subspaces, pairwise clustering, least squares (coarse),
/// likelihood classification of the remaining trajectories, least squares again.
/// Truth labels on the trajectories and truth_models, when present, populate
/// the error fields.
PipelineReport run_pipeline(const MixedDataset& dataset, const PipelineConfig& config,
                            std::span<const LdsModel> truth_models = {});

/// tau = Delta_{Gamma,Y}^2 / 4 from known models.
double separation_threshold(std::span<const LdsModel> models);

enum class Experiment { kFig2, kClusteringCurve, kClassificationCurve };

std::optional<Experiment> parse_experiment(std::string_view name);
std::string_view to_string(Experiment e);

struct SweepParams {
  Eigen::Index d = 20;
  int k = 3;
  double rho = 0.5;
  double delta = 0.12;
  int copies = 1;
  InitMode init_mode = InitMode::kCase1;
  Eigen::Index t_subspace = 20;
  Eigen::Index t_clustering = 20;
  Eigen::Index t_classification = 5;
  std::size_t m_subspace = 600;
  std::size_t m_clustering = 200;
  std::size_t m_classification = 400;
  std::vector<double> x_values;  // per experiment: |M_classification|, T_clustering or T_classification
};

SweepParams default_sweep_params(Experiment e);

struct SweepRow {
  std::string experiment;
  double x = 0.0;
  std::optional<std::uint64_t> seed;  // absent on mean rows
  std::string metric;
  double value = 0.0;
};

/// Runs the experiment on every (x, seed) cell and appends per-(x, metric) mean rows.
///  fig2:                 x = total clustering + classification steps; metrics max_a_error,
///                        max_w_error, clustering_error, classification_error.
///  clustering_curve:     x = T_clustering; metrics error_with_subspaces, error_without_subspaces.
///  classification_curve: x = T_classification; metric classification_error.
std::vector<SweepRow> sweep(Experiment experiment, const SweepParams& params,
                            std::span<const std::uint64_t> seeds, int workers = 0);

}  // namespace mixlds
