#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mixlds/simulate.hpp"
#include "mixlds/subspace.hpp"

namespace mixlds {

/// G copies of the projected pair statistics and their (lower) medians.
struct PairStatistic {
  double median_gamma = 0.0;
  double median_y = 0.0;
  std::vector<std::pair<double, double>> per_copy;  // (stat_gamma_g, stat_y_g)

  double total() const { return median_gamma + median_y; }
};

/// Lower-middle median; the input is taken by value and partially sorted.
double lower_median(std::vector<double> values);

/// Compares two trajectories through their segment autocovariance moments:
///   stat_gamma_g = sum_i < V_i^T (h_m - h_n)_{g,1}, V_i^T (h_m - h_n)_{g,2} >
/// and likewise stat_y_g with U_i and the lag-one moments. Trajectories of
/// unequal length are truncated to the shorter one.
PairStatistic pair_statistic(const Trajectory& traj_m, const Trajectory& traj_n,
                             const SubspaceBank& bank, int copies);

/// Symmetric tables of median statistics for every pair (zero diagonal).
struct PairwiseStatistics {
  Eigen::MatrixXd median_gamma;
  Eigen::MatrixXd median_y;
  int copies = 1;

  Eigen::MatrixXd total() const { return median_gamma + median_y; }
  Eigen::Index size() const { return median_gamma.rows(); }
};

PairwiseStatistics pairwise_statistics(std::span<const Trajectory> trajectories,
                                       const SubspaceBank& bank, int copies, int workers = 0);

struct SimilarityMatrix {
  Eigen::MatrixXi s;  // 0/1, symmetric, unit diagonal
  double tau = 0.0;
  int copies = 1;
};

SimilarityMatrix threshold_statistics(const PairwiseStatistics& stats, double tau);

SimilarityMatrix similarity_matrix(std::span<const Trajectory> trajectories, const SubspaceBank& bank,
                                   double tau, int copies, int workers = 0);

struct ClusterAssignment {
  std::vector<int> labels;  // 0-based, covering [0, k_hat)
  int k_hat = 0;
};

/// Connected components of S viewed as a graph, labelled in order of their
/// smallest member.
ClusterAssignment connected_components(const Eigen::MatrixXi& s);

/// k-means (k-means++ seeding, Lloyd iterations) on the rows of points; best
/// inertia over restarts. Labels are canonicalized by first appearance.
std::vector<int> kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int restarts = 10,
                        int max_iterations = 100);

/// Splits the trajectories into k clusters. If S has exactly k connected
/// components they are returned as is; otherwise normalized spectral
/// clustering (top-k eigenvectors of D^-1/2 S D^-1/2, unit rows, k-means
/// seeded from a hash of S mixed with salt).
ClusterAssignment partition(const SimilarityMatrix& similarity, int k, std::uint64_t salt = 0);

struct ThresholdChoice {
  double tau = 0.0;
  int k_hat = 0;
  std::vector<int> component_counts;  // per sorted grid point
  std::vector<double> grid;           // sorted
};

/// Evenly spaced grid on [0, largest pair statistic].
std::vector<double> default_threshold_grid(const PairwiseStatistics& stats, int points = 100);

/// Picks tau from the grid where the component count of S(tau) stays constant
/// over the widest run of consecutive grid points (ties: fewer components).
ThresholdChoice auto_threshold(const PairwiseStatistics& stats, std::vector<double> grid);
ThresholdChoice auto_threshold(std::span<const Trajectory> trajectories, const SubspaceBank& bank,
                               int copies, std::vector<double> grid, int workers = 0);

/// Fraction of mismatched labels under the best label permutation.
double clustering_error(std::span<const int> assignment, std::span<const int> truth);

/// Best label permutation: perm[assigned] = truth label.
std::vector<int> best_label_matching(std::span<const int> assignment, std::span<const int> truth);

}  // namespace mixlds
