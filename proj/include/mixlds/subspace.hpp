#pragma once

#include <span>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "mixlds/lds_core.hpp"
#include "mixlds/simulate.hpp"

namespace mixlds {

/// Contiguous run of time indices [begin, begin + size).
struct IndexRange {
  Eigen::Index begin = 0;
  Eigen::Index size = 0;

  Eigen::Index end() const { return begin + size; }
};

/// Segment layout for a trajectory of T transitions. For G copies the
/// trajectory is cut into 4G segments of length n = floor(T / 4G); copy g uses
/// segments 4g-2 and 4g (1-based) as its two index sets. Indices are shifted to
/// start at 0, so every t satisfies t + 1 <= T.
struct SegmentPlan {
  Eigen::Index n = 0;
  std::vector<std::pair<IndexRange, IndexRange>> omega;  // one (first, second) pair per copy
};

SegmentPlan make_segment_plan(Eigen::Index length, int copies);

/// h = |omega|^-1 sum_t (x_t)_i x_t and g = |omega|^-1 sum_t (x_{t+1})_i x_t.
std::pair<Eigen::VectorXd, Eigen::VectorXd> segment_moments(const Trajectory& traj,
                                                            std::span<const Eigen::Index> omega,
                                                            Eigen::Index i);

/// All coordinates at once: row i of the first matrix is h_i^T, row i of the
/// second is g_i^T, i.e. the averages of x_t x_t^T and x_{t+1} x_t^T over the range.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> segment_moment_matrices(const Eigen::MatrixXd& states,
                                                                    IndexRange range);

/// Per-coordinate subspaces {V_i, U_i}, each d x r with orthonormal columns.
/// full_basis marks the "no reduction" sentinel where every V_i = U_i = I and
/// projections are skipped.
struct SubspaceBank {
  Eigen::Index d = 0;
  int r = 0;
  std::vector<Eigen::MatrixXd> v;
  std::vector<Eigen::MatrixXd> u;
  bool full_basis = false;

  static SubspaceBank identity(Eigen::Index d);
};

struct FixedRank {
  int k = 1;
};
struct EnergyRank {
  double threshold = 0.9;  // fraction of total absolute eigenvalue mass
};
using RankRule = std::variant<FixedRank, EnergyRank>;

/// Time segments feeding the subspace moments. EvenQuarters is the standard
/// (second, fourth) quarter pair. ComplementOf{G} uses the segments a G-copy
/// clustering plan leaves unused, (4g-3) and (4g-1) of 4G (1-based), so
/// subspaces fitted on the clustering trajectories themselves never reuse the
/// samples seen by the pair statistics.
struct EvenQuarters {};
struct ComplementOf {
  int copies = 1;
};
using SegmentSource = std::variant<EvenQuarters, ComplementOf>;

/// Top-r eigenspaces of (H_i + H_i^T) and (G_i + G_i^T), where
/// H_i = mean_m h_{m,i,1} h_{m,i,2}^T over the two segment index sets.
/// Trajectories of unequal length are truncated to the shortest.
SubspaceBank estimate_subspaces(std::span<const Trajectory> trajectories, const RankRule& rule,
                                int workers = 0, const SegmentSource& source = EvenQuarters{});

struct ProjectionResidual {
  double max = 0.0;
  Eigen::MatrixXd gamma;  // d x K: ||(Gamma_k)_i - V_i V_i^T (Gamma_k)_i||
  Eigen::MatrixXd y;      // d x K: same for Y_k and U_i
};

ProjectionResidual projection_residual(const SubspaceBank& bank, std::span<const LdsModel> models);

/// Top-r eigenvectors of a symmetric matrix, ordered by signed eigenvalue
/// (or by magnitude), descending. An exactly zero matrix yields e_1..e_r.
Eigen::MatrixXd top_eigenspace(const Eigen::MatrixXd& sym, int r, bool by_magnitude = false);

}  // namespace mixlds
