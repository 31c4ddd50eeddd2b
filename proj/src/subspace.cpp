#include "mixlds/subspace.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mixlds/parallel.hpp"

namespace mixlds {

SegmentPlan make_segment_plan(Eigen::Index length, int copies) {
  if (copies < 1) throw Error(ErrorCode::kInvalidArgument, "copy count must be >= 1");
  SegmentPlan plan;
  plan.n = length / (4 * static_cast<Eigen::Index>(copies));
  if (plan.n < 1) {
    throw Error(ErrorCode::kTooShort, "trajectory of length " + std::to_string(length) +
                                          " cannot hold " + std::to_string(4 * copies) + " segments");
  }
  for (Eigen::Index g = 1; g <= copies; ++g) {
    plan.omega.push_back({IndexRange{(4 * g - 3) * plan.n, plan.n}, IndexRange{(4 * g - 1) * plan.n, plan.n}});
  }
  return plan;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> segment_moments(const Trajectory& traj,
                                                            std::span<const Eigen::Index> omega,
                                                            Eigen::Index i) {
  const Eigen::Index d = traj.dim();
  if (i < 0 || i >= d) throw Error(ErrorCode::kIndexOutOfRange, "coordinate index out of range");
  if (omega.empty()) throw Error(ErrorCode::kEmptyInput, "empty index set");
  Eigen::VectorXd h = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(d);
  for (Eigen::Index t : omega) {
    if (t < 0 || t + 1 > traj.length()) {
      throw Error(ErrorCode::kIndexOutOfRange, "time index leaves no successor state");
    }
    h += traj.states(i, t) * traj.states.col(t);
    g += traj.states(i, t + 1) * traj.states.col(t);
  }
  const double inv = 1.0 / static_cast<double>(omega.size());
  return {h * inv, g * inv};
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> segment_moment_matrices(const Eigen::MatrixXd& states,
                                                                    IndexRange range) {
  const auto current = states.middleCols(range.begin, range.size);
  const auto next = states.middleCols(range.begin + 1, range.size);
  const double inv = 1.0 / static_cast<double>(range.size);
  Eigen::MatrixXd h = (current * current.transpose()) * inv;
  Eigen::MatrixXd g = (next * current.transpose()) * inv;
  return {std::move(h), std::move(g)};
}

SubspaceBank SubspaceBank::identity(Eigen::Index d) {
  SubspaceBank bank;
  bank.d = d;
  bank.r = static_cast<int>(d);
  bank.full_basis = true;
  return bank;
}

Eigen::MatrixXd top_eigenspace(const Eigen::MatrixXd& sym, int r, bool by_magnitude) {
  const Eigen::Index d = sym.rows();
  if (sym.isZero(0.0)) return Eigen::MatrixXd::Identity(d, r);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  const Eigen::VectorXd& values = solver.eigenvalues();
  std::vector<Eigen::Index> order(d);
  std::iota(order.begin(), order.end(), 0);
  // Eigenvalues come back ascending; a stable sort keeps ties deterministic.
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return by_magnitude ? std::abs(values(a)) > std::abs(values(b)) : values(a) > values(b);
  });
  Eigen::MatrixXd basis(d, r);
  for (int c = 0; c < r; ++c) basis.col(c) = solver.eigenvectors().col(order[c]);
  return basis;
}

namespace {

int energy_rank(const Eigen::MatrixXd& sym, double threshold) {
  const Eigen::VectorXd abs_values = symmetric_eigenvalues(sym).cwiseAbs();
  std::vector<double> sorted(abs_values.data(), abs_values.data() + abs_values.size());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const double total = std::accumulate(sorted.begin(), sorted.end(), 0.0);
  if (total == 0.0) return 1;
  double mass = 0.0;
  for (std::size_t r = 0; r < sorted.size(); ++r) {
    mass += sorted[r];
    if (mass >= threshold * total) return static_cast<int>(r + 1);
  }
  return static_cast<int>(sorted.size());
}

// Moments averaged over a union of equal-length ranges.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> pooled_moment_matrices(const Eigen::MatrixXd& states,
                                                                   std::span<const IndexRange> ranges) {
  auto [h, g] = segment_moment_matrices(states, ranges.front());
  for (std::size_t j = 1; j < ranges.size(); ++j) {
    const auto [hj, gj] = segment_moment_matrices(states, ranges[j]);
    h += hj;
    g += gj;
  }
  const double inv = 1.0 / static_cast<double>(ranges.size());
  return {h * inv, g * inv};
}

}  // namespace

SubspaceBank estimate_subspaces(std::span<const Trajectory> trajectories, const RankRule& rule,
                                int workers, const SegmentSource& source) {
  if (trajectories.empty()) throw Error(ErrorCode::kEmptyInput, "no trajectories for subspace estimation");
  const Eigen::Index d = trajectories.front().dim();
  Eigen::Index length = trajectories.front().length();
  for (const auto& t : trajectories) {
    if (t.dim() != d) throw Error(ErrorCode::kDimensionMismatch, "trajectories differ in dimension");
    length = std::min(length, t.length());
  }
  std::vector<IndexRange> omega1, omega2;
  if (const auto* complement = std::get_if<ComplementOf>(&source)) {
    const SegmentPlan plan = make_segment_plan(length, complement->copies);
    for (const auto& [first, second] : plan.omega) {
      omega1.push_back({first.begin - plan.n, plan.n});
      omega2.push_back({second.begin - plan.n, plan.n});
    }
  } else {
    const SegmentPlan plan = make_segment_plan(length, 1);
    omega1.push_back(plan.omega.front().first);
    omega2.push_back(plan.omega.front().second);
  }

  if (const auto* fixed = std::get_if<FixedRank>(&rule); fixed && fixed->k < 1) {
    throw Error(ErrorCode::kInvalidK, "rank must be >= 1");
  }

  const std::size_t count = trajectories.size();
  struct Moments {
    Eigen::MatrixXd h1, g1, h2, g2;
  };
  std::vector<Moments> moments(count);
  parallel_for(count, workers, [&](std::size_t m) {
    auto [h1, g1] = pooled_moment_matrices(trajectories[m].states, omega1);
    auto [h2, g2] = pooled_moment_matrices(trajectories[m].states, omega2);
    moments[m] = {std::move(h1), std::move(g1), std::move(h2), std::move(g2)};
  });

  // Symmetrized H_i + H_i^T and G_i + G_i^T per coordinate.
  std::vector<Eigen::MatrixXd> h_sym(d), g_sym(d);
  const double inv_count = 1.0 / static_cast<double>(count);
  parallel_for(static_cast<std::size_t>(d), workers, [&](std::size_t i) {
    const auto row = static_cast<Eigen::Index>(i);
    const Eigen::MatrixXd h = pairwise_sum(0, count, [&](std::size_t m) -> Eigen::MatrixXd {
      return moments[m].h1.row(row).transpose() * moments[m].h2.row(row);
    }) * inv_count;
    const Eigen::MatrixXd g = pairwise_sum(0, count, [&](std::size_t m) -> Eigen::MatrixXd {
      return moments[m].g1.row(row).transpose() * moments[m].g2.row(row);
    }) * inv_count;
    h_sym[i] = h + h.transpose();
    g_sym[i] = g + g.transpose();
  });

  SubspaceBank bank;
  bank.d = d;
  bool by_magnitude = false;
  if (const auto* fixed = std::get_if<FixedRank>(&rule)) {
    bank.r = static_cast<int>(std::min<Eigen::Index>(fixed->k, d));
  } else {
    const double threshold = std::get<EnergyRank>(rule).threshold;
    if (!(threshold > 0.0 && threshold <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "energy threshold must lie in (0, 1]");
    }
    by_magnitude = true;
    std::vector<int> ranks(2 * d);
    parallel_for(ranks.size(), workers, [&](std::size_t j) {
      ranks[j] = energy_rank(j < static_cast<std::size_t>(d) ? h_sym[j] : g_sym[j - d], threshold);
    });
    bank.r = *std::max_element(ranks.begin(), ranks.end());
  }

  bank.v.resize(d);
  bank.u.resize(d);
  parallel_for(static_cast<std::size_t>(d), workers, [&](std::size_t i) {
    bank.v[i] = top_eigenspace(h_sym[i], bank.r, by_magnitude);
    bank.u[i] = top_eigenspace(g_sym[i], bank.r, by_magnitude);
  });
  return bank;
}

ProjectionResidual projection_residual(const SubspaceBank& bank, std::span<const LdsModel> models) {
  const Eigen::Index d = bank.d;
  const auto k = static_cast<Eigen::Index>(models.size());
  ProjectionResidual out;
  out.gamma = Eigen::MatrixXd::Zero(d, k);
  out.y = Eigen::MatrixXd::Zero(d, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    if (models[j].dim() != d) throw Error(ErrorCode::kDimensionMismatch, "bank and model dimensions differ");
  }
  if (!bank.full_basis && (static_cast<Eigen::Index>(bank.v.size()) != d ||
                           static_cast<Eigen::Index>(bank.u.size()) != d)) {
    throw Error(ErrorCode::kDimensionMismatch, "bank does not hold d subspaces");
  }
  if (bank.full_basis) return out;

  for (Eigen::Index j = 0; j < k; ++j) {
    const Autocovariances cov = autocovariances(models[j]);
    for (Eigen::Index i = 0; i < d; ++i) {
      const Eigen::VectorXd gamma_row = cov.gamma.row(i).transpose();
      const Eigen::VectorXd y_row = cov.y.row(i).transpose();
      const auto& v = bank.v[i];
      const auto& u = bank.u[i];
      out.gamma(i, j) = (gamma_row - v * (v.transpose() * gamma_row)).norm();
      out.y(i, j) = (y_row - u * (u.transpose() * y_row)).norm();
    }
  }
  out.max = std::max(out.gamma.size() ? out.gamma.maxCoeff() : 0.0, out.y.size() ? out.y.maxCoeff() : 0.0);
  return out;
}

}  // namespace mixlds
