#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "mixlds/subspace.hpp"
#include "test_util.hpp"

using namespace mixlds;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd eye(Eigen::Index d) { return MatrixXd::Identity(d, d); }

std::vector<Trajectory> simulate(const std::vector<LdsModel>& models, std::size_t count, Eigen::Index length,
                                 std::uint64_t seed) {
  MixtureSpec spec;
  spec.models = models;
  spec.subspace = {count, length};
  spec.seed = seed;
  return simulate_dataset(spec, 1).subspace_set;
}

double orthonormality_gap(const MatrixXd& m) {
  return (m.transpose() * m - eye(m.cols())).norm();
}

TEST(SegmentPlan, QuarterLayout) {
  const SegmentPlan plan = make_segment_plan(20, 1);
  EXPECT_EQ(plan.n, 5);
  ASSERT_EQ(plan.omega.size(), 1u);
  EXPECT_EQ(plan.omega[0].first.begin, 5);
  EXPECT_EQ(plan.omega[0].second.begin, 15);
  EXPECT_EQ(plan.omega[0].second.end(), 20);
}

TEST(SegmentPlan, CopiesAreDisjointAndInRange) {
  for (Eigen::Index t : {8, 13, 40, 97})
    for (int g : {1, 2}) {
      if (t < 4 * g) continue;
      const SegmentPlan plan = make_segment_plan(t, g);
      EXPECT_EQ(plan.n, t / (4 * g));
      std::vector<Eigen::Index> used;
      for (const auto& [a, b] : plan.omega)
        for (const IndexRange& r : {a, b})
          for (Eigen::Index s = r.begin; s < r.end(); ++s) used.push_back(s);
      EXPECT_GE(*std::min_element(used.begin(), used.end()), 0);
      EXPECT_LE(*std::max_element(used.begin(), used.end()), t - 1);
      std::sort(used.begin(), used.end());
      EXPECT_EQ(std::adjacent_find(used.begin(), used.end()), used.end());
    }
}

TEST(SegmentPlan, TooShort) {
  try {
    make_segment_plan(3, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTooShort);
  }
  EXPECT_THROW(make_segment_plan(7, 2), Error);
}

TEST(SegmentMoments, ConstantTrajectory) {
  Trajectory t;
  t.states = MatrixXd::Zero(3, 10);
  t.states.row(0).setOnes();
  const std::vector<Eigen::Index> omega = {1, 4, 6};
  const auto [h, g] = segment_moments(t, omega, 0);
  EXPECT_EQ(h, VectorXd::Unit(3, 0));
  EXPECT_EQ(g, VectorXd::Unit(3, 0));
}

TEST(SegmentMoments, AlternatingTrajectory) {
  Trajectory t;
  t.states = MatrixXd::Zero(2, 12);
  for (Eigen::Index s = 1; s < 12; s += 2) t.states(0, s) = 1.0;
  const std::vector<Eigen::Index> even = {0, 2, 4, 6, 8, 10};
  EXPECT_TRUE(segment_moments(t, even, 0).first.isZero(0.0));
}

TEST(SegmentMoments, BruteForce) {
  std::mt19937_64 gen(1);
  const Trajectory t = fixture::random_trajectory(4, 10, gen);
  const std::vector<Eigen::Index> omega = {3, 4, 5};
  const auto [h, g] = segment_moments(t, omega, 1);
  for (Eigen::Index j = 0; j < 4; ++j) {
    double hj = 0, gj = 0;
    for (Eigen::Index s : omega) {
      hj += t.states(1, s) * t.states(j, s);
      gj += t.states(1, s + 1) * t.states(j, s);
    }
    EXPECT_NEAR(h(j), hj / 3, 1e-14);
    EXPECT_NEAR(g(j), gj / 3, 1e-14);
  }
}

TEST(SegmentMoments, IndexOutOfRange) {
  Trajectory t;
  t.states = MatrixXd::Zero(2, 5);
  const std::vector<Eigen::Index> last = {4};
  EXPECT_THROW(segment_moments(t, last, 0), Error);
  const std::vector<Eigen::Index> ok = {3};
  EXPECT_THROW(segment_moments(t, ok, 2), Error);
  EXPECT_NO_THROW(segment_moments(t, ok, 1));
}

TEST(SegmentMomentMatrices, RowsAreMoments) {
  std::mt19937_64 gen(2);
  const Trajectory t = fixture::random_trajectory(3, 20, gen);
  const auto [h, g] = segment_moment_matrices(t.states, IndexRange{5, 5});
  const std::vector<Eigen::Index> omega = {5, 6, 7, 8, 9};
  for (Eigen::Index i = 0; i < 3; ++i) {
    const auto [hi, gi] = segment_moments(t, omega, i);
    EXPECT_LE((h.row(i).transpose() - hi).norm(), 1e-13);
    EXPECT_LE((g.row(i).transpose() - gi).norm(), 1e-13);
  }
}

TEST(EstimateSubspaces, SingleModelCapturesGammaRows) {
  const LdsModel m = generate_paper_models(4, 1, 0.5, OrthogonalRotation{}, 2)[0];
  const auto trajs = simulate({m}, 2000, 40, 3);
  const SubspaceBank bank = estimate_subspaces(trajs, FixedRank{1});
  EXPECT_EQ(bank.r, 1);
  const MatrixXd gamma = stationary_covariance(m);
  for (Eigen::Index i = 0; i < 4; ++i) {
    const VectorXd row = gamma.row(i).transpose();
    EXPECT_LE((row - bank.v[i] * bank.v[i].transpose() * row).norm(), 0.1 * row.norm()) << i;
    EXPECT_LE(orthonormality_gap(bank.v[i]), 1e-8);
    EXPECT_LE(orthonormality_gap(bank.u[i]), 1e-8);
  }
}

TEST(EstimateSubspaces, ZeroDataGivesCanonicalBasis) {
  std::vector<Trajectory> trajs(3);
  for (auto& t : trajs) t.states = MatrixXd::Zero(4, 9);
  const SubspaceBank bank = estimate_subspaces(trajs, FixedRank{2});
  for (Eigen::Index i = 0; i < 4; ++i) {
    EXPECT_EQ(bank.v[i], eye(4).leftCols(2));
    EXPECT_EQ(bank.u[i], eye(4).leftCols(2));
  }
}

TEST(EstimateSubspaces, FullRankHasZeroResidual) {
  const auto models = generate_paper_models(3, 2, 0.5, OrthogonalRotation{}, 4);
  const auto trajs = simulate(models, 50, 12, 5);
  const SubspaceBank bank = estimate_subspaces(trajs, FixedRank{3});
  EXPECT_LE(projection_residual(bank, models).max, 1e-12);
}

TEST(EstimateSubspaces, Errors) {
  EXPECT_THROW(estimate_subspaces(std::vector<Trajectory>{}, FixedRank{1}), Error);
  std::vector<Trajectory> short_trajs(2);
  for (auto& t : short_trajs) t.states = MatrixXd::Zero(2, 3);
  try {
    estimate_subspaces(short_trajs, FixedRank{1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTooShort);
  }
}

TEST(EstimateSubspaces, TruncatesToShortest) {
  const auto models = generate_paper_models(3, 1, 0.5, OrthogonalRotation{}, 4);
  auto trajs = simulate(models, 30, 24, 6);
  std::vector<Trajectory> truncated = trajs;
  for (auto& t : truncated) t.states = t.states.leftCols(13).eval();
  trajs[4].states = trajs[4].states.leftCols(13).eval();
  const SubspaceBank a = estimate_subspaces(trajs, FixedRank{2});
  const SubspaceBank b = estimate_subspaces(truncated, FixedRank{2});
  for (Eigen::Index i = 0; i < 3; ++i) {
    EXPECT_LE((a.v[i] * a.v[i].transpose() - b.v[i] * b.v[i].transpose()).norm(), 1e-12);
  }
}

TEST(EstimateSubspaces, EnergyRule) {
  const auto models = generate_paper_models(6, 2, 0.5, OrthogonalRotation{}, 4);
  const auto trajs = simulate(models, 400, 20, 7);
  const SubspaceBank low = estimate_subspaces(trajs, EnergyRank{0.3});
  const SubspaceBank full = estimate_subspaces(trajs, EnergyRank{1.0});
  EXPECT_GE(low.r, 1);
  EXPECT_LE(low.r, full.r);
  EXPECT_EQ(full.r, 6);
  EXPECT_THROW(estimate_subspaces(trajs, EnergyRank{0.0}), Error);
}

TEST(EstimateSubspaces, PermutationInvariantProjections) {
  const auto models = generate_paper_models(5, 2, 0.5, OrthogonalRotation{}, 8);
  auto trajs = simulate(models, 200, 16, 9);
  const SubspaceBank a = estimate_subspaces(trajs, FixedRank{2});
  std::mt19937_64 gen(10);
  std::shuffle(trajs.begin(), trajs.end(), gen);
  const SubspaceBank b = estimate_subspaces(trajs, FixedRank{2});
  for (Eigen::Index i = 0; i < 5; ++i) {
    EXPECT_LE((a.v[i] * a.v[i].transpose() - b.v[i] * b.v[i].transpose()).norm(), 1e-8);
    EXPECT_LE((a.u[i] * a.u[i].transpose() - b.u[i] * b.u[i].transpose()).norm(), 1e-8);
  }
}

TEST(EstimateSubspaces, WorkerCountDoesNotChangeOutput) {
  const auto models = generate_paper_models(5, 2, 0.5, OrthogonalRotation{}, 8);
  const auto trajs = simulate(models, 150, 16, 9);
  const SubspaceBank a = estimate_subspaces(trajs, FixedRank{2}, 1);
  const SubspaceBank b = estimate_subspaces(trajs, FixedRank{2}, 8);
  for (Eigen::Index i = 0; i < 5; ++i) {
    EXPECT_EQ(a.v[i], b.v[i]);
    EXPECT_EQ(a.u[i], b.u[i]);
  }
}

TEST(EstimateSubspaces, MoreSamplesShrinkResidual) {
  const auto models = generate_paper_models(6, 2, 0.5, OrthogonalRotation{}, 11);
  int wins = 0;
  for (int rep = 0; rep < 10; ++rep) {
    const auto small = simulate(models, 50, 20, 100 + rep);
    const auto large = simulate(models, 800, 20, 200 + rep);
    const double rs = projection_residual(estimate_subspaces(small, FixedRank{2}, 1), models).max;
    const double rl = projection_residual(estimate_subspaces(large, FixedRank{2}, 1), models).max;
    wins += rl < rs;
  }
  EXPECT_GE(wins, 9);
}

TEST(EstimateSubspaces, ComplementSegmentsAvoidStatisticSegments) {
  // Nonzero states only on the 2nd and 4th quarters: the complement source sees zeros.
  std::vector<Trajectory> trajs(4);
  std::mt19937_64 gen(12);
  for (auto& t : trajs) {
    t.states = MatrixXd::Zero(3, 17);
    t.states.middleCols(4, 5) = fixture::gaussian_matrix(3, 5, gen);
    t.states.middleCols(12, 5) = fixture::gaussian_matrix(3, 5, gen);
  }
  const SubspaceBank bank = estimate_subspaces(trajs, FixedRank{1}, 1, ComplementOf{1});
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_EQ(bank.v[i], eye(3).leftCols(1));
}

TEST(ProjectionResidual, FullBasisIsZero) {
  const auto models = generate_paper_models(4, 2, 0.5, OrthogonalRotation{}, 1);
  EXPECT_EQ(projection_residual(SubspaceBank::identity(4), models).max, 0.0);
}

TEST(ProjectionResidual, PopulationEigenspacesAreExact) {
  const auto models = generate_paper_models(5, 2, 0.5, OrthogonalRotation{}, 2);
  std::vector<Autocovariances> ac;
  for (const auto& m : models) ac.push_back(autocovariances(m));
  SubspaceBank bank;
  bank.d = 5;
  bank.r = 2;
  for (Eigen::Index i = 0; i < 5; ++i) {
    MatrixXd h = MatrixXd::Zero(5, 5), g = MatrixXd::Zero(5, 5);
    for (const auto& a : ac) {
      h += 0.5 * a.gamma.row(i).transpose() * a.gamma.row(i);
      g += 0.5 * a.y.row(i).transpose() * a.y.row(i);
    }
    bank.v.push_back(top_eigenspace(h + h.transpose(), 2));
    bank.u.push_back(top_eigenspace(g + g.transpose(), 2));
  }
  EXPECT_LE(projection_residual(bank, models).max, 1e-8);
}

TEST(ProjectionResidual, OrthogonalBankGivesRowNorms) {
  // Models whose Gamma and Y rows lie in the first two coordinates.
  MatrixXd a = MatrixXd::Zero(4, 4), w = eye(4) * 1e-3;
  a(0, 1) = 0.4;
  a(1, 0) = -0.3;
  w.topLeftCorner(2, 2) = eye(2);
  const std::vector<LdsModel> models = {{a, w}};
  const Autocovariances ac = autocovariances(models[0]);
  SubspaceBank bank;
  bank.d = 4;
  bank.r = 2;
  bank.v.assign(4, eye(4).rightCols(2));
  bank.u.assign(4, eye(4).rightCols(2));
  const ProjectionResidual r = projection_residual(bank, models);
  for (Eigen::Index i = 0; i < 2; ++i) {
    const VectorXd gamma_row = ac.gamma.row(i).transpose();
    EXPECT_NEAR(r.gamma(i, 0), gamma_row.head(2).norm(), 1e-12);
  }
  double max_row = 0;
  for (Eigen::Index i = 0; i < 4; ++i) {
    const VectorXd gamma_row = ac.gamma.row(i).transpose();
    const VectorXd y_row = ac.y.row(i).transpose();
    max_row = std::max({max_row, gamma_row.head(2).norm(), y_row.head(2).norm()});
  }
  EXPECT_NEAR(r.max, max_row, 1e-12);
}

TEST(ProjectionResidual, DimensionMismatch) {
  const auto models = generate_paper_models(4, 2, 0.5, OrthogonalRotation{}, 1);
  EXPECT_THROW(projection_residual(SubspaceBank::identity(3), models), Error);
}

TEST(TopEigenspace, SignedVersusMagnitude) {
  const MatrixXd m = Eigen::Vector3d(1.0, -5.0, 2.0).asDiagonal();
  const MatrixXd signed_top = top_eigenspace(m, 1);
  const MatrixXd mag_top = top_eigenspace(m, 1, true);
  EXPECT_NEAR(std::abs(signed_top(2, 0)), 1.0, 1e-12);
  EXPECT_NEAR(std::abs(mag_top(1, 0)), 1.0, 1e-12);
}

}  // namespace
