#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mixlds/simulate.hpp"
#include "test_util.hpp"

using namespace mixlds;
using Eigen::MatrixXd;

namespace {

MatrixXd eye(Eigen::Index d) { return MatrixXd::Identity(d, d); }

MixtureSpec single_model(const LdsModel& m, Eigen::Index length, std::size_t count = 1, std::uint64_t seed = 1) {
  MixtureSpec spec;
  spec.models = {m};
  spec.clustering = {count, length};
  spec.seed = seed;
  return spec;
}

TEST(GeneratePaperModels, OrthogonalRotation) {
  const auto models = generate_paper_models(80, 4, 0.5, OrthogonalRotation{}, 3);
  ASSERT_EQ(models.size(), 4u);
  for (const auto& m : models) {
    EXPECT_NEAR(spectral_norm(m.a), 0.5, 1e-10);
    EXPECT_NEAR(spectral_radius(m.a), 0.5, 1e-10);
    EXPECT_NEAR((m.a.transpose() * m.a - 0.25 * eye(80)).norm(), 0.0, 1e-10);
    const Eigen::VectorXd eig = symmetric_eigenvalues(m.w);
    EXPECT_GE(eig(0), 1.0 - 1e-10);
    EXPECT_LE(eig(79), 2.0 + 1e-10);
  }
  EXPECT_GT((models[0].a - models[1].a).norm(), 1.0);
}

TEST(GeneratePaperModels, ZeroRho) {
  const auto models = generate_paper_models(2, 1, 0.0, OrthogonalRotation{}, 3);
  EXPECT_TRUE(models[0].a.isZero(0.0));
}

TEST(GeneratePaperModels, IdentityPerturbation) {
  const auto models = generate_paper_models(40, 2, 0.5, IdentityPerturbation{0.12}, 3);
  EXPECT_NEAR(spectral_radius(models[0].a), 0.38, 1e-10);
  EXPECT_NEAR(spectral_radius(models[1].a), 0.62, 1e-10);
  EXPECT_EQ(models[0].w, eye(40));
  // Shared rotation: A_2 = (0.62 / 0.38) A_1.
  EXPECT_NEAR((models[1].a - (0.62 / 0.38) * models[0].a).norm(), 0.0, 1e-12);
}

TEST(GeneratePaperModels, InvalidRho) {
  EXPECT_THROW(generate_paper_models(2, 1, 1.0, OrthogonalRotation{}, 0), Error);
  EXPECT_THROW(generate_paper_models(2, 1, -0.1, OrthogonalRotation{}, 0), Error);
  try {
    generate_paper_models(2, 2, 0.9, IdentityPerturbation{0.2}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidRho);
  }
}

TEST(GeneratePaperModels, Deterministic) {
  const auto a = generate_paper_models(5, 3, 0.5, OrthogonalRotation{}, 9);
  const auto b = generate_paper_models(5, 3, 0.5, OrthogonalRotation{}, 9);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(a[k].a, b[k].a);
    EXPECT_EQ(a[k].w, b[k].w);
  }
}

TEST(SimulateDataset, PureNoiseWhenAIsZero) {
  const MixedDataset data = simulate_dataset(single_model({MatrixXd::Zero(3, 3), eye(3)}, 3));
  const auto& x = data.clustering_set.at(0).states;
  ASSERT_EQ(x.cols(), 4);
  EXPECT_TRUE(x.col(0).isZero(0.0));
  // Large sample of the same spec: states are N(0, I) and uncorrelated across time.
  const MixedDataset many = simulate_dataset(single_model({MatrixXd::Zero(3, 3), eye(3)}, 3, 20000));
  MatrixXd cov = MatrixXd::Zero(3, 3), cross = MatrixXd::Zero(3, 3);
  for (const auto& t : many.clustering_set) {
    cov += t.states.col(2) * t.states.col(2).transpose();
    cross += t.states.col(2) * t.states.col(1).transpose();
  }
  cov /= 20000.0;
  cross /= 20000.0;
  EXPECT_LT((cov - eye(3)).cwiseAbs().maxCoeff(), 5 * std::sqrt(2.0 / 20000));
  EXPECT_LT(cross.cwiseAbs().maxCoeff(), 5 * std::sqrt(1.0 / 20000));
}

TEST(SimulateDataset, BitIdenticalAcrossRunsAndWorkers) {
  MixtureSpec spec;
  spec.models = generate_paper_models(4, 3, 0.5, OrthogonalRotation{}, 1);
  spec.subspace = {10, 12};
  spec.clustering = {15, 8};
  spec.classification = {20, 5};
  spec.seed = 77;
  const MixedDataset a = simulate_dataset(spec, 1);
  const MixedDataset b = simulate_dataset(spec, 1);
  const MixedDataset c = simulate_dataset(spec, 8);
  for (Subset s : {Subset::kSubspace, Subset::kClustering, Subset::kClassification}) {
    ASSERT_EQ(a.subset(s).size(), c.subset(s).size());
    for (std::size_t m = 0; m < a.subset(s).size(); ++m) {
      EXPECT_EQ(a.subset(s)[m].states, b.subset(s)[m].states);
      EXPECT_EQ(a.subset(s)[m].states, c.subset(s)[m].states);
      EXPECT_EQ(a.subset(s)[m].label, c.subset(s)[m].label);
    }
  }
}

TEST(SimulateDataset, ScalarStationaryVariance) {
  const MixedDataset data = simulate_dataset(single_model({MatrixXd::Constant(1, 1, 0.5), eye(1)}, 1000000));
  const auto& x = data.clustering_set[0].states;
  const double var = x.rightCols(500000).squaredNorm() / 500000.0;
  EXPECT_NEAR(var, 4.0 / 3.0, 0.01 * 4.0 / 3.0);
}

TEST(SimulateDataset, SubsetsDisjointAndCovering) {
  MixtureSpec spec;
  spec.models = generate_paper_models(2, 2, 0.5, OrthogonalRotation{}, 1);
  spec.subspace = {3, 4};
  spec.clustering = {5, 4};
  spec.classification = {2, 4};
  const MixedDataset data = simulate_dataset(spec);
  std::vector<std::size_t> seen;
  for (Subset s : {Subset::kSubspace, Subset::kClustering, Subset::kClassification})
    for (const auto& t : data.subset(s)) seen.push_back(t.index);
  std::sort(seen.begin(), seen.end());
  std::vector<std::size_t> expected(10);
  std::iota(expected.begin(), expected.end(), 0);
  EXPECT_EQ(seen, expected);
  EXPECT_EQ(data.subspace_set.size(), 3u);
  EXPECT_EQ(data.classification_set.size(), 2u);
}

TEST(SimulateDataset, Case1Stitching) {
  MixtureSpec spec;
  spec.models = generate_paper_models(3, 3, 0.5, OrthogonalRotation{}, 1);
  spec.init_mode = InitMode::kCase1;
  spec.subspace = {4, 7};
  spec.clustering = {6, 5};
  spec.classification = {8, 3};
  const MixedDataset data = simulate_dataset(spec);
  std::vector<const Trajectory*> order;
  for (Subset s : {Subset::kSubspace, Subset::kClustering, Subset::kClassification})
    for (const auto& t : data.subset(s)) order.push_back(&t);
  std::sort(order.begin(), order.end(), [](auto a, auto b) { return a->index < b->index; });
  EXPECT_TRUE(order.front()->states.col(0).isZero(0.0));
  bool label_changes = false;
  for (std::size_t m = 0; m + 1 < order.size(); ++m) {
    EXPECT_EQ(order[m + 1]->states.col(0), order[m]->states.col(order[m]->states.cols() - 1));
    label_changes = label_changes || order[m]->label != order[m + 1]->label;
  }
  EXPECT_TRUE(label_changes);
}

TEST(SimulateDataset, FractionLabelsMatchWithinOnePerSubset) {
  MixtureSpec spec;
  spec.models = generate_paper_models(2, 3, 0.5, OrthogonalRotation{}, 1);
  spec.label_mode = FractionLabels{{0.5, 0.3, 0.2}};
  spec.subspace = {17, 4};
  spec.clustering = {33, 4};
  spec.classification = {101, 4};
  const MixedDataset data = simulate_dataset(spec);
  for (Subset s : {Subset::kSubspace, Subset::kClustering, Subset::kClassification}) {
    const auto& set = data.subset(s);
    std::vector<double> counts(3, 0.0);
    for (const auto& t : set) counts[*t.label] += 1.0;
    const std::vector<double> p = {0.5, 0.3, 0.2};
    for (int k = 0; k < 3; ++k) EXPECT_LE(std::abs(counts[k] / set.size() - p[k]), 1.0 / set.size());
  }
}

TEST(SimulateDataset, UniformLabelsRoughlyBalanced) {
  MixtureSpec spec;
  spec.models = generate_paper_models(2, 4, 0.5, OrthogonalRotation{}, 1);
  spec.clustering = {4000, 1};
  const MixedDataset data = simulate_dataset(spec);
  std::vector<int> counts(4, 0);
  for (const auto& t : data.clustering_set) ++counts[*t.label];
  for (int c : counts) EXPECT_NEAR(c, 1000, 5 * std::sqrt(4000 * 0.25 * 0.75));
}

TEST(SimulateDataset, FixedLabels) {
  MixtureSpec spec;
  spec.models = generate_paper_models(2, 2, 0.5, OrthogonalRotation{}, 1);
  spec.clustering = {4, 3};
  spec.label_mode = FixedLabels{{1, 0, 0, 1}};
  const MixedDataset data = simulate_dataset(spec);
  EXPECT_EQ(*data.clustering_set[0].label, 1);
  EXPECT_EQ(*data.clustering_set[1].label, 0);
  spec.label_mode = FixedLabels{{1, 0}};
  EXPECT_THROW(simulate_dataset(spec), Error);
}

TEST(SimulateDataset, RejectsUnstable) {
  try {
    simulate_dataset(single_model({1.01 * eye(2), eye(2)}, 5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnstableModel);
  }
}

TEST(SimulateDataset, StationaryFinalQuarter) {
  // rho = 0.5: length 100 / (1 - rho) = 200; use many trajectories for the Monte-Carlo error.
  std::mt19937_64 gen(3);
  const LdsModel m = fixture::random_stable_model(2, 0.5, gen);
  const MatrixXd gamma = stationary_covariance(m);
  const MixedDataset data = simulate_dataset(single_model(m, 200, 4000, 5));
  MatrixXd sum = MatrixXd::Zero(2, 2);
  std::vector<MatrixXd> per;
  for (const auto& t : data.clustering_set) {
    const auto last = t.states.rightCols(50);
    per.push_back(last * last.transpose() / 50.0);
    sum += per.back();
  }
  const MatrixXd mean = sum / 4000.0;
  MatrixXd var = MatrixXd::Zero(2, 2);
  for (const auto& p : per) var += (p - mean).cwiseAbs2();
  const MatrixXd se = (var / 3999.0 / 4000.0).cwiseSqrt();
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) EXPECT_LE(std::abs(mean(i, j) - gamma(i, j)), 3 * se(i, j));
}

TEST(EmpiricalAutocov, ZeroTrajectory) {
  Trajectory t;
  t.states = MatrixXd::Zero(2, 20);
  const Autocovariances ac = empirical_autocov(t, 3);
  EXPECT_TRUE(ac.gamma.isZero(0.0));
  EXPECT_TRUE(ac.y.isZero(0.0));
}

TEST(EmpiricalAutocov, LongTrajectoryMatchesLyapunov) {
  const LdsModel m{0.5 * eye(2), eye(2)};
  const MixedDataset data = simulate_dataset(single_model(m, 100000, 1, 9));
  const Autocovariances ac = empirical_autocov(data.clustering_set[0], 100);
  const MatrixXd gamma = stationary_covariance(m);
  EXPECT_LE((ac.gamma - gamma).norm(), 0.05 * gamma.norm());
  EXPECT_LE((ac.y - 0.5 * gamma).norm(), 0.05 * (0.5 * gamma).norm());
}

TEST(EmpiricalAutocov, MatchesDirectAverage) {
  std::mt19937_64 gen(4);
  const Trajectory t = fixture::random_trajectory(3, 300, gen);
  const Autocovariances ac = empirical_autocov(t, 10);
  MatrixXd g = MatrixXd::Zero(3, 3), y = MatrixXd::Zero(3, 3);
  int n = 0;
  for (Eigen::Index s = 11; s < 300; ++s, ++n) {
    g += t.states.col(s) * t.states.col(s).transpose();
    y += t.states.col(s + 1) * t.states.col(s).transpose();
  }
  EXPECT_LE((ac.gamma - g / n).norm(), 1e-12);
  EXPECT_LE((ac.y - y / n).norm(), 1e-12);
}

TEST(EmpiricalAutocov, TooShort) {
  Trajectory t;
  t.states = MatrixXd::Zero(2, 5);
  EXPECT_THROW(empirical_autocov(t, 3), Error);
}

TEST(HaarOrthogonal, IsOrthogonal) {
  KeyedStream s(42);
  const MatrixXd q = haar_orthogonal(7, s);
  EXPECT_LE((q.transpose() * q - eye(7)).norm(), 1e-12);
}

}  // namespace
