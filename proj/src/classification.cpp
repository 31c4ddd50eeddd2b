#include "mixlds/classification.hpp"

#include <cmath>

#include "mixlds/parallel.hpp"

namespace mixlds {

namespace {

class GaussianScorer {
 public:
  explicit GaussianScorer(const LdsModel& model) : a_(model.a) {
    const Eigen::Index d = model.dim();
    if (model.a.cols() != d || model.w.rows() != d || model.w.cols() != d) {
      throw Error(ErrorCode::kDimensionMismatch, "A and W must be square and of equal size");
    }
    const Eigen::VectorXd eig = symmetric_eigenvalues(model.w);
    if (!(eig(0) > 1e-12 * eig(d - 1)) || !(eig(d - 1) > 0.0)) {
      throw Error(ErrorCode::kSingularW, "noise covariance is singular or indefinite");
    }
    llt_.compute(symmetrized(model.w));
    if (llt_.info() != Eigen::Success) throw Error(ErrorCode::kSingularW, "Cholesky of W failed");
    log_det_ = 2.0 * llt_.matrixL().toDenseMatrix().diagonal().array().log().sum();
  }

  double operator()(const Trajectory& traj) const {
    const Eigen::Index t = traj.length();
    if (t < 1) throw Error(ErrorCode::kTooShort, "trajectory has no transitions");
    if (traj.dim() != a_.rows()) throw Error(ErrorCode::kDimensionMismatch, "trajectory and model differ in dimension");
    const Eigen::MatrixXd r = traj.states.rightCols(t) - a_ * traj.states.leftCols(t);
    const Eigen::MatrixXd z = llt_.matrixL().solve(r);
    CompensatedSum quad;
    for (Eigen::Index s = 0; s < t; ++s) quad.add(z.col(s).squaredNorm());
    return static_cast<double>(t) * log_det_ + quad.value();
  }

 private:
  Eigen::MatrixXd a_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double log_det_ = 0.0;
};

}  // namespace

double trajectory_loss(const Trajectory& traj, const LdsModel& model) { return GaussianScorer(model)(traj); }

LossTable classify(std::span<const Trajectory> trajectories, std::span<const LdsModel> models, int workers) {
  if (models.empty()) throw Error(ErrorCode::kEmptyInput, "no candidate models");
  std::vector<GaussianScorer> scorers;
  scorers.reserve(models.size());
  for (const auto& m : models) scorers.emplace_back(m);

  LossTable table;
  const auto rows = static_cast<Eigen::Index>(trajectories.size());
  const auto cols = static_cast<Eigen::Index>(models.size());
  table.losses.resize(rows, cols);
  table.argmin.assign(trajectories.size(), 0);
  parallel_for(trajectories.size(), workers, [&](std::size_t m) {
    const auto row = static_cast<Eigen::Index>(m);
    for (Eigen::Index k = 0; k < cols; ++k) table.losses(row, k) = scorers[k](trajectories[m]);
    int best = 0;
    for (Eigen::Index k = 1; k < cols; ++k) {
      if (table.losses(row, k) < table.losses(row, best)) best = static_cast<int>(k);
    }
    table.argmin[m] = best;
  });
  return table;
}

double classification_error(const LossTable& table, std::span<const int> truth,
                            std::span<const int> permutation) {
  if (truth.size() != table.argmin.size()) throw Error(ErrorCode::kSizeMismatch, "truth length differs from table");
  const auto k = static_cast<int>(permutation.size());
  std::vector<bool> seen(k, false);
  for (int p : permutation) {
    if (p < 0 || p >= k || seen[p]) throw Error(ErrorCode::kInvalidPermutation, "permutation is not a bijection");
    seen[p] = true;
  }
  if (truth.empty()) return 0.0;
  std::size_t wrong = 0;
  for (std::size_t m = 0; m < truth.size(); ++m) {
    const int est = table.argmin[m];
    if (est < 0 || est >= k) throw Error(ErrorCode::kInvalidPermutation, "permutation does not cover the models");
    wrong += permutation[est] != truth[m];
  }
  return static_cast<double>(wrong) / static_cast<double>(truth.size());
}

}  // namespace mixlds
