#include "mixlds/estimation.hpp"

#include "mixlds/parallel.hpp"

namespace mixlds {

Eigen::Index ClusterData::total_steps() const {
  Eigen::Index steps = 0;
  for (const Trajectory* t : members) steps += t->length();
  return steps;
}

namespace {

struct Moments {
  Eigen::MatrixXd xx;    // sum x_t x_t^T
  Eigen::MatrixXd next;  // sum x_{t+1} x_t^T
  Moments& operator+=(const Moments& o) {
    xx += o.xx;
    next += o.next;
    return *this;
  }
};

Eigen::Index common_dim(const ClusterData& cluster) {
  if (cluster.members.empty()) throw Error(ErrorCode::kEmptyInput, "cluster has no members");
  const Eigen::Index d = cluster.members.front()->dim();
  for (const Trajectory* t : cluster.members) {
    if (t->dim() != d) throw Error(ErrorCode::kDimensionMismatch, "cluster members differ in dimension");
  }
  return d;
}

}  // namespace

ModelEstimate least_squares_estimate(const ClusterData& cluster, double ridge, int workers) {
  if (!(ridge >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "ridge must be nonnegative");
  const Eigen::Index d = common_dim(cluster);
  const Eigen::Index steps = cluster.total_steps();
  if (steps < 1) throw Error(ErrorCode::kTooShort, "cluster holds no transitions");
  const auto& members = cluster.members;

  const Moments sums = blocked_reduce(members.size(), workers, [&](std::size_t, std::size_t lo, std::size_t hi) {
    Moments part{Eigen::MatrixXd::Zero(d, d), Eigen::MatrixXd::Zero(d, d)};
    for (std::size_t m = lo; m < hi; ++m) {
      const Eigen::MatrixXd& x = members[m]->states;
      const Eigen::Index t = members[m]->length();
      part.xx.noalias() += x.leftCols(t) * x.leftCols(t).transpose();
      part.next.noalias() += x.rightCols(t) * x.leftCols(t).transpose();
    }
    return part;
  });

  const Eigen::MatrixXd normal = symmetrized(sums.xx);
  const Eigen::VectorXd eig = symmetric_eigenvalues(normal);
  ModelEstimate out;
  out.normal_matrix_min_eig = eig(0);
  out.steps_used = steps;
  if (ridge == 0.0 && !(eig(0) >= 1e-12 * eig(d - 1) && eig(d - 1) > 0.0)) {
    throw Error(ErrorCode::kSingularNormalMatrix,
                "sum of x_t x_t^T is rank deficient (" + std::to_string(steps) + " steps, d = " +
                    std::to_string(d) + ")");
  }
  const Eigen::MatrixXd regularized = normal + ridge * Eigen::MatrixXd::Identity(d, d);
  Eigen::LLT<Eigen::MatrixXd> llt(regularized);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::kSingularNormalMatrix, "Cholesky of the normal matrix failed");
  }
  // A^T = (sum x x^T)^-1 (sum x x_+^T).
  out.model.a = llt.solve(sums.next.transpose()).transpose();

  const Eigen::MatrixXd& a = out.model.a;
  const Eigen::MatrixXd noise = blocked_reduce(members.size(), workers, [&](std::size_t, std::size_t lo, std::size_t hi) {
    Eigen::MatrixXd part = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t m = lo; m < hi; ++m) {
      const Eigen::MatrixXd& x = members[m]->states;
      const Eigen::Index t = members[m]->length();
      const Eigen::MatrixXd r = x.rightCols(t) - a * x.leftCols(t);
      part.noalias() += r * r.transpose();
    }
    return part;
  });
  out.model.w = symmetrized(noise / static_cast<double>(steps));
  return out;
}

Eigen::MatrixXd residuals(const ClusterData& cluster, const LdsModel& model) {
  const Eigen::Index d = common_dim(cluster);
  if (model.dim() != d || model.a.cols() != d) {
    throw Error(ErrorCode::kDimensionMismatch, "model does not match cluster dimension");
  }
  Eigen::MatrixXd out(d, cluster.total_steps());
  Eigen::Index col = 0;
  for (const Trajectory* traj : cluster.members) {
    const Eigen::Index t = traj->length();
    out.middleCols(col, t) = traj->states.rightCols(t) - model.a * traj->states.leftCols(t);
    col += t;
  }
  return out;
}

}  // namespace mixlds
