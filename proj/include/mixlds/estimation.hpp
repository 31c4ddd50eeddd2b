#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mixlds/lds_core.hpp"
#include "mixlds/simulate.hpp"

namespace mixlds {

/// Trajectories believed to share one latent model. Holds pointers into the
/// caller's dataset; the trajectories must outlive the cluster.
struct ClusterData {
  std::vector<const Trajectory*> members;

  Eigen::Index total_steps() const;
};

struct ModelEstimate {
  LdsModel model;
  double normal_matrix_min_eig = 0.0;
  Eigen::Index steps_used = 0;
};

/// Ordinary least squares over every transition of every member:
///   A = (sum x_{t+1} x_t^T)(sum x_t x_t^T + ridge I)^-1,
///   W = mean of the residual outer products.
ModelEstimate least_squares_estimate(const ClusterData& cluster, double ridge = 0.0, int workers = 0);

/// Residuals x_{t+1} - A x_t as columns, member-major then time.
Eigen::MatrixXd residuals(const ClusterData& cluster, const LdsModel& model);

}  // namespace mixlds
