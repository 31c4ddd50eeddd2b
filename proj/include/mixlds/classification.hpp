#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mixlds/lds_core.hpp"
#include "mixlds/simulate.hpp"

namespace mixlds {

struct LossTable {
  Eigen::MatrixXd losses;  // trajectories x models
  std::vector<int> argmin;  // ties go to the smallest model index
};

/// Gaussian negative log-likelihood up to constants:
///   L(A, W) = T log det W + sum_t r_t^T W^-1 r_t,  r_t = x_{t+1} - A x_t.
double trajectory_loss(const Trajectory& traj, const LdsModel& model);

LossTable classify(std::span<const Trajectory> trajectories, std::span<const LdsModel> models,
                   int workers = 0);

/// Fraction of rows with permutation[argmin] != truth; permutation maps model
/// index to truth label and must be a bijection.
double classification_error(const LossTable& table, std::span<const int> truth,
                            std::span<const int> permutation);

}  // namespace mixlds
