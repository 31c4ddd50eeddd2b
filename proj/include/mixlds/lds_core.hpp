#pragma once

// Linear dynamical system x_{t+1} = A x_t + w_t, w_t ~ (0, W): model type,
// stationary autocovariances and the inverse map back to (A, W).

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mixlds/error.hpp"

namespace mixlds {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct BasicLdsModel {
  MatrixX<Scalar> a;  // state transition
  MatrixX<Scalar> w;  // noise covariance

  Eigen::Index dim() const { return a.rows(); }
};

template <typename Scalar>
struct BasicAutocovariances {
  MatrixX<Scalar> gamma;  // E[x_t x_t^T]
  MatrixX<Scalar> y;      // E[x_{t+1} x_t^T]
};

using LdsModel = BasicLdsModel<double>;
using Autocovariances = BasicAutocovariances<double>;

struct SeparationReport {
  double d_gamma_y = 0.0;
  double d_aw = 0.0;
  // Per-coordinate versions, divided by sqrt(d).
  double d_gamma_y_canonical = 0.0;
  double d_aw_canonical = 0.0;
  double w_max = 0.0;
  double w_min = 0.0;
  double gamma_max = 0.0;
  double rho_hat = 0.0;
};

inline constexpr double kStabilityMargin = 1e-9;
inline constexpr int kMaxDoublings = 200;
inline constexpr double kMaxGammaCondition = 1e12;

template <typename Derived>
MatrixX<typename Derived::Scalar> symmetrized(const Eigen::MatrixBase<Derived>& x) {
  return (x + x.transpose()) / typename Derived::Scalar(2);
}

/// Largest eigenvalue modulus, from a dense general eigensolver.
template <typename Derived>
typename Derived::Scalar spectral_radius(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  if (a.rows() != a.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "spectral_radius needs a square matrix");
  }
  if (a.size() == 0) return Scalar(0);
  Eigen::EigenSolver<MatrixX<Scalar>> solver(a.eval(), /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCode::kNoConvergence, "eigenvalue iteration failed in spectral_radius");
  }
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

/// Largest singular value.
template <typename Derived>
typename Derived::Scalar spectral_norm(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  if (a.size() == 0) return Scalar(0);
  Eigen::JacobiSVD<MatrixX<Scalar>> svd(a.eval());
  return svd.singularValues()(0);
}

template <typename Derived>
VectorX<typename Derived::Scalar> symmetric_eigenvalues(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> solver(symmetrized(x), Eigen::EigenvaluesOnly);
  return solver.eigenvalues();
}

/// Throws unless A is square, W matches it, W is symmetric and positive definite.
template <typename Scalar>
void validate_model(const BasicLdsModel<Scalar>& model) {
  const auto d = model.a.rows();
  if (model.a.cols() != d || model.w.rows() != d || model.w.cols() != d) {
    throw Error(ErrorCode::kDimensionMismatch, "A and W must be square and of equal size");
  }
  const Scalar scale = model.w.cwiseAbs().maxCoeff();
  if ((model.w - model.w.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-10) * scale) {
    throw Error(ErrorCode::kInvalidArgument, "W is not symmetric");
  }
  if (d > 0 && !(symmetric_eigenvalues(model.w)(0) > Scalar(0))) {
    throw Error(ErrorCode::kInvalidArgument, "W is not positive definite");
  }
}

/// Solves Gamma = A Gamma A^T + W by doubling: (A, Gamma) <- (A^2, Gamma + A Gamma A^T).
/// Stops once the increment is below tol * ||Gamma||_F.
template <typename Scalar>
MatrixX<Scalar> stationary_covariance(const BasicLdsModel<Scalar>& model,
                                      Scalar tol = Scalar(1e-15),
                                      int max_doublings = kMaxDoublings) {
  if (!(tol > Scalar(0))) throw Error(ErrorCode::kInvalidArgument, "tol must be positive");
  if (model.a.rows() != model.a.cols() || model.w.rows() != model.a.rows() ||
      model.w.cols() != model.a.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "A and W must be square and of equal size");
  }
  const Scalar radius = spectral_radius(model.a);
  if (!(radius < Scalar(1) - Scalar(kStabilityMargin))) {
    throw Error(ErrorCode::kUnstableModel,
                "spectral radius " + std::to_string(static_cast<double>(radius)) + " >= 1");
  }

  MatrixX<Scalar> gamma = symmetrized(model.w);
  MatrixX<Scalar> power = model.a;
  for (int n = 0; n < max_doublings; ++n) {
    MatrixX<Scalar> increment = power * gamma * power.transpose();
    gamma += increment;
    const Scalar inc_norm = increment.norm();
    if (!std::isfinite(static_cast<double>(inc_norm))) break;
    if (inc_norm <= tol * gamma.norm()) return symmetrized(gamma);
    power = (power * power).eval();
  }
  throw Error(ErrorCode::kNoConvergence, "Lyapunov doubling exceeded the iteration cap");
}

template <typename Scalar, typename Derived>
MatrixX<Scalar> order1_autocovariance(const BasicLdsModel<Scalar>& model,
                                      const Eigen::MatrixBase<Derived>& gamma) {
  if (gamma.rows() != model.a.cols() || gamma.cols() != model.a.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "gamma does not match A");
  }
  return model.a * gamma;
}

template <typename Scalar>
BasicAutocovariances<Scalar> autocovariances(const BasicLdsModel<Scalar>& model) {
  MatrixX<Scalar> gamma = stationary_covariance(model);
  MatrixX<Scalar> y = order1_autocovariance(model, gamma);
  return {std::move(gamma), std::move(y)};
}

/// A = Y Gamma^{-1}, W = Gamma - A Gamma A^T.
template <typename DerivedG, typename DerivedY>
BasicLdsModel<typename DerivedG::Scalar> recover_model(const Eigen::MatrixBase<DerivedG>& gamma,
                                                       const Eigen::MatrixBase<DerivedY>& y) {
  using Scalar = typename DerivedG::Scalar;
  const auto d = gamma.rows();
  if (gamma.cols() != d || y.rows() != d || y.cols() != d) {
    throw Error(ErrorCode::kDimensionMismatch, "gamma and y must be square and of equal size");
  }
  const MatrixX<Scalar> g = symmetrized(gamma);
  const VectorX<Scalar> eig = symmetric_eigenvalues(g);
  const Scalar lo = eig(0);
  const Scalar hi = eig(d - 1);
  if (!(lo > Scalar(0)) || hi > Scalar(kMaxGammaCondition) * lo) {
    throw Error(ErrorCode::kSingularGamma, "gamma is singular or ill-conditioned");
  }
  // gamma symmetric: A^T = gamma^{-1} Y^T.
  Eigen::LDLT<MatrixX<Scalar>> ldlt(g);
  BasicLdsModel<Scalar> out;
  out.a = ldlt.solve(y.transpose()).transpose();
  out.w = symmetrized(g - out.a * g * out.a.transpose());
  const Scalar w_min = symmetric_eigenvalues(out.w)(0);
  if (w_min < -Scalar(1e-8) * hi) {
    throw Error(ErrorCode::kNonPsdResidual, "recovered W is not positive semidefinite");
  }
  return out;
}

template <typename Scalar>
SeparationReport separation_report(const std::vector<BasicLdsModel<Scalar>>& models) {
  if (models.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "separation needs at least two models");
  }
  const auto d = models.front().dim();
  std::vector<BasicAutocovariances<Scalar>> cov;
  cov.reserve(models.size());
  SeparationReport report;
  report.w_min = std::numeric_limits<double>::infinity();
  for (const auto& m : models) {
    if (m.dim() != d) throw Error(ErrorCode::kDimensionMismatch, "models differ in dimension");
    cov.push_back(autocovariances(m));
    const VectorX<Scalar> w_eig = symmetric_eigenvalues(m.w);
    report.w_max = std::max(report.w_max, static_cast<double>(w_eig(d - 1)));
    report.w_min = std::min(report.w_min, static_cast<double>(w_eig(0)));
    report.gamma_max =
        std::max(report.gamma_max, static_cast<double>(symmetric_eigenvalues(cov.back().gamma)(d - 1)));
    report.rho_hat = std::max(report.rho_hat, static_cast<double>(spectral_radius(m.a)));
  }

  report.d_gamma_y = std::numeric_limits<double>::infinity();
  report.d_aw = std::numeric_limits<double>::infinity();
  const double w_max_sq = report.w_max * report.w_max;
  for (std::size_t k = 0; k < models.size(); ++k) {
    for (std::size_t l = k + 1; l < models.size(); ++l) {
      const double gy = static_cast<double>((cov[k].gamma - cov[l].gamma).squaredNorm() +
                                            (cov[k].y - cov[l].y).squaredNorm());
      const double aw = static_cast<double>((models[k].a - models[l].a).squaredNorm()) +
                        static_cast<double>((models[k].w - models[l].w).squaredNorm()) / w_max_sq;
      report.d_gamma_y = std::min(report.d_gamma_y, std::sqrt(gy));
      report.d_aw = std::min(report.d_aw, std::sqrt(aw));
    }
  }
  const double root_d = std::sqrt(static_cast<double>(d));
  report.d_gamma_y_canonical = report.d_gamma_y / root_d;
  report.d_aw_canonical = report.d_aw / root_d;
  return report;
}

}  // namespace mixlds
