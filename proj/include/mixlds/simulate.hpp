#pragma once

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "mixlds/lds_core.hpp"
#include "mixlds/rng.hpp"

namespace mixlds {

/// States x_0..x_T stored as the columns of a d x (T+1) matrix.
struct Trajectory {
  Eigen::MatrixXd states;
  std::optional<int> label;  // 0-based model index, when known
  std::size_t index = 0;

  Eigen::Index dim() const { return states.rows(); }
  /// Number of transitions T (one less than the number of states).
  Eigen::Index length() const { return states.cols() - 1; }
};

enum class Subset { kSubspace, kClustering, kClassification };

enum class InitMode {
  kCase0,  // every trajectory starts at 0
  kCase1,  // trajectories are consecutive segments of one long trajectory
};

struct FixedLabels {
  std::vector<int> labels;  // one per trajectory, global order
};
struct UniformLabels {};
struct FractionLabels {
  std::vector<double> fractions;
};
using LabelMode = std::variant<UniformLabels, FixedLabels, FractionLabels>;

struct SubsetShape {
  std::size_t count = 0;
  Eigen::Index length = 0;  // T for every trajectory in the subset
};

struct MixtureSpec {
  std::vector<LdsModel> models;
  LabelMode label_mode = UniformLabels{};
  InitMode init_mode = InitMode::kCase0;
  SubsetShape subspace;
  SubsetShape clustering;
  SubsetShape classification;
  std::uint64_t seed = 0;

  std::size_t total_count() const { return subspace.count + clustering.count + classification.count; }
};

struct MixedDataset {
  std::vector<Trajectory> subspace_set;
  std::vector<Trajectory> clustering_set;
  std::vector<Trajectory> classification_set;
  MixtureSpec spec_echo;

  const std::vector<Trajectory>& subset(Subset s) const;
  std::vector<Trajectory>& subset(Subset s);
};

struct OrthogonalRotation {};
struct IdentityPerturbation {
  double delta = 0.0;
};
using ModelConstruction = std::variant<OrthogonalRotation, IdentityPerturbation>;

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the signs
/// of R's diagonal folded into Q.
Eigen::MatrixXd haar_orthogonal(Eigen::Index d, KeyedStream& stream);

/// Random ground-truth models.
///  OrthogonalRotation:   A_k = rho R_k,  W_k = U_k diag(U[1,2]) U_k^T, all factors independent.
///  IdentityPerturbation: A_k = rho_k R with shared R and rho_k evenly spaced over
///                        [rho - delta, rho + delta]; W_k = I.
std::vector<LdsModel> generate_paper_models(Eigen::Index d, int k, double rho,
                                            const ModelConstruction& construction,
                                            std::uint64_t seed);

/// Per-trajectory 0-based labels in global order (subspace, clustering, classification).
std::vector<int> assign_labels(const MixtureSpec& spec);

MixedDataset simulate_dataset(const MixtureSpec& spec, int workers = 0);

/// Time averages of x_t x_t^T and x_{t+1} x_t^T over t > burn_in.
Autocovariances empirical_autocov(const Trajectory& traj, Eigen::Index burn_in);

}  // namespace mixlds
