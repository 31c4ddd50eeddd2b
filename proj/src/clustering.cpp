#include "mixlds/clustering.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "mixlds/parallel.hpp"
#include "mixlds/rng.hpp"

namespace mixlds {

double lower_median(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorCode::kEmptyInput, "median of nothing");
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>((values.size() - 1) / 2);
  std::nth_element(values.begin(), mid, values.end());
  return *mid;
}

namespace {

// Projected segment moments of one trajectory: for copy g, row i of gamma[g][j]
// is (V_i^T h_{i,g,j})^T and row i of y[g][j] is (U_i^T g_{i,g,j})^T.
struct Features {
  std::vector<std::array<Eigen::MatrixXd, 2>> gamma;
  std::vector<std::array<Eigen::MatrixXd, 2>> y;
};

Eigen::MatrixXd project_rows(const Eigen::MatrixXd& moments, const std::vector<Eigen::MatrixXd>& basis) {
  const Eigen::Index d = moments.rows();
  const Eigen::Index r = basis.front().cols();
  Eigen::MatrixXd out(d, r);
  for (Eigen::Index i = 0; i < d; ++i) out.row(i) = moments.row(i) * basis[i];
  return out;
}

Features features(const Eigen::MatrixXd& states, const SegmentPlan& plan, const SubspaceBank& bank) {
  Features f;
  f.gamma.resize(plan.omega.size());
  f.y.resize(plan.omega.size());
  for (std::size_t g = 0; g < plan.omega.size(); ++g) {
    const IndexRange ranges[2] = {plan.omega[g].first, plan.omega[g].second};
    for (int j = 0; j < 2; ++j) {
      auto [h, lag] = segment_moment_matrices(states, ranges[j]);
      if (bank.full_basis) {
        f.gamma[g][j] = std::move(h);
        f.y[g][j] = std::move(lag);
      } else {
        f.gamma[g][j] = project_rows(h, bank.v);
        f.y[g][j] = project_rows(lag, bank.u);
      }
    }
  }
  return f;
}

PairStatistic compare(const Features& fm, const Features& fn) {
  PairStatistic out;
  const std::size_t copies = fm.gamma.size();
  std::vector<double> gam(copies), lag(copies);
  out.per_copy.resize(copies);
  for (std::size_t g = 0; g < copies; ++g) {
    gam[g] = ((fm.gamma[g][0] - fn.gamma[g][0]).cwiseProduct(fm.gamma[g][1] - fn.gamma[g][1])).sum();
    lag[g] = ((fm.y[g][0] - fn.y[g][0]).cwiseProduct(fm.y[g][1] - fn.y[g][1])).sum();
    out.per_copy[g] = {gam[g], lag[g]};
  }
  out.median_gamma = lower_median(std::move(gam));
  out.median_y = lower_median(std::move(lag));
  return out;
}

void check_bank(const SubspaceBank& bank, Eigen::Index d) {
  if (bank.d != d) throw Error(ErrorCode::kDimensionMismatch, "subspace bank dimension differs from data");
  if (!bank.full_basis &&
      (static_cast<Eigen::Index>(bank.v.size()) != d || static_cast<Eigen::Index>(bank.u.size()) != d)) {
    throw Error(ErrorCode::kDimensionMismatch, "subspace bank does not hold d subspaces");
  }
}

}  // namespace

PairStatistic pair_statistic(const Trajectory& traj_m, const Trajectory& traj_n,
                             const SubspaceBank& bank, int copies) {
  if (traj_m.dim() != traj_n.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "trajectories differ in dimension");
  }
  check_bank(bank, traj_m.dim());
  const SegmentPlan plan = make_segment_plan(std::min(traj_m.length(), traj_n.length()), copies);
  return compare(features(traj_m.states, plan, bank), features(traj_n.states, plan, bank));
}

PairwiseStatistics pairwise_statistics(std::span<const Trajectory> trajectories,
                                       const SubspaceBank& bank, int copies, int workers) {
  const std::size_t count = trajectories.size();
  if (count < 2) throw Error(ErrorCode::kEmptyInput, "need at least two trajectories to compare");
  const Eigen::Index d = trajectories.front().dim();
  bool equal_lengths = true;
  for (const auto& t : trajectories) {
    if (t.dim() != d) throw Error(ErrorCode::kDimensionMismatch, "trajectories differ in dimension");
    equal_lengths = equal_lengths && t.length() == trajectories.front().length();
  }
  check_bank(bank, d);

  PairwiseStatistics out;
  out.copies = copies;
  out.median_gamma = Eigen::MatrixXd::Zero(count, count);
  out.median_y = Eigen::MatrixXd::Zero(count, count);

  std::vector<Features> cache;
  if (equal_lengths) {
    const SegmentPlan plan = make_segment_plan(trajectories.front().length(), copies);
    cache.resize(count);
    parallel_for(count, workers, [&](std::size_t m) { cache[m] = features(trajectories[m].states, plan, bank); });
  }

  // Row m owns the entries (m, n > m); the lower triangle is mirrored afterwards.
  parallel_for(count, workers, [&](std::size_t m) {
    for (std::size_t n = m + 1; n < count; ++n) {
      const PairStatistic stat = equal_lengths ? compare(cache[m], cache[n])
                                               : pair_statistic(trajectories[m], trajectories[n], bank, copies);
      out.median_gamma(m, n) = stat.median_gamma;
      out.median_y(m, n) = stat.median_y;
    }
  });
  out.median_gamma.triangularView<Eigen::StrictlyLower>() = out.median_gamma.transpose();
  out.median_y.triangularView<Eigen::StrictlyLower>() = out.median_y.transpose();
  return out;
}

SimilarityMatrix threshold_statistics(const PairwiseStatistics& stats, double tau) {
  if (!std::isfinite(tau)) throw Error(ErrorCode::kInvalidArgument, "threshold must be finite");
  SimilarityMatrix out;
  out.tau = tau;
  out.copies = stats.copies;
  const Eigen::MatrixXd total = stats.total();
  out.s = (total.array() <= tau).cast<int>().matrix();
  out.s.diagonal().setOnes();
  return out;
}

SimilarityMatrix similarity_matrix(std::span<const Trajectory> trajectories, const SubspaceBank& bank,
                                   double tau, int copies, int workers) {
  if (!std::isfinite(tau)) throw Error(ErrorCode::kInvalidArgument, "threshold must be finite");
  return threshold_statistics(pairwise_statistics(trajectories, bank, copies, workers), tau);
}

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  // Keeps the smaller index as root.
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
};

std::vector<int> canonical_labels(const std::vector<int>& raw) {
  std::vector<int> remap;
  std::vector<int> out(raw.size());
  int next = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const int l = raw[i];
    if (l >= static_cast<int>(remap.size())) remap.resize(l + 1, -1);
    if (remap[l] < 0) remap[l] = next++;
    out[i] = remap[l];
  }
  return out;
}

}  // namespace

ClusterAssignment connected_components(const Eigen::MatrixXi& s) {
  const auto n = static_cast<std::size_t>(s.rows());
  DisjointSets sets(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (s(i, j) != 0 || s(j, i) != 0) sets.unite(i, j);
  std::vector<int> raw(n);
  for (std::size_t i = 0; i < n; ++i) raw[i] = static_cast<int>(sets.find(i));
  ClusterAssignment out;
  out.labels = canonical_labels(raw);
  out.k_hat = n == 0 ? 0 : *std::max_element(out.labels.begin(), out.labels.end()) + 1;
  return out;
}

std::vector<int> kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int restarts,
                        int max_iterations) {
  const Eigen::Index n = points.rows();
  if (k < 1 || k > n) throw Error(ErrorCode::kInvalidK, "k must lie in [1, number of points]");

  std::vector<int> best;
  double best_inertia = std::numeric_limits<double>::infinity();
  for (int restart = 0; restart < restarts; ++restart) {
    KeyedStream rng = make_stream(seed, Stream::kKMeans, static_cast<std::uint64_t>(restart));

    // k-means++ seeding.
    Eigen::MatrixXd centers(k, points.cols());
    centers.row(0) = points.row(static_cast<Eigen::Index>(rng.below(n)));
    Eigen::VectorXd dist2 = (points.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
      const double total = dist2.sum();
      Eigen::Index pick = 0;
      if (total > 0.0) {
        double target = rng.uniform() * total;
        for (pick = 0; pick < n - 1; ++pick) {
          target -= dist2(pick);
          if (target <= 0.0) break;
        }
      } else {
        pick = static_cast<Eigen::Index>(rng.below(n));
      }
      centers.row(c) = points.row(pick);
      dist2 = dist2.cwiseMin((points.rowwise() - centers.row(c)).rowwise().squaredNorm());
    }

    std::vector<int> labels(n, -1);
    double inertia = 0.0;
    for (int iter = 0; iter < max_iterations; ++iter) {
      bool changed = false;
      inertia = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index nearest = 0;
        const double best_d = (centers.rowwise() - points.row(i)).rowwise().squaredNorm().minCoeff(&nearest);
        inertia += best_d;
        if (labels[i] != static_cast<int>(nearest)) {
          labels[i] = static_cast<int>(nearest);
          changed = true;
        }
      }
      // Recompute centers; an empty cluster takes the point farthest from its center.
      Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
      std::vector<int> sizes(k, 0);
      for (Eigen::Index i = 0; i < n; ++i) {
        sums.row(labels[i]) += points.row(i);
        ++sizes[labels[i]];
      }
      for (int c = 0; c < k; ++c) {
        if (sizes[c] > 0) {
          centers.row(c) = sums.row(c) / sizes[c];
          continue;
        }
        Eigen::Index far = 0;
        double far_d = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (sizes[labels[i]] <= 1) continue;
          const double dd = (points.row(i) - centers.row(labels[i])).squaredNorm();
          if (dd > far_d) {
            far_d = dd;
            far = i;
          }
        }
        --sizes[labels[far]];
        labels[far] = c;
        sizes[c] = 1;
        centers.row(c) = points.row(far);
        changed = true;
      }
      if (!changed) break;
    }
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best = labels;
    }
  }
  return canonical_labels(best);
}

namespace {

std::uint64_t matrix_hash(const Eigen::MatrixXi& s) {
  std::uint64_t h = hash_key(static_cast<std::uint64_t>(s.rows()));
  for (Eigen::Index j = 0; j < s.cols(); ++j)
    for (Eigen::Index i = 0; i < s.rows(); ++i) h = hash_combine(h, static_cast<std::uint64_t>(s(i, j)));
  return h;
}

}  // namespace

ClusterAssignment partition(const SimilarityMatrix& similarity, int k, std::uint64_t salt) {
  const Eigen::MatrixXi& s = similarity.s;
  const Eigen::Index n = s.rows();
  if (s.cols() != n) throw Error(ErrorCode::kDimensionMismatch, "similarity matrix must be square");
  if (k < 1 || k > n) throw Error(ErrorCode::kInvalidK, "k must lie in [1, number of trajectories]");

  ClusterAssignment components = connected_components(s);
  if (components.k_hat == k) return components;

  Eigen::MatrixXd affinity = s.cast<double>();
  affinity.diagonal().setOnes();
  const Eigen::VectorXd degree = affinity.rowwise().sum();
  const Eigen::VectorXd inv_sqrt = degree.cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd normalized = inv_sqrt.asDiagonal() * affinity * inv_sqrt.asDiagonal();
  Eigen::MatrixXd embedding = top_eigenspace(symmetrized(normalized), k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = embedding.row(i).norm();
    if (norm > 0.0) embedding.row(i) /= norm;
  }

  ClusterAssignment out;
  out.labels = kmeans(embedding, k, hash_combine(matrix_hash(s), salt));
  out.k_hat = k;
  return out;
}

std::vector<double> default_threshold_grid(const PairwiseStatistics& stats, int points) {
  if (points < 1) throw Error(ErrorCode::kEmptyGrid, "grid needs at least one point");
  const double hi = stats.size() > 0 ? std::max(stats.total().maxCoeff(), 0.0) : 0.0;
  std::vector<double> grid(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) grid[i] = points == 1 ? hi : hi * i / (points - 1);
  return grid;
}

ThresholdChoice auto_threshold(const PairwiseStatistics& stats, std::vector<double> grid) {
  if (grid.empty()) throw Error(ErrorCode::kEmptyGrid, "threshold grid is empty");
  std::sort(grid.begin(), grid.end());
  const Eigen::Index n = stats.size();
  const Eigen::MatrixXd total = stats.total();

  // Sort edges once; components for increasing tau by incremental union.
  struct Edge {
    double weight;
    std::size_t a, b;
  };
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      edges.push_back({total(i, j), static_cast<std::size_t>(i), static_cast<std::size_t>(j)});
  std::stable_sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) { return x.weight < y.weight; });

  ThresholdChoice out;
  out.grid = grid;
  out.component_counts.resize(grid.size());
  DisjointSets sets(static_cast<std::size_t>(n));
  int components = static_cast<int>(n);
  std::size_t next = 0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    while (next < edges.size() && edges[next].weight <= grid[g]) {
      if (sets.unite(edges[next].a, edges[next].b)) --components;
      ++next;
    }
    out.component_counts[g] = components;
  }

  std::size_t best_begin = 0, best_len = 0;
  for (std::size_t begin = 0; begin < grid.size();) {
    std::size_t end = begin;
    while (end < grid.size() && out.component_counts[end] == out.component_counts[begin]) ++end;
    const std::size_t len = end - begin;
    if (len > best_len ||
        (len == best_len && out.component_counts[begin] < out.component_counts[best_begin])) {
      best_begin = begin;
      best_len = len;
    }
    begin = end;
  }
  const std::size_t chosen = best_begin + (best_len - 1) / 2;
  out.tau = grid[chosen];
  out.k_hat = out.component_counts[chosen];
  return out;
}

ThresholdChoice auto_threshold(std::span<const Trajectory> trajectories, const SubspaceBank& bank,
                               int copies, std::vector<double> grid, int workers) {
  if (grid.empty()) throw Error(ErrorCode::kEmptyGrid, "threshold grid is empty");
  return auto_threshold(pairwise_statistics(trajectories, bank, copies, workers), std::move(grid));
}

std::vector<int> best_label_matching(std::span<const int> assignment, std::span<const int> truth) {
  if (assignment.size() != truth.size()) throw Error(ErrorCode::kSizeMismatch, "label vectors differ in length");
  if (assignment.empty()) return {};
  const int k_hat = *std::max_element(assignment.begin(), assignment.end()) + 1;
  const int k = *std::max_element(truth.begin(), truth.end()) + 1;
  const int n = std::max(k_hat, k);
  if (n > 10) throw Error(ErrorCode::kTooManyClusters, "brute-force matching supports at most 10 labels");
  if (*std::min_element(assignment.begin(), assignment.end()) < 0 ||
      *std::min_element(truth.begin(), truth.end()) < 0) {
    throw Error(ErrorCode::kInvalidArgument, "labels must be nonnegative");
  }

  Eigen::MatrixXi confusion = Eigen::MatrixXi::Zero(n, n);
  for (std::size_t i = 0; i < assignment.size(); ++i) ++confusion(assignment[i], truth[i]);

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  int best_hits = -1;
  do {
    int hits = 0;
    for (int a = 0; a < n; ++a) hits += confusion(a, perm[a]);
    if (hits > best_hits) {
      best_hits = hits;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  best.resize(k_hat);
  return best;
}

double clustering_error(std::span<const int> assignment, std::span<const int> truth) {
  if (assignment.empty() && truth.empty()) return 0.0;
  const std::vector<int> perm = best_label_matching(assignment, truth);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < assignment.size(); ++i) wrong += perm[assignment[i]] != truth[i];
  return static_cast<double>(wrong) / static_cast<double>(assignment.size());
}

}  // namespace mixlds
