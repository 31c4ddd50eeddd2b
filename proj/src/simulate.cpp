#include "mixlds/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mixlds/parallel.hpp"

namespace mixlds {

const std::vector<Trajectory>& MixedDataset::subset(Subset s) const {
  switch (s) {
    case Subset::kSubspace: return subspace_set;
    case Subset::kClustering: return clustering_set;
    case Subset::kClassification: return classification_set;
  }
  return subspace_set;
}

std::vector<Trajectory>& MixedDataset::subset(Subset s) {
  return const_cast<std::vector<Trajectory>&>(std::as_const(*this).subset(s));
}

Eigen::MatrixXd haar_orthogonal(Eigen::Index d, KeyedStream& stream) {
  const Eigen::MatrixXd gaussian = stream.normal_matrix(d, d);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
  const auto& r = qr.matrixQR();
  for (Eigen::Index j = 0; j < d; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

std::vector<LdsModel> generate_paper_models(Eigen::Index d, int k, double rho,
                                            const ModelConstruction& construction,
                                            std::uint64_t seed) {
  if (d < 1 || k < 1) throw Error(ErrorCode::kInvalidArgument, "need d >= 1 and k >= 1");
  if (!(rho >= 0.0 && rho < 1.0)) throw Error(ErrorCode::kInvalidRho, "rho must lie in [0, 1)");

  std::vector<LdsModel> models;
  models.reserve(k);
  if (std::holds_alternative<OrthogonalRotation>(construction)) {
    for (int m = 0; m < k; ++m) {
      KeyedStream rotation = make_stream(seed, Stream::kModels, m, 0);
      KeyedStream basis = make_stream(seed, Stream::kModels, m, 1);
      KeyedStream spectrum = make_stream(seed, Stream::kModels, m, 2);
      LdsModel model;
      model.a = rho * haar_orthogonal(d, rotation);
      const Eigen::MatrixXd u = haar_orthogonal(d, basis);
      Eigen::VectorXd lambda(d);
      for (Eigen::Index i = 0; i < d; ++i) lambda(i) = spectrum.uniform(1.0, 2.0);
      model.w = symmetrized(u * lambda.asDiagonal() * u.transpose());
      models.push_back(std::move(model));
    }
    return models;
  }

  const double delta = std::get<IdentityPerturbation>(construction).delta;
  KeyedStream rotation = make_stream(seed, Stream::kModels, 0, 0);
  const Eigen::MatrixXd r = haar_orthogonal(d, rotation);
  for (int m = 0; m < k; ++m) {
    const double scale = k == 1 ? rho : rho - delta + 2.0 * delta * m / (k - 1);
    if (!(std::abs(scale) < 1.0)) {
      throw Error(ErrorCode::kInvalidRho, "rho +/- delta leaves the unit interval");
    }
    models.push_back({scale * r, Eigen::MatrixXd::Identity(d, d)});
  }
  return models;
}

namespace {

void check_spec(const MixtureSpec& spec) {
  if (spec.models.empty()) throw Error(ErrorCode::kEmptyInput, "mixture has no models");
  const auto d = spec.models.front().dim();
  for (const auto& m : spec.models) {
    if (m.dim() != d) throw Error(ErrorCode::kDimensionMismatch, "models differ in dimension");
    validate_model(m);
    if (!(spectral_radius(m.a) < 1.0 - kStabilityMargin)) {
      throw Error(ErrorCode::kUnstableModel, "mixture contains an unstable model");
    }
  }
  for (const SubsetShape* s : {&spec.subspace, &spec.clustering, &spec.classification}) {
    if (s->count > 0 && s->length < 1) {
      throw Error(ErrorCode::kTooShort, "trajectory length must be at least 1");
    }
  }
}

// Largest-remainder allocation of n items over the fractions.
std::vector<std::size_t> allocate(const std::vector<double>& fractions, std::size_t n) {
  const std::size_t k = fractions.size();
  std::vector<std::size_t> counts(k);
  std::vector<double> remainder(k);
  std::size_t used = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double exact = fractions[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    remainder[i] = exact - static_cast<double>(counts[i]);
    used += counts[i];
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t j = 0; used < n; ++j, ++used) ++counts[order[j % k]];
  return counts;
}

}  // namespace

std::vector<int> assign_labels(const MixtureSpec& spec) {
  const std::size_t total = spec.total_count();
  const int k = static_cast<int>(spec.models.size());
  std::vector<int> labels(total);

  if (const auto* fixed = std::get_if<FixedLabels>(&spec.label_mode)) {
    if (fixed->labels.size() != total) {
      throw Error(ErrorCode::kSizeMismatch, "fixed label list does not cover every trajectory");
    }
    for (int l : fixed->labels) {
      if (l < 0 || l >= k) throw Error(ErrorCode::kInvalidArgument, "label out of range");
    }
    return fixed->labels;
  }

  if (std::holds_alternative<UniformLabels>(spec.label_mode)) {
    for (std::size_t m = 0; m < total; ++m) {
      labels[m] = static_cast<int>(make_stream(spec.seed, Stream::kLabels, m).below(k));
    }
    return labels;
  }

  const auto& fractions = std::get<FractionLabels>(spec.label_mode).fractions;
  if (fractions.size() != static_cast<std::size_t>(k)) {
    throw Error(ErrorCode::kSizeMismatch, "one fraction per model required");
  }
  double sum = 0.0;
  for (double p : fractions) {
    if (!(p >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "fractions must be nonnegative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::kInvalidArgument, "fractions must sum to 1");

  std::size_t offset = 0;
  std::uint64_t subset_id = 0;
  for (const SubsetShape* s : {&spec.subspace, &spec.clustering, &spec.classification}) {
    const auto counts = allocate(fractions, s->count);
    std::size_t pos = offset;
    for (int l = 0; l < k; ++l)
      for (std::size_t c = 0; c < counts[l]; ++c) labels[pos++] = l;
    // Fisher-Yates on counter-based draws.
    KeyedStream shuffle = make_stream(spec.seed, Stream::kShuffle, subset_id++);
    for (std::size_t i = s->count; i > 1; --i) {
      const std::size_t j = shuffle.below(i);
      std::swap(labels[offset + i - 1], labels[offset + j]);
    }
    offset += s->count;
  }
  return labels;
}

MixedDataset simulate_dataset(const MixtureSpec& spec, int workers) {
  check_spec(spec);
  const auto d = spec.models.front().dim();
  const std::vector<int> labels = assign_labels(spec);

  std::vector<Eigen::MatrixXd> noise_factor;
  noise_factor.reserve(spec.models.size());
  for (const auto& m : spec.models) noise_factor.push_back(Eigen::LLT<Eigen::MatrixXd>(m.w).matrixL());

  struct Slot {
    Subset subset;
    Eigen::Index length;
  };
  std::vector<Slot> slots;
  slots.reserve(labels.size());
  for (std::size_t i = 0; i < spec.subspace.count; ++i) slots.push_back({Subset::kSubspace, spec.subspace.length});
  for (std::size_t i = 0; i < spec.clustering.count; ++i)
    slots.push_back({Subset::kClustering, spec.clustering.length});
  for (std::size_t i = 0; i < spec.classification.count; ++i)
    slots.push_back({Subset::kClassification, spec.classification.length});

  std::vector<Trajectory> all(slots.size());
  auto run = [&](std::size_t m, const Eigen::VectorXd& start) {
    const int label = labels[m];
    const auto& a = spec.models[label].a;
    const auto& factor = noise_factor[label];
    Trajectory traj;
    traj.index = m;
    traj.label = label;
    traj.states.resize(d, slots[m].length + 1);
    traj.states.col(0) = start;
    for (Eigen::Index t = 0; t < slots[m].length; ++t) {
      KeyedStream noise = make_stream(spec.seed, Stream::kNoise, m, static_cast<std::uint64_t>(t));
      traj.states.col(t + 1) = a * traj.states.col(t) + factor * noise.normal_vector(d);
    }
    all[m] = std::move(traj);
  };

  if (spec.init_mode == InitMode::kCase0) {
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(d);
    parallel_for(all.size(), workers, [&](std::size_t m) { run(m, zero); });
  } else {
    Eigen::VectorXd start = Eigen::VectorXd::Zero(d);
    for (std::size_t m = 0; m < all.size(); ++m) {
      run(m, start);
      start = all[m].states.col(all[m].states.cols() - 1);
    }
  }

  MixedDataset out;
  out.spec_echo = spec;
  for (std::size_t m = 0; m < all.size(); ++m) out.subset(slots[m].subset).push_back(std::move(all[m]));
  return out;
}

Autocovariances empirical_autocov(const Trajectory& traj, Eigen::Index burn_in) {
  const Eigen::Index states = traj.states.cols();
  if (burn_in < 0 || states <= burn_in + 2) {
    throw Error(ErrorCode::kTooShort, "trajectory shorter than burn_in + 2");
  }
  const Eigen::Index d = traj.dim();
  const std::size_t first = static_cast<std::size_t>(burn_in) + 1;
  const std::size_t count = static_cast<std::size_t>(states - 1) - first;
  const auto& x = traj.states;

  struct Moments {
    Eigen::MatrixXd gamma, y;
    Moments& operator+=(const Moments& o) {
      gamma += o.gamma;
      y += o.y;
      return *this;
    }
  };
  Moments sum = blocked_reduce(count, 1, [&](std::size_t, std::size_t lo, std::size_t hi) {
    Moments part{Eigen::MatrixXd::Zero(d, d), Eigen::MatrixXd::Zero(d, d)};
    for (std::size_t i = lo; i < hi; ++i) {
      const auto t = static_cast<Eigen::Index>(first + i);
      part.gamma.noalias() += x.col(t) * x.col(t).transpose();
      part.y.noalias() += x.col(t + 1) * x.col(t).transpose();
    }
    return part;
  });
  const double n = static_cast<double>(count);
  return {symmetrized(sum.gamma / n), sum.y / n};
}

}  // namespace mixlds
