#include "mixlds/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace mixlds::io {

std::string format_double(double x) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, result.ptr);
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array()) throw Error(ErrorCode::kConfigParse, "matrix must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j.front().size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw Error(ErrorCode::kConfigParse, "matrix rows must have equal length");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

json model_to_json(const LdsModel& model) { return {{"a", matrix_to_json(model.a)}, {"w", matrix_to_json(model.w)}}; }

LdsModel model_from_json(const json& j) {
  if (!j.is_object() || !j.contains("a") || !j.contains("w")) {
    throw Error(ErrorCode::kConfigParse, "model needs \"a\" and \"w\"");
  }
  LdsModel m{matrix_from_json(j.at("a")), matrix_from_json(j.at("w"))};
  if (m.a.rows() != m.a.cols() || m.w.rows() != m.a.rows() || m.w.cols() != m.a.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "model matrices must be square and of equal size");
  }
  return m;
}

json models_to_json(std::span<const LdsModel> models) {
  json out = json::array();
  for (const auto& m : models) out.push_back(model_to_json(m));
  return out;
}

std::vector<LdsModel> models_from_json(const json& j) {
  const json& list = j.is_object() && j.contains("models") ? j.at("models") : j;
  if (!list.is_array()) throw Error(ErrorCode::kConfigParse, "expected an array of models");
  std::vector<LdsModel> out;
  for (const auto& m : list) out.push_back(model_from_json(m));
  return out;
}

json estimate_to_json(const ModelEstimate& estimate) {
  json j = model_to_json(estimate.model);
  j["min_eig"] = estimate.normal_matrix_min_eig;
  j["steps"] = estimate.steps_used;
  return j;
}

json bank_to_json(const SubspaceBank& bank) {
  json j;
  j["r"] = bank.r;
  j["d"] = bank.d;
  if (bank.full_basis) {
    j["full_basis"] = true;
    j["v"] = json::array();
    j["u"] = json::array();
    return j;
  }
  json v = json::array(), u = json::array();
  for (const auto& m : bank.v) v.push_back(matrix_to_json(m));
  for (const auto& m : bank.u) u.push_back(matrix_to_json(m));
  j["v"] = std::move(v);
  j["u"] = std::move(u);
  return j;
}

SubspaceBank bank_from_json(const json& j) {
  SubspaceBank bank;
  try {
    bank.r = j.at("r").get<int>();
    if (j.value("full_basis", false)) return SubspaceBank::identity(j.at("d").get<Eigen::Index>());
    for (const auto& m : j.at("v")) bank.v.push_back(matrix_from_json(m));
    for (const auto& m : j.at("u")) bank.u.push_back(matrix_from_json(m));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigParse, std::string("subspace bank: ") + e.what());
  }
  bank.d = static_cast<Eigen::Index>(bank.v.size());
  if (bank.u.size() != bank.v.size()) throw Error(ErrorCode::kDimensionMismatch, "v and u counts differ");
  return bank;
}

namespace {

json labels_one_based(std::span<const int> labels) {
  json out = json::array();
  for (int l : labels) out.push_back(l + 1);
  return out;
}

template <typename T>
json optional_number(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace

json report_to_json(const PipelineReport& report) {
  json j;
  j["k_hat"] = report.clusters.k_hat;
  j["tau"] = report.tau;
  j["subspace_rank"] = report.subspace_rank;
  j["refined"] = report.refined;
  j["cluster_labels"] = labels_one_based(report.clusters.labels);
  j["classified_labels"] = labels_one_based(report.classified);
  j["coarse_models"] = json::array();
  for (const auto& e : report.coarse_models) j["coarse_models"].push_back(estimate_to_json(e));
  j["models"] = json::array();
  for (const auto& e : report.models) j["models"].push_back(estimate_to_json(e));
  if (report.matching) {
    j["permutation"] = labels_one_based(report.matching->permutation);
    j["a_errors"] = report.matching->a_errors;
    j["w_errors"] = report.matching->w_errors;
    j["max_a_error"] = report.max_a_error();
    j["max_w_error"] = report.max_w_error();
  } else {
    j["permutation"] = nullptr;
  }
  j["clustering_error"] = optional_number(report.clustering_error);
  j["classification_error"] = optional_number(report.classification_error);
  return j;
}

namespace {

std::string_view subset_name(Subset s) {
  switch (s) {
    case Subset::kSubspace: return "subspace";
    case Subset::kClustering: return "clustering";
    case Subset::kClassification: return "classification";
  }
  return "clustering";
}

Subset parse_subset(const std::string& s) {
  if (s == "subspace") return Subset::kSubspace;
  if (s == "clustering") return Subset::kClustering;
  if (s == "classification") return Subset::kClassification;
  throw Error(ErrorCode::kConfigParse, "unknown subset \"" + s + "\"");
}

}  // namespace

void write_dataset_jsonl(std::ostream& out, const MixedDataset& dataset) {
  std::vector<std::pair<Subset, const Trajectory*>> all;
  for (Subset s : {Subset::kSubspace, Subset::kClustering, Subset::kClassification})
    for (const auto& t : dataset.subset(s)) all.emplace_back(s, &t);
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.second->index < b.second->index; });
  for (const auto& [subset, traj] : all) {
    json line;
    line["index"] = traj->index;
    line["subset"] = subset_name(subset);
    line["label"] = traj->label ? json(*traj->label + 1) : json(nullptr);
    json states = json::array();
    for (Eigen::Index t = 0; t < traj->states.cols(); ++t) {
      json x = json::array();
      for (Eigen::Index i = 0; i < traj->states.rows(); ++i) x.push_back(traj->states(i, t));
      states.push_back(std::move(x));
    }
    line["states"] = std::move(states);
    out << line.dump() << '\n';
  }
}

MixedDataset read_dataset_jsonl(std::istream& in) {
  MixedDataset dataset;
  std::string line;
  std::size_t line_no = 0;
  Eigen::Index d = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      Trajectory traj;
      traj.index = j.at("index").get<std::size_t>();
      if (!j.at("label").is_null()) traj.label = j.at("label").get<int>() - 1;
      traj.states = matrix_from_json(j.at("states")).transpose();
      if (traj.states.cols() < 2) throw Error(ErrorCode::kTooShort, "trajectory needs at least two states");
      if (d < 0) d = traj.states.rows();
      if (traj.states.rows() != d) throw Error(ErrorCode::kDimensionMismatch, "trajectories differ in dimension");
      dataset.subset(parse_subset(j.at("subset").get<std::string>())).push_back(std::move(traj));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kConfigParse, "dataset line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), "dataset line " + std::to_string(line_no) + ": " + e.message());
    }
  }
  return dataset;
}

Trajectory read_trajectory_csv(const std::filesystem::path& path, bool has_header) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  bool skip = has_header;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (skip) {
      skip = false;
      continue;
    }
    std::vector<double> values;
    std::stringstream fields(line);
    std::string field;
    while (std::getline(fields, field, ',')) {
      const auto first = field.find_first_not_of(" \t");
      const auto last = field.find_last_not_of(" \t");
      const std::string trimmed = first == std::string::npos ? "" : field.substr(first, last - first + 1);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(trimmed.data(), trimmed.data() + trimmed.size(), v);
      if (ec != std::errc() || ptr != trimmed.data() + trimmed.size() || trimmed.empty()) {
        throw Error(ErrorCode::kRaggedCsv, path.string() + ":" + std::to_string(line_no) + ": bad number \"" +
                                               trimmed + "\"");
      }
      values.push_back(v);
    }
    if (!rows.empty() && values.size() != rows.front().size()) {
      throw Error(ErrorCode::kRaggedCsv, path.string() + ":" + std::to_string(line_no) + ": expected " +
                                             std::to_string(rows.front().size()) + " fields");
    }
    rows.push_back(std::move(values));
  }
  if (rows.size() < 2) throw Error(ErrorCode::kTooShort, path.string() + " holds fewer than two time steps");
  Trajectory traj;
  traj.states.resize(static_cast<Eigen::Index>(rows.front().size()), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t i = 0; i < rows[t].size(); ++i) traj.states(i, t) = rows[t][i];
  return traj;
}

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  for (Eigen::Index t = 0; t < traj.states.cols(); ++t) {
    for (Eigen::Index i = 0; i < traj.states.rows(); ++i) {
      if (i) out << ',';
      out << format_double(traj.states(i, t));
    }
    out << '\n';
  }
}

std::vector<Trajectory> read_trajectory_dir(const std::filesystem::path& dir, bool has_header) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw Error(ErrorCode::kIoError, dir.string() + " is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  if (files.empty()) throw Error(ErrorCode::kEmptyInput, "no .csv trajectories in " + dir.string());
  std::sort(files.begin(), files.end());
  std::vector<Trajectory> out;
  for (std::size_t m = 0; m < files.size(); ++m) {
    Trajectory traj = read_trajectory_csv(files[m], has_header);
    traj.index = m;
    if (!out.empty() && traj.dim() != out.front().dim()) {
      throw Error(ErrorCode::kDimensionMismatch, files[m].string() + " differs in dimension");
    }
    out.push_back(std::move(traj));
  }
  return out;
}

void write_similarity_csv(std::ostream& out, const SimilarityMatrix& s) {
  for (Eigen::Index i = 0; i < s.s.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.s.cols(); ++j) {
      if (j) out << ',';
      out << s.s(i, j);
    }
    out << '\n';
  }
}

void write_statistics_csv(std::ostream& out, const PairwiseStatistics& stats) {
  out << "m,n,median_gamma,median_y\n";
  for (Eigen::Index m = 0; m < stats.size(); ++m)
    for (Eigen::Index n = m + 1; n < stats.size(); ++n)
      out << m << ',' << n << ',' << format_double(stats.median_gamma(m, n)) << ','
          << format_double(stats.median_y(m, n)) << '\n';
}

void write_assignment_csv(std::ostream& out, std::span<const int> labels) {
  out << "m,label\n";
  for (std::size_t m = 0; m < labels.size(); ++m) out << m << ',' << labels[m] + 1 << '\n';
}

void write_loss_csv(std::ostream& out, const LossTable& table) {
  out << 'm';
  for (Eigen::Index k = 0; k < table.losses.cols(); ++k) out << ",loss_" << k + 1;
  out << ",argmin\n";
  for (Eigen::Index m = 0; m < table.losses.rows(); ++m) {
    out << m;
    for (Eigen::Index k = 0; k < table.losses.cols(); ++k) out << ',' << format_double(table.losses(m, k));
    out << ',' << table.argmin[static_cast<std::size_t>(m)] + 1 << '\n';
  }
}

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows) {
  out << "experiment,x,seed,metric,value\n";
  for (const auto& r : rows) {
    out << r.experiment << ',' << format_double(r.x) << ',';
    if (r.seed) {
      out << *r.seed;
    } else {
      out << "mean";
    }
    out << ',' << r.metric << ',' << format_double(r.value) << '\n';
  }
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigParse, path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace mixlds::io
