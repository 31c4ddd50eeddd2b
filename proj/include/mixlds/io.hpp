#pragma once

// File formats: JSON models and subspace banks, JSON Lines datasets, CSV
// trajectories and tables. Doubles are written in shortest round-trip form.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "mixlds/classification.hpp"
#include "mixlds/clustering.hpp"
#include "mixlds/estimation.hpp"
#include "mixlds/lds_core.hpp"
#include "mixlds/pipeline.hpp"
#include "mixlds/simulate.hpp"
#include "mixlds/subspace.hpp"

namespace mixlds::io {

using nlohmann::json;

std::string format_double(double x);

json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const json& j);

json model_to_json(const LdsModel& model);
LdsModel model_from_json(const json& j);
json models_to_json(std::span<const LdsModel> models);
std::vector<LdsModel> models_from_json(const json& j);

json estimate_to_json(const ModelEstimate& estimate);

json bank_to_json(const SubspaceBank& bank);
SubspaceBank bank_from_json(const json& j);

json report_to_json(const PipelineReport& report);

/// One line per trajectory:
/// {"index": m, "subset": "...", "label": 1-based int | null, "states": [[x_0], [x_1], ...]}.
void write_dataset_jsonl(std::ostream& out, const MixedDataset& dataset);
MixedDataset read_dataset_jsonl(std::istream& in);

/// One row per time step, d columns; a header row is skipped when has_header.
Trajectory read_trajectory_csv(const std::filesystem::path& path, bool has_header);
void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj);
/// Every *.csv file in the directory, in lexicographic filename order.
std::vector<Trajectory> read_trajectory_dir(const std::filesystem::path& dir, bool has_header);

void write_similarity_csv(std::ostream& out, const SimilarityMatrix& s);
/// Rows (m, n, median_gamma, median_y) for m < n.
void write_statistics_csv(std::ostream& out, const PairwiseStatistics& stats);
/// Rows (m, label) with 1-based labels.
void write_assignment_csv(std::ostream& out, std::span<const int> labels);
/// Rows (m, loss_1..loss_K, argmin) with 1-based argmin.
void write_loss_csv(std::ostream& out, const LossTable& table);
/// Header experiment,x,seed,metric,value; mean rows carry seed "mean".
void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows);

json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& j);

}  // namespace mixlds::io
