#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dynrecon/geometry.hpp"
#include "dynrecon/simplex_coding.hpp"

namespace dynrecon {

/// Accuracy thresholds in the motion's native units (mm for mocap-style data).
inline constexpr std::array<double, 6> kAccuracyThresholds{10, 20, 30, 40, 50, 100};

struct EvalReport {
  Eigen::MatrixXd per_point_errors;   // P x F Euclidean errors
  std::vector<double> accuracy_at;    // aligned with kAccuracyThresholds
  double median_error = 0.0;
  double mean_error = 0.0;
  double top2_sum_mean = 0.0;
  double top2_neighbor_frequency = 0.0;
  int outer_iterations = 0;
  int admm_iterations = 0;
};

/// Errors, threshold accuracy (fraction strictly below each threshold) and
/// the two temporal-coefficient metrics. `truth_order[f]` is the true time
/// rank of global frame f. Interior frames score a neighbor hit when their
/// two largest weights sit exactly on the frames ranked just before and
/// after; boundary frames when their largest weight sits on their single
/// neighbor.
EvalReport Evaluate(const StructureMatrix& estimate, const StructureMatrix& truth,
                    const CoefficientMatrix& w, const std::vector<int>& truth_order);

/// Fraction of `errors` strictly below each threshold.
std::vector<double> AccuracyAt(const std::vector<double>& errors);

/// One row of an accuracy table.
struct TableRow {
  std::string label;
  std::vector<double> accuracy;  // aligned with kAccuracyThresholds
};

/// CSV with header `<axis>,10,20,30,40,50,100` and one line per row.
std::string FormatTable(const std::string& axis, const std::vector<TableRow>& rows);

/// Per-point errors of several scenes sharing a sweep-axis value, pooled
/// into one accuracy row.
struct LabeledErrors {
  std::string axis;       // "frame_rate", "noise_sigma" or "miss_rate"
  double axis_value = 0.0;
  std::string scene_id;
  std::vector<double> errors;
};

/// Writes `<dir>/<axis>.csv` (pooled per axis value, ascending) and
/// `<dir>/<axis>_per_scene.csv` for every axis present. Returns the paths.
std::vector<std::string> EmitTables(const std::vector<LabeledErrors>& reports,
                                    const std::string& directory);

}  // namespace dynrecon
