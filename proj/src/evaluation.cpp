#include "dynrecon/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace dynrecon {

namespace {

std::string FormatNumber(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

std::vector<double> AccuracyAt(const std::vector<double>& errors) {
  std::vector<double> acc;
  for (double threshold : kAccuracyThresholds) {
    const auto below = std::count_if(errors.begin(), errors.end(),
                                     [&](double e) { return e < threshold; });
    acc.push_back(errors.empty() ? 0.0
                                 : static_cast<double>(below) / errors.size());
  }
  return acc;
}

EvalReport Evaluate(const StructureMatrix& estimate, const StructureMatrix& truth,
                    const CoefficientMatrix& w, const std::vector<int>& truth_order) {
  const int points = truth.point_count();
  const int n = truth.frame_count();
  DYNRECON_CHECK(estimate.point_count() == points && estimate.frame_count() == n,
                 ErrorCategory::kInput, "estimate/truth dimension mismatch");
  DYNRECON_CHECK(w.weights.rows() == n && w.weights.cols() == n &&
                     static_cast<int>(truth_order.size()) == n,
                 ErrorCategory::kInput, "weights/order dimension mismatch");

  EvalReport report;
  report.per_point_errors.resize(points, n);
  std::vector<double> errors;
  errors.reserve(static_cast<std::size_t>(points) * n);
  for (int f = 0; f < n; ++f) {
    for (int p = 0; p < points; ++p) {
      const double e = (estimate.point(p, f) - truth.point(p, f)).norm();
      report.per_point_errors(p, f) = e;
      errors.push_back(e);
    }
  }
  report.accuracy_at = AccuracyAt(errors);
  if (!errors.empty()) {
    std::vector<double> sorted = errors;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t mid = sorted.size() / 2;
    report.median_error = sorted.size() % 2 == 1
                              ? sorted[mid]
                              : 0.5 * (sorted[mid - 1] + sorted[mid]);
    double sum = 0.0;
    for (double e : errors) sum += e;
    report.mean_error = sum / errors.size();
  }

  std::vector<int> frame_at_rank(n, -1);
  for (int f = 0; f < n; ++f) {
    DYNRECON_CHECK(truth_order[f] >= 0 && truth_order[f] < n &&
                       frame_at_rank[truth_order[f]] < 0,
                   ErrorCategory::kInput, "truth order is not a permutation");
    frame_at_rank[truth_order[f]] = f;
  }
  if (n >= 2) {
    double top2_sum = 0.0;
    int hits = 0;
    for (int f = 0; f < n; ++f) {
      std::vector<int> idx(n);
      for (int j = 0; j < n; ++j) idx[j] = j;
      std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return w.weights(a, f) > w.weights(b, f);
      });
      top2_sum += w.weights(idx[0], f) + w.weights(idx[1], f);
      const int rank = truth_order[f];
      if (rank == 0 || rank == n - 1) {
        const int neighbor = frame_at_rank[rank == 0 ? 1 : n - 2];
        hits += idx[0] == neighbor;
      } else {
        const int prev = frame_at_rank[rank - 1];
        const int next = frame_at_rank[rank + 1];
        hits += (idx[0] == prev && idx[1] == next) || (idx[0] == next && idx[1] == prev);
      }
    }
    report.top2_sum_mean = top2_sum / n;
    report.top2_neighbor_frequency = static_cast<double>(hits) / n;
  }
  return report;
}

std::string FormatTable(const std::string& axis, const std::vector<TableRow>& rows) {
  std::ostringstream out;
  out << axis;
  for (double t : kAccuracyThresholds) out << ',' << FormatNumber(t);
  out << '\n';
  for (const TableRow& row : rows) {
    out << row.label;
    for (double a : row.accuracy) out << ',' << FormatNumber(a);
    out << '\n';
  }
  return out.str();
}

std::vector<std::string> EmitTables(const std::vector<LabeledErrors>& reports,
                                    const std::string& directory) {
  std::vector<std::string> axes;
  for (const LabeledErrors& r : reports) {
    if (std::find(axes.begin(), axes.end(), r.axis) == axes.end()) axes.push_back(r.axis);
  }
  std::sort(axes.begin(), axes.end());
  std::filesystem::create_directories(directory);

  std::vector<std::string> written;
  auto write = [&](const std::string& name, const std::string& text) {
    const std::string path = (std::filesystem::path(directory) / name).string();
    std::ofstream out(path, std::ios::binary);
    DYNRECON_CHECK(static_cast<bool>(out), ErrorCategory::kIo, "cannot write " + path);
    out << text;
    written.push_back(path);
  };

  for (const std::string& axis : axes) {
    std::vector<const LabeledErrors*> members;
    for (const LabeledErrors& r : reports) {
      if (r.axis == axis) members.push_back(&r);
    }
    std::stable_sort(members.begin(), members.end(), [](const auto* a, const auto* b) {
      return a->axis_value != b->axis_value ? a->axis_value < b->axis_value
                                            : a->scene_id < b->scene_id;
    });

    std::vector<TableRow> pooled;
    std::vector<TableRow> per_scene;
    for (std::size_t i = 0; i < members.size();) {
      std::vector<double> errors;
      std::size_t j = i;
      for (; j < members.size() && members[j]->axis_value == members[i]->axis_value; ++j) {
        errors.insert(errors.end(), members[j]->errors.begin(), members[j]->errors.end());
        per_scene.push_back(
            TableRow{FormatNumber(members[j]->axis_value) + "," + members[j]->scene_id,
                     AccuracyAt(members[j]->errors)});
      }
      pooled.push_back(TableRow{FormatNumber(members[i]->axis_value), AccuracyAt(errors)});
      i = j;
    }
    write(axis + ".csv", FormatTable(axis, pooled));
    write(axis + "_per_scene.csv", FormatTable(axis + ",scene", per_scene));
  }
  return written;
}

}  // namespace dynrecon
