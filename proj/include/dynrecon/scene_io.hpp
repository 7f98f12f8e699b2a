#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "dynrecon/evaluation.hpp"
#include "dynrecon/geometry.hpp"
#include "dynrecon/recon_solver.hpp"
#include "dynrecon/reconstructability.hpp"
#include "dynrecon/synth_bench.hpp"

namespace dynrecon::io {

using Json = nlohmann::json;

// Scene file
// {
//   "format": "dynrecon-scene", "points": P, "frames": F,
//   "cameras": [ { "global_index": f, "video_id": n, "frame_in_video": m,
//                  "R": [9, row-major], "C": [3], "K": [9, row-major] } ],
//   "observations": [ P arrays of F entries, each [x, y] or null ]
// }
struct Scene {
  std::vector<CameraFrame> frames;
  ObservationSet observations;
};

Json SceneToJson(const Scene& scene);
Scene SceneFromJson(const Json& j);

// Ground-truth file
// { "format": "dynrecon-truth", "points": P, "frames": F,
//   "shapes": [ F arrays of P [x, y, z] ], "motion_scale": s,
//   "generation": { free-form generation parameters } }
struct Truth {
  StructureMatrix structure;
  double motion_scale = 0.0;
  Json generation = Json::object();
};

Json TruthToJson(const Truth& truth);
Truth TruthFromJson(const Json& j);

// Assignment file
// { "format": "dynrecon-assignment",
//   "time_of_frame": [F ints], "video_of_time": [T ints] }
Json AssignmentToJson(const Assignment& a);
Assignment AssignmentFromJson(const Json& j);

/// Config file: every SolverConfig field by name; lambda3 may be the string
/// "inf" (or null) for the pinned-ray parameterization. Missing fields keep
/// their defaults; unknown fields are rejected.
Json ConfigToJson(const SolverConfig& config);
SolverConfig ConfigFromJson(const Json& j, SolverConfig base = {});

// Result file
// { "format": "dynrecon-result", "points": P, "frames": F,
//   "shapes": [ F arrays of P [x, y, z] ], "depths": [ P arrays of F, null
//   where undefined ], "weights": [ F rows of F ], "objective_trace": [...],
//   "block_trace": [...], "outer_iterations": k, "admm_iterations": k,
//   "flags": { ... } }
Json ResultToJson(const SolveState& state);
StructureMatrix StructureFromResult(const Json& j);
/// Reads "weights" from a result file or a bare weights file.
CoefficientMatrix WeightsFromJson(const Json& j);

Json EvalReportToJson(const EvalReport& report);
Json AnalysisToJson(const std::vector<ReconstructabilityReport>& reports);

Json ShapesToJson(const StructureMatrix& x);
StructureMatrix ShapesFromJson(const Json& shapes);
Json MatrixToJson(const Eigen::MatrixXd& m);
Eigen::MatrixXd MatrixFromJson(const Json& rows);

/// Non-finite values become null.
Json Number(double v);

Json ReadJsonFile(const std::string& path);
/// Writes `j.dump(2)` followed by a newline.
void WriteJsonFile(const std::string& path, const Json& j);

}  // namespace dynrecon::io
