#include "dynrecon/scene_io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <string>

namespace dynrecon::io {

namespace {

void ExpectFormat(const Json& j, const char* format) {
  DYNRECON_CHECK(j.is_object() && j.value("format", std::string()) == format,
                 ErrorCategory::kInput,
                 std::string("expected a document with format '") + format + "'");
}

Mat3 Mat3FromJson(const Json& j, const char* what) {
  DYNRECON_CHECK(j.is_array() && j.size() == 9, ErrorCategory::kInput,
                 std::string(what) + " must hold 9 numbers");
  Mat3 m;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m(r, c) = j.at(3 * r + c).get<double>();
  }
  return m;
}

Json Mat3ToJson(const Mat3& m) {
  Json j = Json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) j.push_back(m(r, c));
  }
  return j;
}

template <typename T>
T Get(const Json& j, const char* key) {
  DYNRECON_CHECK(j.contains(key), ErrorCategory::kInput,
                 std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCategory::kInput, std::string("field '") + key + "': " + e.what());
  }
}

}  // namespace

Json Number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json MatrixToJson(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(Number(m(r, c)));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd MatrixFromJson(const Json& rows) {
  DYNRECON_CHECK(rows.is_array(), ErrorCategory::kInput, "matrix must be an array of rows");
  const Eigen::Index n_rows = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index n_cols = n_rows > 0 ? static_cast<Eigen::Index>(rows[0].size()) : 0;
  Eigen::MatrixXd m(n_rows, n_cols);
  for (Eigen::Index r = 0; r < n_rows; ++r) {
    DYNRECON_CHECK(rows[r].is_array() && static_cast<Eigen::Index>(rows[r].size()) == n_cols,
                   ErrorCategory::kInput, "ragged matrix");
    for (Eigen::Index c = 0; c < n_cols; ++c) {
      const Json& v = rows[r][c];
      m(r, c) = v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
    }
  }
  return m;
}

Json ShapesToJson(const StructureMatrix& x) {
  Json frames = Json::array();
  for (int f = 0; f < x.frame_count(); ++f) {
    Json shape = Json::array();
    for (int p = 0; p < x.point_count(); ++p) {
      const Vec3 v = x.point(p, f);
      shape.push_back({v.x(), v.y(), v.z()});
    }
    frames.push_back(std::move(shape));
  }
  return frames;
}

StructureMatrix ShapesFromJson(const Json& shapes) {
  DYNRECON_CHECK(shapes.is_array() && !shapes.empty(), ErrorCategory::kInput,
                 "shapes must be a non-empty array of frames");
  const int frames = static_cast<int>(shapes.size());
  const int points = static_cast<int>(shapes[0].size());
  StructureMatrix x(points, frames);
  for (int f = 0; f < frames; ++f) {
    DYNRECON_CHECK(shapes[f].is_array() && static_cast<int>(shapes[f].size()) == points,
                   ErrorCategory::kInput, "every shape must hold P points");
    for (int p = 0; p < points; ++p) {
      const Json& v = shapes[f][p];
      DYNRECON_CHECK(v.is_array() && v.size() == 3, ErrorCategory::kInput,
                     "points must be [x, y, z]");
      x.point(p, f) = Vec3(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
    }
  }
  DYNRECON_CHECK(x.shapes.allFinite(), ErrorCategory::kInput, "non-finite shape entry");
  return x;
}

Json SceneToJson(const Scene& scene) {
  Json j;
  j["format"] = "dynrecon-scene";
  j["points"] = scene.observations.point_count();
  j["frames"] = scene.observations.frame_count();
  Json cameras = Json::array();
  for (const CameraFrame* frame : FramesByIndex(scene.frames)) {
    cameras.push_back({{"global_index", frame->global_index},
                       {"video_id", frame->video_id},
                       {"frame_in_video", frame->frame_in_video},
                       {"R", Mat3ToJson(frame->rotation)},
                       {"C", {frame->center.x(), frame->center.y(), frame->center.z()}},
                       {"K", Mat3ToJson(frame->intrinsics)}});
  }
  j["cameras"] = std::move(cameras);
  Json obs = Json::array();
  for (int p = 0; p < scene.observations.point_count(); ++p) {
    Json row = Json::array();
    for (int f = 0; f < scene.observations.frame_count(); ++f) {
      if (scene.observations.present(p, f)) {
        const Vec2& x = scene.observations.measure(p, f);
        row.push_back({x.x(), x.y()});
      } else {
        row.push_back(nullptr);
      }
    }
    obs.push_back(std::move(row));
  }
  j["observations"] = std::move(obs);
  return j;
}

Scene SceneFromJson(const Json& j) {
  ExpectFormat(j, "dynrecon-scene");
  const int points = Get<int>(j, "points");
  const int frames = Get<int>(j, "frames");
  DYNRECON_CHECK(points >= 1 && frames >= 1, ErrorCategory::kInput,
                 "scene needs at least one point and one frame");
  Scene scene;
  const Json& cameras = j.at("cameras");
  DYNRECON_CHECK(cameras.is_array() && static_cast<int>(cameras.size()) == frames,
                 ErrorCategory::kInput, "camera count must equal frames");
  for (const Json& c : cameras) {
    CameraFrame frame;
    frame.global_index = Get<int>(c, "global_index");
    frame.video_id = Get<int>(c, "video_id");
    frame.frame_in_video = Get<int>(c, "frame_in_video");
    frame.rotation = Mat3FromJson(c.at("R"), "R");
    frame.intrinsics = Mat3FromJson(c.at("K"), "K");
    const auto center = Get<std::vector<double>>(c, "C");
    DYNRECON_CHECK(center.size() == 3, ErrorCategory::kInput, "C must hold 3 numbers");
    frame.center = Vec3(center[0], center[1], center[2]);
    scene.frames.push_back(frame);
  }
  ValidateFrames(scene.frames);
  FramesByIndex(scene.frames);

  const Json& obs = j.at("observations");
  DYNRECON_CHECK(obs.is_array() && static_cast<int>(obs.size()) == points,
                 ErrorCategory::kInput, "observations must hold P rows");
  scene.observations = ObservationSet(points, frames);
  for (int p = 0; p < points; ++p) {
    DYNRECON_CHECK(obs[p].is_array() && static_cast<int>(obs[p].size()) == frames,
                   ErrorCategory::kInput, "observation rows must hold F entries");
    for (int f = 0; f < frames; ++f) {
      const Json& x = obs[p][f];
      if (x.is_null()) continue;
      DYNRECON_CHECK(x.is_array() && x.size() == 2, ErrorCategory::kInput,
                     "observations must be [x, y] or null");
      scene.observations.Set(p, f, Vec2(x[0].get<double>(), x[1].get<double>()));
    }
  }
  return scene;
}

Json TruthToJson(const Truth& truth) {
  Json j;
  j["format"] = "dynrecon-truth";
  j["points"] = truth.structure.point_count();
  j["frames"] = truth.structure.frame_count();
  j["motion_scale"] = truth.motion_scale;
  j["generation"] = truth.generation;
  j["shapes"] = ShapesToJson(truth.structure);
  return j;
}

Truth TruthFromJson(const Json& j) {
  ExpectFormat(j, "dynrecon-truth");
  Truth truth;
  truth.structure = ShapesFromJson(j.at("shapes"));
  truth.motion_scale = j.value("motion_scale", 0.0);
  truth.generation = j.value("generation", Json::object());
  return truth;
}

Json AssignmentToJson(const Assignment& a) {
  return {{"format", "dynrecon-assignment"},
          {"time_of_frame", a.time_of_frame},
          {"video_of_time", a.video_of_time}};
}

Assignment AssignmentFromJson(const Json& j) {
  ExpectFormat(j, "dynrecon-assignment");
  Assignment a;
  a.time_of_frame = Get<std::vector<int>>(j, "time_of_frame");
  a.video_of_time = Get<std::vector<int>>(j, "video_of_time");
  return a;
}

Json ConfigToJson(const SolverConfig& c) {
  Json j;
  j["lambda1"] = c.lambda1;
  j["lambda2"] = c.lambda2;
  j["lambda3"] = std::isfinite(c.lambda3) ? Json(c.lambda3) : Json("inf");
  j["rho"] = c.rho;
  j["adaptive_rho"] = c.adaptive_rho;
  j["outer_max"] = c.outer_max;
  j["outer_rel_tol"] = c.outer_rel_tol;
  j["admm_max"] = c.admm_max;
  j["admm_abs_tol"] = c.admm_abs_tol;
  j["admm_rel_tol"] = c.admm_rel_tol;
  j["admm_consensus_tol"] = c.admm_consensus_tol;
  j["same_video_exclusion"] = c.same_video_exclusion;
  j["second_stage"] = c.second_stage;
  j["threads"] = c.threads;
  j["seed"] = c.seed;
  return j;
}

SolverConfig ConfigFromJson(const Json& j, SolverConfig c) {
  DYNRECON_CHECK(j.is_object(), ErrorCategory::kInput, "config must be an object");
  static const std::set<std::string> known = {
      "lambda1", "lambda2", "lambda3", "rho", "adaptive_rho", "outer_max",
      "outer_rel_tol", "admm_max", "admm_abs_tol", "admm_rel_tol",
      "admm_consensus_tol", "same_video_exclusion", "second_stage", "threads",
      "seed"};
  for (const auto& [key, value] : j.items()) {
    DYNRECON_CHECK(known.count(key) > 0, ErrorCategory::kInput,
                   "unknown config field '" + key + "'");
  }
  try {
    c.lambda1 = j.value("lambda1", c.lambda1);
    c.lambda2 = j.value("lambda2", c.lambda2);
    if (j.contains("lambda3")) {
      const Json& l3 = j.at("lambda3");
      if (l3.is_null() || (l3.is_string() && l3.get<std::string>() == "inf")) {
        c.lambda3 = std::numeric_limits<double>::infinity();
      } else {
        c.lambda3 = l3.get<double>();
      }
    }
    c.rho = j.value("rho", c.rho);
    c.adaptive_rho = j.value("adaptive_rho", c.adaptive_rho);
    c.outer_max = j.value("outer_max", c.outer_max);
    c.outer_rel_tol = j.value("outer_rel_tol", c.outer_rel_tol);
    c.admm_max = j.value("admm_max", c.admm_max);
    c.admm_abs_tol = j.value("admm_abs_tol", c.admm_abs_tol);
    c.admm_rel_tol = j.value("admm_rel_tol", c.admm_rel_tol);
    c.admm_consensus_tol = j.value("admm_consensus_tol", c.admm_consensus_tol);
    c.same_video_exclusion = j.value("same_video_exclusion", c.same_video_exclusion);
    c.second_stage = j.value("second_stage", c.second_stage);
    c.threads = j.value("threads", c.threads);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCategory::kInput, std::string("config: ") + e.what());
  }
  c.Validate();
  return c;
}

Json ResultToJson(const SolveState& state) {
  Json j;
  j["format"] = "dynrecon-result";
  j["points"] = state.structure.point_count();
  j["frames"] = state.structure.frame_count();
  j["shapes"] = ShapesToJson(state.structure);
  Json depths = Json::array();
  for (int p = 0; p < state.depths.point_count(); ++p) {
    Json row = Json::array();
    for (int f = 0; f < state.depths.frame_count(); ++f) {
      row.push_back(state.depths.defined(p, f) ? Number(state.depths.values(p, f))
                                               : Json(nullptr));
    }
    depths.push_back(std::move(row));
  }
  j["depths"] = std::move(depths);
  j["weights"] = MatrixToJson(state.weights.weights);
  j["objective_trace"] = Json::array();
  for (double v : state.objective_trace) j["objective_trace"].push_back(Number(v));
  j["block_trace"] = Json::array();
  for (double v : state.block_trace) j["block_trace"].push_back(Number(v));
  j["outer_iterations"] = state.outer_iterations;
  j["admm_iterations"] = state.admm_iterations;
  j["flags"] = {{"ridge_regularized", state.flags.ridge_regularized},
                {"admm_not_converged", state.flags.admm_not_converged},
                {"w_step_rejected", state.flags.w_step_rejected},
                {"psi2_undefined", state.flags.psi2_undefined},
                {"init_fallback", state.flags.init_fallback},
                {"outer_not_converged", state.flags.outer_not_converged}};
  return j;
}

StructureMatrix StructureFromResult(const Json& j) {
  ExpectFormat(j, "dynrecon-result");
  return ShapesFromJson(j.at("shapes"));
}

CoefficientMatrix WeightsFromJson(const Json& j) {
  DYNRECON_CHECK(j.is_object() && j.contains("weights"), ErrorCategory::kInput,
                 "expected a document with a 'weights' matrix");
  CoefficientMatrix w;
  w.weights = MatrixFromJson(j.at("weights"));
  DYNRECON_CHECK(w.weights.rows() == w.weights.cols() && w.weights.allFinite(),
                 ErrorCategory::kInput, "weights must be a finite square matrix");
  return w;
}

Json EvalReportToJson(const EvalReport& report) {
  Json j;
  j["format"] = "dynrecon-eval";
  Json acc = Json::object();
  for (std::size_t i = 0; i < kAccuracyThresholds.size(); ++i) {
    acc[std::to_string(static_cast<int>(kAccuracyThresholds[i]))] = report.accuracy_at[i];
  }
  j["accuracy_at"] = std::move(acc);
  j["median_error"] = report.median_error;
  j["mean_error"] = report.mean_error;
  j["top2_sum_mean"] = report.top2_sum_mean;
  j["top2_neighbor_frequency"] = report.top2_neighbor_frequency;
  j["outer_iterations"] = report.outer_iterations;
  j["admm_iterations"] = report.admm_iterations;
  j["per_point_errors"] = MatrixToJson(report.per_point_errors);
  return j;
}

Json AnalysisToJson(const std::vector<ReconstructabilityReport>& reports) {
  Json points = Json::array();
  std::vector<double> conditions;
  for (const ReconstructabilityReport& r : reports) {
    conditions.push_back(r.system_condition);
    points.push_back({{"system_condition", Number(r.system_condition)},
                      {"error_bound", Number(r.error_bound)},
                      {"error_norm", r.error_vector.norm()},
                      {"b_norm", r.b_vector.norm()},
                      {"residual_per_point", r.residual_per_point},
                      {"singular", r.singular},
                      {"a_matrix", MatrixToJson(r.a_matrix)},
                      {"b_vector", MatrixToJson(r.b_vector)},
                      {"error_vector", MatrixToJson(r.error_vector)}});
  }
  std::sort(conditions.begin(), conditions.end());
  Json j;
  j["format"] = "dynrecon-analysis";
  j["points"] = std::move(points);
  j["max_system_condition"] =
      conditions.empty() ? Json(nullptr) : Number(conditions.back());
  j["median_system_condition"] =
      conditions.empty() ? Json(nullptr) : Number(conditions[conditions.size() / 2]);
  return j;
}

Json ReadJsonFile(const std::string& path) {
  std::ifstream in(path);
  DYNRECON_CHECK(static_cast<bool>(in), ErrorCategory::kIo, "cannot read " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCategory::kInput, path + ": " + e.what());
  }
}

void WriteJsonFile(const std::string& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  DYNRECON_CHECK(static_cast<bool>(out), ErrorCategory::kIo, "cannot write " + path);
  out << j.dump(2) << '\n';
  DYNRECON_CHECK(static_cast<bool>(out), ErrorCategory::kIo, "failed writing " + path);
}

}  // namespace dynrecon::io
