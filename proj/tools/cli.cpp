#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "dynrecon/evaluation.hpp"
#include "dynrecon/recon_solver.hpp"
#include "dynrecon/reconstructability.hpp"
#include "dynrecon/scene_io.hpp"
#include "dynrecon/simplex_coding.hpp"
#include "dynrecon/synth_bench.hpp"

namespace dynrecon::cli {

namespace fs = std::filesystem;
using io::Json;

namespace {

struct SimulateOptions {
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out_dir;
  std::string motion_file;
  int points = 5;
  int samples = 80;
  double rate = 120.0;
  int cameras = 4;
  std::string rig = "static";
  double jitter = 10.0;
  double focal = 1000.0;
  double distance_factor = 2.0;
  double noise = 0.0;
  double miss = 0.0;
  int block_length = 0;
  bool no_consecutive_exclusion = false;
  int decimation = 1;
  std::string sweep_axis;
  std::vector<double> sweep_values;
  std::vector<std::uint64_t> sweep_seeds;
};

struct SolveOptions {
  std::string scene;
  std::string config;
  std::string out;
  bool noisy = false;
  std::optional<double> lambda1, lambda2, lambda3, rho;
  std::optional<double> outer_rel_tol, admm_abs_tol, admm_rel_tol, admm_consensus_tol;
  std::optional<int> outer_max, admm_max, threads;
  std::optional<unsigned long long> seed;
  bool fixed_rho = false;
  bool no_exclusion = false;
  bool single_stage = false;
};

struct AnalyzeOptions {
  std::string scene;
  std::string truth;
  std::string weights;
  std::string exclusion = "off";
  std::string out;
};

struct BaselineOptions {
  std::string scene;
  std::string assignment;
  std::vector<double> taps{1.0, -1.0};
  std::string out;
};

struct EvalOptions {
  std::string result;
  std::string truth;
  std::string assignment;
  std::string out;
};

struct ReportOptions {
  std::vector<std::string> evals;
  std::string out_dir;
};

int ExitFor(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kIo: return kIoError;
    case ErrorCategory::kInput: return kInputError;
    case ErrorCategory::kConstraint:
    case ErrorCategory::kInfeasible: return kInfeasible;
    case ErrorCategory::kNumerical: return kNumerical;
  }
  return kInputError;
}

RigMode ParseRig(const std::string& name) {
  if (name == "static") return RigMode::kStatic;
  if (name == "handheld") return RigMode::kHandheld;
  if (name == "random") return RigMode::kRandomPerFrame;
  throw Error(ErrorCategory::kInput, "unknown rig mode '" + name + "'");
}

std::string FormatValue(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

MotionSource LoadMotionFile(const std::string& path) {
  std::ifstream in(path);
  DYNRECON_CHECK(static_cast<bool>(in), ErrorCategory::kIo, "cannot read " + path);
  return LoadMotion(in);
}

void WriteSceneFiles(const fs::path& dir, const SyntheticScene& scene,
                     const Json& generation) {
  fs::create_directories(dir);
  io::WriteJsonFile((dir / "scene.json").string(),
                    io::SceneToJson(io::Scene{scene.frames, scene.observations}));
  io::Truth truth{scene.ground_truth, scene.motion_scale, generation};
  io::WriteJsonFile((dir / "truth.json").string(), io::TruthToJson(truth));
  io::WriteJsonFile((dir / "assignment.json").string(),
                    io::AssignmentToJson(scene.assignment));
}

int RunSimulate(const SimulateOptions& opt, std::ostream& out) {
  std::uint64_t seed = opt.seed;
  if (const char* env = std::getenv("SEED"); env != nullptr && *env != '\0') {
    try {
      seed = std::stoull(env);
    } catch (const std::exception&) {
      throw Error(ErrorCategory::kInput, std::string("SEED is not an integer: ") + env);
    }
  } else {
    DYNRECON_CHECK(opt.seed_given, ErrorCategory::kInput,
                   "simulate requires --seed (or the SEED environment variable)");
  }

  RigSpec rig;
  rig.camera_count = opt.cameras;
  rig.jitter_sigma = opt.jitter;
  rig.focal = opt.focal;
  rig.distance_factor = opt.distance_factor;
  rig.mode = ParseRig(opt.rig);
  CorruptionSpec base;
  base.noise_sigma = opt.noise;
  base.miss_rate = opt.miss;
  base.block_length = opt.block_length;
  base.consecutive_exclusion = !opt.no_consecutive_exclusion;

  auto make_motion = [&](std::uint64_t motion_seed) {
    if (!opt.motion_file.empty()) return LoadMotionFile(opt.motion_file);
    ProceduralMotionSpec spec;
    spec.point_count = opt.points;
    spec.sample_count = opt.samples;
    spec.rate_hz = opt.rate;
    spec.seed = motion_seed;
    return ProceduralMotion(spec);
  };
  auto generation = [&](std::uint64_t s, const MotionSource& motion, int decimation,
                        double noise, double miss) {
    return Json{{"seed", s},
                {"points", motion.point_count()},
                {"samples", motion.sample_count()},
                {"rate_hz", motion.rate_hz / decimation},
                {"decimation", decimation},
                {"cameras", rig.camera_count},
                {"rig", opt.rig},
                {"jitter_sigma", rig.jitter_sigma},
                {"focal", rig.focal},
                {"distance_factor", rig.distance_factor},
                {"noise_sigma", noise},
                {"miss_rate", miss},
                {"block_length", base.block_length},
                {"consecutive_exclusion", base.consecutive_exclusion}};
  };

  const fs::path dir(opt.out_dir);
  if (opt.sweep_axis.empty()) {
    const MotionSource motion = make_motion(seed);
    CorruptionSpec corruption = base;
    corruption.seed = seed;
    const SyntheticScene scene = Generate(motion.Decimate(opt.decimation), rig, corruption);
    Json gen = generation(seed, motion, opt.decimation, opt.noise, opt.miss);
    gen["scene_id"] = "scene";
    WriteSceneFiles(dir, scene, gen);
    out << "wrote " << (dir / "scene.json").string() << ' ' << scene.frames.size()
        << " frames, " << scene.observations.point_count() << " points\n";
    return kOk;
  }

  static const std::set<std::string> axes = {"frame_rate", "noise_sigma", "miss_rate"};
  DYNRECON_CHECK(axes.count(opt.sweep_axis) > 0, ErrorCategory::kInput,
                 "sweep axis must be frame_rate, noise_sigma or miss_rate");
  DYNRECON_CHECK(!opt.sweep_values.empty(), ErrorCategory::kInput,
                 "a sweep needs --values");
  std::vector<std::uint64_t> seeds = opt.sweep_seeds;
  if (seeds.empty()) seeds.push_back(seed);

  Json manifest{{"format", "dynrecon-manifest"}, {"axis", opt.sweep_axis},
                {"scenes", Json::array()}};
  for (std::uint64_t s : seeds) {
    const MotionSource motion = make_motion(s);
    for (double value : opt.sweep_values) {
      SweepGrid grid;
      grid.seeds = {s};
      grid.decimations = {opt.decimation};
      grid.noise_sigmas = {opt.noise};
      grid.miss_rates = {opt.miss};
      if (opt.sweep_axis == "frame_rate") {
        DYNRECON_CHECK(value > 0.0, ErrorCategory::kInput, "frame rates must be positive");
        const double ratio = motion.rate_hz / value;
        const int factor = static_cast<int>(std::lround(ratio));
        DYNRECON_CHECK(factor >= 1 && std::abs(ratio - factor) < 1e-9,
                       ErrorCategory::kInput,
                       "frame rate " + FormatValue(value) +
                           " does not divide the motion rate");
        grid.decimations = {factor};
      } else if (opt.sweep_axis == "noise_sigma") {
        grid.noise_sigmas = {value};
      } else {
        grid.miss_rates = {value};
      }
      const std::vector<SweepScene> scenes = Sweep(motion, rig, base, grid);
      for (const SweepScene& sweep : scenes) {
        const std::string id =
            opt.sweep_axis + "_" + FormatValue(value) + "_seed_" + std::to_string(s);
        Json gen = generation(s, motion, sweep.key.decimation, sweep.key.noise_sigma,
                              sweep.key.miss_rate);
        gen["scene_id"] = id;
        gen["axis"] = opt.sweep_axis;
        gen["axis_value"] = value;
        WriteSceneFiles(dir / id, sweep.scene, gen);
        manifest["scenes"].push_back(
            {{"id", id}, {"axis_value", value}, {"seed", s}, {"dir", id}});
      }
    }
  }
  fs::create_directories(dir);
  io::WriteJsonFile((dir / "manifest.json").string(), manifest);
  out << "wrote " << manifest["scenes"].size() << " scenes to " << dir.string() << '\n';
  return kOk;
}

int RunSolve(const SolveOptions& opt, std::ostream& out) {
  const io::Scene scene = io::SceneFromJson(io::ReadJsonFile(opt.scene));
  SolverConfig config = opt.noisy ? SolverConfig::ForNoisyData() : SolverConfig{};
  if (!opt.config.empty()) config = io::ConfigFromJson(io::ReadJsonFile(opt.config), config);
  if (opt.lambda1) config.lambda1 = *opt.lambda1;
  if (opt.lambda2) config.lambda2 = *opt.lambda2;
  if (opt.lambda3) config.lambda3 = *opt.lambda3;
  if (opt.rho) config.rho = *opt.rho;
  if (opt.outer_rel_tol) config.outer_rel_tol = *opt.outer_rel_tol;
  if (opt.admm_abs_tol) config.admm_abs_tol = *opt.admm_abs_tol;
  if (opt.admm_rel_tol) config.admm_rel_tol = *opt.admm_rel_tol;
  if (opt.admm_consensus_tol) config.admm_consensus_tol = *opt.admm_consensus_tol;
  if (opt.outer_max) config.outer_max = *opt.outer_max;
  if (opt.admm_max) config.admm_max = *opt.admm_max;
  if (opt.threads) config.threads = *opt.threads;
  if (opt.seed) config.seed = *opt.seed;
  if (opt.fixed_rho) config.adaptive_rho = false;
  if (opt.no_exclusion) config.same_video_exclusion = false;
  if (opt.single_stage) config.second_stage = false;
  config.Validate();
  const SolveState state = Solve(scene.observations, scene.frames, config);
  Json result = io::ResultToJson(state);
  result["config"] = io::ConfigToJson(config);
  io::WriteJsonFile(opt.out, result);
  out << "wrote " << opt.out << " objective "
      << (state.objective_trace.empty() ? 0.0 : state.objective_trace.back()) << " after "
      << state.outer_iterations << " outer iterations\n";
  return kOk;
}

int RunAnalyze(const AnalyzeOptions& opt, std::ostream& out) {
  const io::Scene scene = io::SceneFromJson(io::ReadJsonFile(opt.scene));
  const io::Truth truth = io::TruthFromJson(io::ReadJsonFile(opt.truth));
  DYNRECON_CHECK(truth.structure.frame_count() == scene.observations.frame_count() &&
                     truth.structure.point_count() == scene.observations.point_count(),
                 ErrorCategory::kInput, "truth does not match scene dimensions");
  const RayField rays = ComputeRays(scene.frames, scene.observations);

  CoefficientMatrix w;
  bool exclusion_applied = false;
  if (!opt.weights.empty()) {
    w = io::WeightsFromJson(io::ReadJsonFile(opt.weights));
  } else {
    const std::vector<int> videos = VideoOfFrame(scene.frames);
    const bool several = std::set<int>(videos.begin(), videos.end()).size() >= 2;
    DYNRECON_CHECK(opt.exclusion != "on" || several, ErrorCategory::kInfeasible,
                   "same-video exclusion needs at least two videos");
    exclusion_applied = opt.exclusion == "on" || (opt.exclusion == "auto" && several);
    w = SelfExpress(truth.structure, SupportMask::Build(videos, exclusion_applied));
  }
  const std::vector<ReconstructabilityReport> reports =
      AnalyzePoints(rays, w, truth.structure);
  Json j = io::AnalysisToJson(reports);
  j["exclusion_applied"] = exclusion_applied;
  j["weights_source"] = opt.weights.empty() ? "self_expression" : "file";
  j["residual"] = Residual(truth.structure, w);
  io::WriteJsonFile(opt.out, j);
  out << "wrote " << opt.out << " max condition " << j["max_system_condition"].dump()
      << '\n';
  return kOk;
}

int RunBaseline(const BaselineOptions& opt, std::ostream& out) {
  const io::Scene scene = io::SceneFromJson(io::ReadJsonFile(opt.scene));
  const Assignment assignment = io::AssignmentFromJson(io::ReadJsonFile(opt.assignment));
  const int n = scene.observations.frame_count();
  DYNRECON_CHECK(static_cast<int>(assignment.time_of_frame.size()) == n,
                 ErrorCategory::kInput, "assignment does not match scene");
  std::vector<int> frame_at_rank(n);
  std::iota(frame_at_rank.begin(), frame_at_rank.end(), 0);
  std::stable_sort(frame_at_rank.begin(), frame_at_rank.end(), [&](int a, int b) {
    return assignment.time_of_frame[a] < assignment.time_of_frame[b];
  });

  const FilterWeights filter = MakeFilterWeights(opt.taps, n);
  CoefficientMatrix w;
  w.weights = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      w.weights(frame_at_rank[i], frame_at_rank[j]) = filter.w.weights(i, j);
    }
  }

  SolverConfig config;
  config.lambda2 = 0.0;
  const ScaledFrames scaled = NormalizeScale(scene.frames);
  const RayField rays = ComputeRays(scaled.frames, scene.observations);
  SolveState state;
  state.structure = StructureMatrix(scene.observations.point_count(), n);
  state.weights = w;
  const XStepReport report = XStep(state, config, rays, scaled.frames);
  state.flags.ridge_regularized = report.ridge_regularized;
  state.objective_trace.push_back(
      Objective(state.structure, state.weights, config, rays, scaled.frames).total);
  state.structure.shapes /= scaled.factor;
  state.depths.values /= scaled.factor;

  Json result = io::ResultToJson(state);
  result["taps"] = opt.taps;
  io::WriteJsonFile(opt.out, result);
  out << "wrote " << opt.out << '\n';
  return kOk;
}

std::vector<int> TruthOrder(const Assignment& assignment) {
  const int n = static_cast<int>(assignment.time_of_frame.size());
  std::vector<int> frames(n);
  std::iota(frames.begin(), frames.end(), 0);
  std::stable_sort(frames.begin(), frames.end(), [&](int a, int b) {
    return assignment.time_of_frame[a] < assignment.time_of_frame[b];
  });
  std::vector<int> rank(n);
  for (int r = 0; r < n; ++r) rank[frames[r]] = r;
  return rank;
}

int RunEval(const EvalOptions& opt, std::ostream& out) {
  const Json result = io::ReadJsonFile(opt.result);
  const io::Truth truth = io::TruthFromJson(io::ReadJsonFile(opt.truth));
  const Assignment assignment = io::AssignmentFromJson(io::ReadJsonFile(opt.assignment));
  const StructureMatrix estimate = io::StructureFromResult(result);
  const CoefficientMatrix w = io::WeightsFromJson(result);

  EvalReport report = Evaluate(estimate, truth.structure, w, TruthOrder(assignment));
  report.outer_iterations = result.value("outer_iterations", 0);
  report.admm_iterations = result.value("admm_iterations", 0);
  Json j = io::EvalReportToJson(report);
  j["scene_id"] = truth.generation.value("scene_id", std::string("scene"));
  if (truth.generation.contains("axis")) {
    j["axis"] = truth.generation["axis"];
    j["axis_value"] = truth.generation["axis_value"];
  }
  j["motion_scale"] = truth.motion_scale;
  io::WriteJsonFile(opt.out, j);
  out << "wrote " << opt.out << " median error " << report.median_error
      << " accuracy@30 " << report.accuracy_at[2] << '\n';
  return kOk;
}

int RunReport(const ReportOptions& opt, std::ostream& out) {
  std::vector<LabeledErrors> labeled;
  for (const std::string& path : opt.evals) {
    const Json j = io::ReadJsonFile(path);
    DYNRECON_CHECK(j.value("format", std::string()) == "dynrecon-eval",
                   ErrorCategory::kInput, path + " is not an eval report");
    DYNRECON_CHECK(j.contains("axis") && j.contains("axis_value"), ErrorCategory::kInput,
                   path + " carries no sweep axis");
    LabeledErrors e;
    e.axis = j["axis"].get<std::string>();
    e.axis_value = j["axis_value"].get<double>();
    e.scene_id = j.value("scene_id", path);
    const Eigen::MatrixXd errors = io::MatrixFromJson(j.at("per_point_errors"));
    e.errors.assign(errors.data(), errors.data() + errors.size());
    labeled.push_back(std::move(e));
  }
  for (const std::string& path : EmitTables(labeled, opt.out_dir)) {
    out << "wrote " << path << '\n';
  }
  return kOk;
}

void Fail(std::ostream& err, std::string_view category, const std::string& message) {
  err << Json{{"error", std::string(category)}, {"message", message}}.dump() << '\n';
}

}  // namespace

int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-view reconstruction of dynamic points without sequencing"};
  app.name("dynrecon");
  app.require_subcommand(1);

  SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "Generate synthetic scenes");
  simulate->add_option("--seed", sim.seed, "Random seed (SEED env overrides)");
  simulate->add_option("--out", sim.out_dir, "Output directory")->required();
  simulate->add_option("--motion", sim.motion_file, "Motion text file instead of procedural motion");
  simulate->add_option("--points", sim.points, "Procedural point count");
  simulate->add_option("--samples", sim.samples, "Procedural sample count");
  simulate->add_option("--rate", sim.rate, "Procedural sampling rate (Hz)");
  simulate->add_option("--cameras", sim.cameras, "Camera count");
  simulate->add_option("--rig", sim.rig, "static, handheld or random")
      ->check(CLI::IsMember({"static", "handheld", "random"}));
  simulate->add_option("--jitter", sim.jitter, "Handheld center jitter sigma");
  simulate->add_option("--focal", sim.focal, "Focal length in pixels");
  simulate->add_option("--distance-factor", sim.distance_factor,
                       "Camera ring radius relative to the motion scale");
  simulate->add_option("--noise", sim.noise, "Pixel noise sigma");
  simulate->add_option("--miss", sim.miss, "Missing-observation rate");
  simulate->add_option("--block-length", sim.block_length, "Round-robin block length");
  simulate->add_flag("--no-consecutive-exclusion", sim.no_consecutive_exclusion,
                     "Allow one camera to capture consecutive samples");
  simulate->add_option("--decimation", sim.decimation, "Keep every k-th motion sample");
  simulate->add_option("--sweep-axis", sim.sweep_axis, "frame_rate, noise_sigma or miss_rate");
  simulate->add_option("--values", sim.sweep_values, "Sweep values")->delimiter(',');
  simulate->add_option("--seeds", sim.sweep_seeds, "Sweep seeds")->delimiter(',');

  SolveOptions sol;
  auto* solve = app.add_subcommand("solve", "Reconstruct structure and coefficients");
  solve->add_option("--scene", sol.scene, "Scene file")->required();
  solve->add_option("--out", sol.out, "Result file")->required();
  solve->add_option("--config", sol.config, "Config file");
  solve->add_flag("--noisy", sol.noisy, "Use the soft ray constraint (lambda3 = 100)");
  solve->add_option("--threads", sol.threads, "Worker threads for the W-step");
  solve->add_option("--lambda1", sol.lambda1, "Weight of the W symmetry term");
  solve->add_option("--lambda2", sol.lambda2, "Weight of the within-video smoothness term");
  solve->add_option("--lambda3", sol.lambda3, "Soft ray weight (inf pins points to rays)");
  solve->add_option("--rho", sol.rho, "ADMM penalty relative to the data curvature");
  solve->add_flag("--fixed-rho", sol.fixed_rho, "Disable residual balancing of rho");
  solve->add_option("--outer-max", sol.outer_max, "Outer iterations per stage");
  solve->add_option("--outer-rel-tol", sol.outer_rel_tol, "Relative objective change to stop");
  solve->add_option("--admm-max", sol.admm_max, "ADMM iterations per W-step");
  solve->add_option("--admm-abs-tol", sol.admm_abs_tol, "ADMM absolute tolerance");
  solve->add_option("--admm-rel-tol", sol.admm_rel_tol, "ADMM relative tolerance");
  solve->add_option("--admm-consensus-tol", sol.admm_consensus_tol, "Largest |W - Z| at ADMM exit");
  solve->add_flag("--no-exclusion", sol.no_exclusion, "Allow same-video weights");
  solve->add_flag("--single-stage", sol.single_stage, "Skip the lambda2 = 0 stage");
  solve->add_option("--seed", sol.seed, "Recorded in the result config");

  AnalyzeOptions ana;
  auto* analyze = app.add_subcommand("analyze", "System condition and error analysis");
  analyze->add_option("--scene", ana.scene, "Scene file")->required();
  analyze->add_option("--truth", ana.truth, "Ground-truth file")->required();
  analyze->add_option("--weights", ana.weights, "Result or weights file");
  analyze->add_option("--exclusion", ana.exclusion,
                      "Same-video exclusion for self-expressed weights")
      ->check(CLI::IsMember({"auto", "on", "off"}));
  analyze->add_option("--out", ana.out, "Analysis file")->required();

  BaselineOptions base;
  auto* baseline = app.add_subcommand("baseline", "Fixed filter-weight reconstruction");
  baseline->add_option("--scene", base.scene, "Scene file")->required();
  baseline->add_option("--assignment", base.assignment, "Assignment file")->required();
  baseline->add_option("--taps", base.taps, "Filter taps")->delimiter(',');
  baseline->add_option("--out", base.out, "Result file")->required();

  EvalOptions ev;
  auto* eval = app.add_subcommand("eval", "Score a result against ground truth");
  eval->add_option("--result", ev.result, "Result file")->required();
  eval->add_option("--truth", ev.truth, "Ground-truth file")->required();
  eval->add_option("--assignment", ev.assignment, "Assignment file")->required();
  eval->add_option("--out", ev.out, "Eval report file")->required();

  ReportOptions rep;
  auto* report = app.add_subcommand("report", "Accuracy tables from eval reports");
  report->add_option("evals", rep.evals, "Eval report files")->required();
  report->add_option("--out", rep.out_dir, "Output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    Fail(err, "usage", e.what());
    return kUsage;
  }
  sim.seed_given = simulate->count("--seed") > 0;

  try {
    if (*simulate) return RunSimulate(sim, out);
    if (*solve) return RunSolve(sol, out);
    if (*analyze) return RunAnalyze(ana, out);
    if (*baseline) return RunBaseline(base, out);
    if (*eval) return RunEval(ev, out);
    if (*report) return RunReport(rep, out);
  } catch (const Error& e) {
    Fail(err, CategoryName(e.category()), e.what());
    return ExitFor(e.category());
  } catch (const nlohmann::json::exception& e) {
    Fail(err, "input", e.what());
    return kInputError;
  } catch (const fs::filesystem_error& e) {
    Fail(err, "io", e.what());
    return kIoError;
  }
  return kUsage;
}

}  // namespace dynrecon::cli
