#pragma once

#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dynrecon/geometry.hpp"
#include "dynrecon/simplex_coding.hpp"

namespace dynrecon {

/// Weights and tolerances of the alternating solver.
struct SolverConfig {
  double lambda1 = 0.05;  // structural dependence coherence (W vs W^T)
  double lambda2 = 0.1;   // within-video smoothness
  /// Weight of the soft ray constraint; infinity means points are pinned to
  /// their viewing rays.
  double lambda3 = std::numeric_limits<double>::infinity();
  /// ADMM penalty, in units of the mean curvature of the self-expression term.
  double rho = 1.0;
  /// Residual balancing: rho doubles or halves when one ADMM residual
  /// exceeds the other tenfold.
  bool adaptive_rho = true;
  int outer_max = 100;
  double outer_rel_tol = 1e-6;
  int admm_max = 500;
  /// Warm-started W-steps pass looser tolerances after a single iteration
  /// and the alternation then stalls far from a W-step optimum.
  double admm_abs_tol = 1e-8;
  double admm_rel_tol = 1e-6;
  /// Largest entry of |W - Z| accepted at ADMM termination.
  double admm_consensus_tol = 1e-4;
  bool same_video_exclusion = true;
  bool second_stage = true;
  int threads = 1;
  unsigned long long seed = 0;

  /// lambda3 = 100 when noisy measurements are expected.
  static SolverConfig ForNoisyData();
  void Validate() const;
};

struct SolveFlags {
  bool ridge_regularized = false;     // an X-step normal matrix was singular
  bool admm_not_converged = false;    // some W-step hit the iteration cap
  bool w_step_rejected = false;       // a W-step iterate was worse; kept old W
  bool psi2_undefined = false;        // every video has a single frame
  bool init_fallback = false;         // some frame had no valid partner
  bool outer_not_converged = false;
};

/// Complete iterate of the alternating solver.
struct SolveState {
  StructureMatrix structure;
  DepthMatrix depths;
  CoefficientMatrix weights;
  Eigen::MatrixXd dual;       // ADMM dual variable Y
  Eigen::MatrixXd auxiliary;  // ADMM split copy Z
  std::vector<double> objective_trace;  // after every outer iteration
  std::vector<double> block_trace;      // after every X- and W-step
  int outer_iterations = 0;
  int admm_iterations = 0;
  SolveFlags flags;
};

/// Individual terms of the cost; `total` is their weighted sum.
struct ObjectiveTerms {
  double self_expression = 0.0;  // (1/FP) ||X E||_F^2
  double psi1 = 0.0;             // (1/F) ||W - W^T||_F^2
  double psi2 = 0.0;             // (1/M) sum of squared within-video steps
  double ray = 0.0;              // sum over observations of squared distance to ray
  double total = 0.0;
};

/// Ordering of frames within each video: successive[k] = (f, g) means g is
/// the frame that follows f in the same video.
std::vector<std::pair<int, int>> SuccessivePairs(
    const std::vector<CameraFrame>& frames);

/// Within-video smoothness. Returns 0 and sets *undefined when no video has
/// more than one frame.
double Psi2(const StructureMatrix& structure,
            const std::vector<CameraFrame>& frames, bool* undefined = nullptr);

/// (1/F) ||W - W^T||_F^2.
double Psi1(const CoefficientMatrix& w);

/// Columns of (I - W) whose W column is not identically zero. Feasible
/// weights keep every column; predefined filter weights drop their boundary.
Eigen::MatrixXd ResidualOperator(const CoefficientMatrix& w);

ObjectiveTerms Objective(const StructureMatrix& structure,
                         const CoefficientMatrix& w, const SolverConfig& config,
                         const RayField& rays,
                         const std::vector<CameraFrame>& frames);

/// Minimizes the cost over the structure with W fixed. Present observations
/// are pinned to their rays (lambda3 infinite) or softly attached (finite);
/// missing observations are free 3D points. Updates structure and depths.
struct XStepReport {
  bool ridge_regularized = false;
  double normal_residual = 0.0;  // max over points of ||Q z - rhs||
  double gradient_scale = 0.0;   // max over points of ||rhs||
};
XStepReport XStep(SolveState& state, const SolverConfig& config,
                  const RayField& rays, const std::vector<CameraFrame>& frames);

/// Free variables of the X-step for one point: positions along rays for
/// pinned observations, full 3D coordinates otherwise.
struct PointParameterization {
  Eigen::VectorXd offset;    // 3F
  Eigen::MatrixXd basis;     // 3F x k
  Eigen::VectorXd Expand(const Eigen::VectorXd& z) const { return offset + basis * z; }
};
PointParameterization ParameterizePoint(int p, const SolverConfig& config,
                                        const RayField& rays);

/// ADMM minimization over W with X fixed. Uses and updates the state's
/// weights, auxiliary and dual blocks (warm start).
struct WStepReport {
  int iterations = 0;
  bool converged = false;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double max_consensus_gap = 0.0;
};
WStepReport AdmmWStep(SolveState& state, const SolverConfig& config,
                      const SupportMask& mask);

/// Resets the ADMM blocks from a column-wise self-expression of the current
/// structure (W = Z, Y = 0).
void InitializeWeights(SolveState& state, const SupportMask& mask, int threads);

/// Pairwise closest-approach initialization.
struct DepthInitialization {
  DepthMatrix depths;
  Eigen::MatrixXd distance;  // symmetric; +inf where not usable
  std::vector<int> partner;  // -1 when a frame fell back to unit depth
  bool fallback = false;
};
DepthInitialization InitializeDepths(const RayField& rays,
                                     const std::vector<CameraFrame>& frames);

/// Closest approach between ray bundles f and j over points observed in
/// both; infinite when any pair diverges or nothing is shared.
struct PairFit {
  double cost = std::numeric_limits<double>::infinity();
  Eigen::VectorXd depth_f;
  Eigen::VectorXd depth_j;
};
PairFit FitRayPair(const RayField& rays, int f, int j);

/// Initial structure: initialized depths on observed entries; missing
/// entries copy the partner frame's point or the mean of the point's
/// initialized positions.
StructureMatrix InitialStructure(const DepthInitialization& init,
                                 const RayField& rays);

/// Full alternating solve, including the second stage with lambda2 = 0.
SolveState Solve(const ObservationSet& obs,
                 const std::vector<CameraFrame>& frames,
                 const SolverConfig& config);

/// Alternation from a given state; used by Solve for each stage.
void RunStage(SolveState& state, const SolverConfig& config,
              const RayField& rays, const std::vector<CameraFrame>& frames,
              const SupportMask& mask);

/// Rescales camera centers so the mean distance between distinct centers
/// is 1. Returns the factor applied.
struct ScaledFrames {
  std::vector<CameraFrame> frames;
  double factor = 1.0;
};
ScaledFrames NormalizeScale(const std::vector<CameraFrame>& frames);

/// Video id per global frame index.
std::vector<int> VideoOfFrame(const std::vector<CameraFrame>& frames);

}  // namespace dynrecon
