#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <gtest/gtest.h>

#include "../support/scenes.hpp"
#include "dynrecon/recon_solver.hpp"

namespace dynrecon {
namespace {

using testing::Prepare;
using testing::Prepared;
using testing::SmallScene;

constexpr double kInf = std::numeric_limits<double>::infinity();

CameraFrame Frame(int index, int video, int in_video, const Vec3& center) {
  CameraFrame f;
  f.global_index = index;
  f.video_id = video;
  f.frame_in_video = in_video;
  f.center = center;
  return f;
}

TEST(Psi1, SwapOfOneEntry) {
  CoefficientMatrix w{Eigen::Matrix2d::Zero()};
  w.weights(0, 1) = 1.0;
  EXPECT_NEAR(Psi1(w), 1.0, 1e-15);
}

TEST(Psi1, SymmetricIsZero) {
  CoefficientMatrix w{Eigen::Matrix3d::Zero()};
  w.weights << 0, 0.5, 0.5, 0.5, 0, 0.5, 0.5, 0.5, 0;
  EXPECT_EQ(Psi1(w), 0.0);
}

TEST(Psi2, OneUnitStep) {
  const std::vector<CameraFrame> frames{Frame(0, 0, 0, Vec3::Zero()),
                                        Frame(1, 0, 1, Vec3::Zero())};
  StructureMatrix x(1, 2);
  x.point(0, 1) = Vec3(1, 0, 0);
  EXPECT_NEAR(Psi2(x, frames), 1.0, 1e-15);
  x.shapes *= 2.0;
  EXPECT_NEAR(Psi2(x, frames), 4.0, 1e-15);
}

TEST(Psi2, StaticShapeIsZeroAndSingleFramesAreFlagged) {
  const std::vector<CameraFrame> frames{Frame(0, 0, 0, Vec3::Zero()),
                                        Frame(1, 1, 0, Vec3::Zero())};
  StructureMatrix x(2, 2);
  x.shapes.setConstant(3.0);
  bool undefined = false;
  EXPECT_EQ(Psi2(x, frames, &undefined), 0.0);
  EXPECT_TRUE(undefined);

  const std::vector<CameraFrame> one_video{Frame(0, 0, 0, Vec3::Zero()),
                                           Frame(1, 0, 1, Vec3::Zero())};
  EXPECT_EQ(Psi2(x, one_video, &undefined), 0.0);
  EXPECT_FALSE(undefined);
}

TEST(SuccessivePairs, FollowFrameInVideoOrder) {
  const std::vector<CameraFrame> frames{Frame(0, 1, 1, Vec3::Zero()),
                                        Frame(1, 0, 0, Vec3::Zero()),
                                        Frame(2, 1, 0, Vec3::Zero())};
  const auto pairs = SuccessivePairs(frames);
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0], std::make_pair(2, 0));
}

TEST(Objective, ConstantShapesHaveZeroDataAndSmoothness) {
  const std::vector<CameraFrame> frames{Frame(0, 0, 0, Vec3::Zero()),
                                        Frame(1, 0, 1, Vec3::Zero()),
                                        Frame(2, 1, 0, Vec3(1, 0, 0))};
  StructureMatrix x(2, 3);
  for (int f = 0; f < 3; ++f) x.shapes.col(f) << 1, 2, 3, 4, 5, 6;
  CoefficientMatrix w{Eigen::Matrix3d::Zero()};
  w.weights << 0, 0.3, 1, 0.5, 0, 0, 0.5, 0.7, 0;
  const ObjectiveTerms t = Objective(x, w, SolverConfig{}, RayField(2, 3), frames);
  EXPECT_NEAR(t.self_expression, 0.0, 1e-24);
  EXPECT_EQ(t.psi2, 0.0);
}

// Two rays from different cameras meeting at q.
struct TwoRays {
  std::vector<CameraFrame> frames;
  RayField rays;
  Vec3 q{1.0, 1.0, 5.0};

  TwoRays() : rays(1, 2) {
    frames = {Frame(0, 0, 0, Vec3(0, 0, 0)), Frame(1, 1, 0, Vec3(2, 0, 0))};
    for (int f = 0; f < 2; ++f) {
      rays.SetCenter(f, frames[f].center);
      rays.SetDirection(0, f, (q - frames[f].center).normalized());
    }
  }
};

TEST(XStep, IntersectingRaysMeetAtIntersection) {
  TwoRays setup;
  SolveState state;
  state.structure = StructureMatrix(1, 2);
  state.weights.weights = Eigen::Matrix2d::Zero();
  state.weights.weights << 0, 1, 1, 0;
  SolverConfig config;
  config.lambda2 = 0.0;
  XStep(state, config, setup.rays, setup.frames);
  EXPECT_LT((state.structure.point(0, 0) - setup.q).norm(), 1e-9);
  EXPECT_LT((state.structure.point(0, 1) - setup.q).norm(), 1e-9);
  EXPECT_NEAR(Objective(state.structure, state.weights, config, setup.rays, setup.frames).total,
              0.0, 1e-18);
}

TEST(XStep, IntersectingRaysAgreeWithBruteForceGrid) {
  TwoRays setup;
  SolveState state;
  state.structure = StructureMatrix(1, 2);
  state.weights.weights = Eigen::Matrix2d::Zero();
  state.weights.weights << 0, 1, 1, 0;
  SolverConfig config;
  config.lambda2 = 0.0;
  XStep(state, config, setup.rays, setup.frames);
  double best = kInf;
  double best_d0 = 0.0;
  for (int i = 0; i <= 400; ++i) {
    for (int j = 0; j <= 400; ++j) {
      DepthMatrix d(1, 2);
      d.values << 3.0 + 0.01 * i, 3.0 + 0.01 * j;
      d.defined.setConstant(true);
      const double v = Objective(AssembleStructure(d, setup.rays), state.weights, config,
                                 setup.rays, setup.frames).total;
      if (v < best) {
        best = v;
        best_d0 = d.values(0, 0);
      }
    }
  }
  EXPECT_NEAR(state.depths.values(0, 0), best_d0, 0.01);
}

// Minimizer of the objective over one point's free variables, recovered
// from objective evaluations alone (exact for a quadratic).
Eigen::VectorXd QuadraticMinimizer(SolveState state, int p, const SolverConfig& config,
                                   const RayField& rays,
                                   const std::vector<CameraFrame>& frames) {
  const int n = rays.frame_count();
  const PointParameterization param = ParameterizePoint(p, config, rays);
  const Eigen::Index k = param.basis.cols();
  auto value = [&](const Eigen::VectorXd& z) {
    const Eigen::VectorXd x = param.Expand(z);
    for (int f = 0; f < n; ++f) state.structure.point(p, f) = x.segment<3>(3 * f);
    return Objective(state.structure, state.weights, config, rays, frames).total;
  };
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(k);
  const double f0 = value(zero);
  Eigen::VectorXd single(k);
  Eigen::VectorXd grad(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    Eigen::VectorXd e = zero;
    e(i) = 1.0;
    single(i) = value(e);
    grad(i) = 0.5 * (single(i) - value(-e));
  }
  Eigen::MatrixXd hess(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i; j < k; ++j) {
      Eigen::VectorXd e = zero;
      e(i) += 1.0;
      e(j) += 1.0;
      hess(i, j) = hess(j, i) =
          i == j ? single(i) + value(-Eigen::VectorXd::Unit(k, i)) - 2.0 * f0
                 : value(e) - single(i) - single(j) + f0;
    }
  }
  return param.Expand(hess.ldlt().solve(-grad));
}

TEST(XStep, MissingObservationMatchesExplicitLinearSolve) {
  const SyntheticScene scene = SmallScene(3, 2, 10, 3);
  SyntheticScene holed = scene;
  holed.observations.SetMissing(0, 4);
  holed.observations.SetMissing(0, 7);
  Prepared prep = Prepare(holed);
  SolverConfig config;
  SolveState expected_state = prep.state;
  XStep(prep.state, config, prep.rays, prep.frames);
  const Eigen::VectorXd oracle =
      QuadraticMinimizer(expected_state, 0, config, prep.rays, prep.frames);
  for (int f = 0; f < 10; ++f) {
    EXPECT_LT((prep.state.structure.point(0, f) - oracle.segment<3>(3 * f)).norm(), 1e-6);
  }
}

TEST(XStep, FullyMissingPointStaysFinite) {
  SyntheticScene scene = SmallScene(4, 2, 10, 3);
  for (int f = 0; f < 10; ++f) scene.observations.SetMissing(1, f);
  Prepared prep = Prepare(scene);
  const XStepReport report = XStep(prep.state, SolverConfig{}, prep.rays, prep.frames);
  EXPECT_TRUE(prep.state.structure.shapes.allFinite());
  EXPECT_TRUE(report.ridge_regularized);
}

TEST(XStep, StationaryUnderFiniteDifferences) {
  for (double lambda3 : {kInf, 100.0}) {
    Prepared prep = Prepare(SmallScene(5, 3, 16, 3, 0.0, 0.1));
    SolverConfig config;
    config.lambda3 = lambda3;
    XStep(prep.state, config, prep.rays, prep.frames);
    const double objective =
        Objective(prep.state.structure, prep.state.weights, config, prep.rays, prep.frames).total;
    EXPECT_LE(testing::XStepGradientNorm(prep.state, config, prep.rays, prep.frames),
              1e-5 * (1.0 + objective))
        << "lambda3 " << lambda3;
  }
}

TEST(XStep, SoftConstraintApproachesHardLimit) {
  const Prepared prep = Prepare(SmallScene(6, 3, 16, 3));
  SolveState hard = prep.state;
  SolverConfig config;
  XStep(hard, config, prep.rays, prep.frames);
  double previous = kInf;
  for (double lambda3 : {1e2, 1e4, 1e6}) {
    SolveState soft = prep.state;
    config.lambda3 = lambda3;
    XStep(soft, config, prep.rays, prep.frames);
    const double gap = (soft.structure.shapes - hard.structure.shapes).cwiseAbs().maxCoeff();
    EXPECT_LT(gap, previous);
    previous = gap;
  }
  EXPECT_LE(previous, 1e-3);
}

TEST(AdmmWStep, DecouplesWithoutSymmetryTerm) {
  Prepared prep = Prepare(SmallScene(7, 3, 16, 3));
  const CoefficientMatrix expected = SelfExpress(prep.state.structure, prep.mask);
  // Start away from the answer.
  for (int f = 0; f < 16; ++f) {
    Eigen::VectorXd col = prep.mask.allowed.col(f).cast<double>();
    prep.state.weights.weights.col(f) = col / col.sum();
  }
  prep.state.auxiliary = prep.state.weights.weights;
  prep.state.dual.setZero();
  SolverConfig config;
  config.lambda1 = 0.0;
  const WStepReport report = AdmmWStep(prep.state, config, prep.mask);
  EXPECT_TRUE(report.converged);
  EXPECT_LE(report.max_consensus_gap, 1e-4);
  EXPECT_LT((prep.state.weights.weights - expected.weights).cwiseAbs().maxCoeff(), 1e-5);
  const double fp = 16.0 * 3.0;
  EXPECT_NEAR(SelfExpressionError(prep.state.structure, prep.state.weights) / fp,
              SelfExpressionError(prep.state.structure, expected) / fp, 1e-6);
}

TEST(AdmmWStep, TwoFramesSwap) {
  SolveState state;
  state.structure = StructureMatrix(1, 2);
  state.structure.point(0, 1) = Vec3(1, 2, 3);
  state.weights.weights = Eigen::Matrix2d::Constant(0.5);
  state.auxiliary = state.weights.weights;
  state.dual = Eigen::Matrix2d::Zero();
  const SupportMask mask = SupportMask::Build({0, 1}, true);
  AdmmWStep(state, SolverConfig{}, mask);
  Eigen::Matrix2d swap;
  swap << 0, 1, 1, 0;
  EXPECT_LT((state.weights.weights - swap).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(AdmmWStep, SymmetryTermLowersPsi1OnLine) {
  SolveState base;
  base.structure = StructureMatrix(1, 3);
  for (int f = 0; f < 3; ++f) base.structure.point(0, f) = Vec3(0.1 * f, 0, 0);
  const SupportMask mask = SupportMask::Build({0, 1, 2}, true);
  InitializeWeights(base, mask, 1);
  SolveState plain = base;
  SolveState coupled = base;
  SolverConfig config;
  config.lambda1 = 0.0;
  AdmmWStep(plain, config, mask);
  config.lambda1 = 1.0;
  AdmmWStep(coupled, config, mask);
  EXPECT_LT(Psi1(coupled.weights), Psi1(plain.weights) - 1e-6);
}

TEST(FitRayPair, SkewRays) {
  RayField rays(1, 2);
  rays.SetCenter(0, Vec3(0, 0, 0));
  rays.SetCenter(1, Vec3(0, 0, 1));
  rays.SetDirection(0, 0, Vec3(1, 0, 0));
  rays.SetDirection(0, 1, Vec3(0, 1, 0));
  const PairFit fit = FitRayPair(rays, 0, 1);
  EXPECT_NEAR(fit.cost, 1.0, 1e-12);
  EXPECT_NEAR(fit.depth_f(0), 0.0, 1e-12);
  EXPECT_NEAR(fit.depth_j(0), 0.0, 1e-12);
}

TEST(FitRayPair, DivergentPairIsInfinite) {
  RayField rays(1, 2);
  rays.SetCenter(0, Vec3(0, 0, 0));
  rays.SetCenter(1, Vec3(2, 0, 0));
  rays.SetDirection(0, 0, Vec3(-1, 0, 1).normalized());
  rays.SetDirection(0, 1, Vec3(1, 0, 1).normalized());
  EXPECT_TRUE(std::isinf(FitRayPair(rays, 0, 1).cost));
}

TEST(InitializeDepths, IntersectingBundlesRecoverIntersections) {
  const std::vector<Vec3> points{Vec3(0, 0, 5), Vec3(1, -1, 6), Vec3(-1, 0.5, 4)};
  std::vector<CameraFrame> frames{Frame(0, 0, 0, Vec3(0, 0, 0)),
                                  Frame(1, 1, 0, Vec3(3, 0, 0))};
  RayField rays(3, 2);
  for (int f = 0; f < 2; ++f) {
    rays.SetCenter(f, frames[f].center);
    for (int p = 0; p < 3; ++p) {
      rays.SetDirection(p, f, (points[p] - frames[f].center).normalized());
    }
  }
  const DepthInitialization init = InitializeDepths(rays, frames);
  EXPECT_NEAR(init.distance(0, 1), 0.0, 1e-20);
  EXPECT_EQ(init.partner[0], 1);
  const StructureMatrix x = InitialStructure(init, rays);
  for (int p = 0; p < 3; ++p) {
    for (int f = 0; f < 2; ++f) EXPECT_LT((x.point(p, f) - points[p]).norm(), 1e-9);
  }
}

TEST(InitializeDepths, DivergentPairsFallBackToUnitDepth) {
  std::vector<CameraFrame> frames{Frame(0, 0, 0, Vec3(0, 0, 0)),
                                  Frame(1, 1, 0, Vec3(2, 0, 0))};
  RayField rays(1, 2);
  rays.SetCenter(0, frames[0].center);
  rays.SetCenter(1, frames[1].center);
  rays.SetDirection(0, 0, Vec3(-1, 0, 1).normalized());
  rays.SetDirection(0, 1, Vec3(1, 0, 1).normalized());
  const DepthInitialization init = InitializeDepths(rays, frames);
  EXPECT_TRUE(init.fallback);
  EXPECT_EQ(init.partner[0], -1);
  EXPECT_EQ(init.depths.values(0, 0), 1.0);
}

TEST(NormalizeScale, Examples) {
  const std::vector<CameraFrame> two{Frame(0, 0, 0, Vec3(0, 0, 0)),
                                     Frame(1, 1, 0, Vec3(2, 0, 0))};
  const ScaledFrames scaled = NormalizeScale(two);
  EXPECT_NEAR(scaled.factor, 0.5, 1e-15);
  EXPECT_NEAR((scaled.frames[0].center - scaled.frames[1].center).norm(), 1.0, 1e-15);
  EXPECT_NEAR(NormalizeScale(scaled.frames).factor, 1.0, 1e-12);

  const std::vector<CameraFrame> same{Frame(0, 0, 0, Vec3(1, 1, 1)),
                                      Frame(1, 1, 0, Vec3(1, 1, 1))};
  EXPECT_THROW(NormalizeScale(same), Error);
}

TEST(Solve, SingleCameraIsInfeasible) {
  ProceduralMotionSpec spec;
  spec.point_count = 2;
  spec.sample_count = 10;
  RigSpec rig;
  rig.camera_count = 1;
  rig.mode = RigMode::kHandheld;
  CorruptionSpec corruption;
  corruption.consecutive_exclusion = false;
  const SyntheticScene scene = Generate(ProceduralMotion(spec), rig, corruption);
  try {
    Solve(scene.observations, scene.frames, SolverConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::kInfeasible);
  }
}

TEST(Solve, ConfigValidation) {
  SolverConfig config;
  config.rho = -1.0;
  EXPECT_THROW(config.Validate(), Error);
  config = SolverConfig{};
  config.lambda3 = 0.0;
  EXPECT_THROW(config.Validate(), Error);
}

TEST(Solve, TraceIsMonotoneAndReconstructionIsAccurate) {
  const SyntheticScene scene = SmallScene(8, 3, 24, 3);
  const SolveState state = Solve(scene.observations, scene.frames, SolverConfig{});
  for (std::size_t i = 1; i < state.block_trace.size(); ++i) {
    EXPECT_LE(state.block_trace[i], state.block_trace[i - 1] + 1e-9) << i;
  }
  for (std::size_t i = 1; i < state.objective_trace.size(); ++i) {
    EXPECT_LE(state.objective_trace[i], state.objective_trace[i - 1] + 1e-9) << i;
  }
  const double err = (state.structure.shapes - scene.ground_truth.shapes).cwiseAbs().maxCoeff();
  EXPECT_LT(err, 0.05 * scene.motion_scale);
  EXPECT_LE((state.weights.weights - state.auxiliary).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Solve, MetricScaleInvariance) {
  const SyntheticScene scene = SmallScene(9, 2, 16, 3);
  std::vector<CameraFrame> big = scene.frames;
  for (CameraFrame& f : big) f.center *= 10.0;
  SolverConfig config;
  config.outer_max = 5;
  const SolveState a = Solve(scene.observations, scene.frames, config);
  const SolveState b = Solve(scene.observations, big, config);
  EXPECT_LT((b.structure.shapes - 10.0 * a.structure.shapes).cwiseAbs().maxCoeff(),
            1e-9 * 10.0 * a.structure.shapes.cwiseAbs().maxCoeff());
}

TEST(Solve, DeterministicAcrossRuns) {
  const SyntheticScene scene = SmallScene(10, 2, 16, 3);
  SolverConfig config;
  config.outer_max = 5;
  const SolveState a = Solve(scene.observations, scene.frames, config);
  const SolveState b = Solve(scene.observations, scene.frames, config);
  EXPECT_EQ(a.structure.shapes, b.structure.shapes);
  EXPECT_EQ(a.weights.weights, b.weights.weights);
}

}  // namespace
}  // namespace dynrecon
