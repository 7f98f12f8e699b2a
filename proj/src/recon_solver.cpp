#include "dynrecon/recon_solver.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <tuple>

#include <Eigen/Cholesky>

namespace dynrecon {

SolverConfig SolverConfig::ForNoisyData() {
  SolverConfig config;
  config.lambda3 = 100.0;
  return config;
}

void SolverConfig::Validate() const {
  DYNRECON_CHECK(lambda1 >= 0.0 && lambda2 >= 0.0, ErrorCategory::kInput,
                 "lambda1 and lambda2 must be nonnegative");
  DYNRECON_CHECK(lambda3 > 0.0, ErrorCategory::kInput,
                 "lambda3 must be positive (or infinite)");
  DYNRECON_CHECK(rho > 0.0 && std::isfinite(rho), ErrorCategory::kInput,
                 "rho must be positive");
  DYNRECON_CHECK(outer_max >= 1 && admm_max >= 1, ErrorCategory::kInput,
                 "iteration caps must be positive");
  DYNRECON_CHECK(outer_rel_tol > 0.0 && admm_abs_tol > 0.0 &&
                     admm_rel_tol > 0.0 && admm_consensus_tol > 0.0,
                 ErrorCategory::kInput, "tolerances must be positive");
}

std::vector<int> VideoOfFrame(const std::vector<CameraFrame>& frames) {
  std::vector<int> videos(frames.size());
  for (const CameraFrame* frame : FramesByIndex(frames)) {
    videos[frame->global_index] = frame->video_id;
  }
  return videos;
}

std::vector<std::pair<int, int>> SuccessivePairs(
    const std::vector<CameraFrame>& frames) {
  std::map<int, std::vector<std::pair<int, int>>> by_video;
  for (const CameraFrame& frame : frames) {
    by_video[frame.video_id].emplace_back(frame.frame_in_video, frame.global_index);
  }
  std::vector<std::pair<int, int>> pairs;
  for (auto& [video, members] : by_video) {
    std::sort(members.begin(), members.end());
    for (std::size_t k = 1; k < members.size(); ++k) {
      pairs.emplace_back(members[k - 1].second, members[k].second);
    }
  }
  return pairs;
}

double Psi2(const StructureMatrix& structure,
            const std::vector<CameraFrame>& frames, bool* undefined) {
  const auto pairs = SuccessivePairs(frames);
  if (undefined != nullptr) *undefined = pairs.empty();
  if (pairs.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [f, g] : pairs) {
    sum += (structure.shapes.col(f) - structure.shapes.col(g)).squaredNorm();
  }
  return sum / static_cast<double>(pairs.size());
}

double Psi1(const CoefficientMatrix& w) {
  const double f = static_cast<double>(w.weights.rows());
  return (w.weights - w.weights.transpose()).squaredNorm() / f;
}

Eigen::MatrixXd ResidualOperator(const CoefficientMatrix& w) {
  const Eigen::Index n = w.weights.rows();
  std::vector<Eigen::Index> kept;
  for (Eigen::Index f = 0; f < n; ++f) {
    if ((w.weights.col(f).array() != 0.0).any()) kept.push_back(f);
  }
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(kept.size()));
  for (std::size_t k = 0; k < kept.size(); ++k) {
    e.col(k) = -w.weights.col(kept[k]);
    e(kept[k], k) += 1.0;
  }
  return e;
}

namespace {

double RayTerm(const StructureMatrix& structure, const RayField& rays) {
  double sum = 0.0;
  for (int f = 0; f < rays.frame_count(); ++f) {
    for (int p = 0; p < rays.point_count(); ++p) {
      if (!rays.defined(p, f)) continue;
      const Vec3 offset = structure.point(p, f) - rays.center(f);
      const Vec3& r = rays.direction(p, f);
      sum += (offset - offset.dot(r) * r).squaredNorm();
    }
  }
  return sum;
}

// Scalar coupling between frames shared by all three coordinates:
// (2/FP) E E^T + (2 lambda2 / M) * path Laplacian.
Eigen::MatrixXd CouplingMatrix(const CoefficientMatrix& w,
                               const SolverConfig& config,
                               const std::vector<CameraFrame>& frames,
                               int point_count) {
  const int n = w.frame_count();
  const Eigen::MatrixXd e = ResidualOperator(w);
  Eigen::MatrixXd s = (2.0 / (static_cast<double>(n) * point_count)) * (e * e.transpose());
  const auto pairs = SuccessivePairs(frames);
  if (config.lambda2 > 0.0 && !pairs.empty()) {
    const double weight = 2.0 * config.lambda2 / static_cast<double>(pairs.size());
    for (const auto& [f, g] : pairs) {
      s(f, f) += weight;
      s(g, g) += weight;
      s(f, g) -= weight;
      s(g, f) -= weight;
    }
  }
  return s;
}

}  // namespace

ObjectiveTerms Objective(const StructureMatrix& structure,
                         const CoefficientMatrix& w, const SolverConfig& config,
                         const RayField& rays,
                         const std::vector<CameraFrame>& frames) {
  ObjectiveTerms terms;
  const double fp =
      static_cast<double>(structure.frame_count()) * structure.point_count();
  terms.self_expression =
      (structure.shapes * ResidualOperator(w)).squaredNorm() / fp;
  terms.psi1 = Psi1(w);
  terms.psi2 = Psi2(structure, frames);
  terms.ray = RayTerm(structure, rays);
  terms.total = terms.self_expression + config.lambda1 * terms.psi1 +
                config.lambda2 * terms.psi2;
  if (std::isfinite(config.lambda3)) terms.total += config.lambda3 * terms.ray;
  return terms;
}

PointParameterization ParameterizePoint(int p, const SolverConfig& config,
                                        const RayField& rays) {
  const int n = rays.frame_count();
  const bool hard = !std::isfinite(config.lambda3);
  int k = 0;
  for (int f = 0; f < n; ++f) k += (hard && rays.defined(p, f)) ? 1 : 3;
  PointParameterization param;
  param.offset = Eigen::VectorXd::Zero(3 * n);
  param.basis = Eigen::MatrixXd::Zero(3 * n, k);
  int col = 0;
  for (int f = 0; f < n; ++f) {
    if (hard && rays.defined(p, f)) {
      param.offset.segment<3>(3 * f) = rays.center(f);
      param.basis.block<3, 1>(3 * f, col) = rays.direction(p, f);
      col += 1;
    } else {
      param.basis.block<3, 3>(3 * f, col).setIdentity();
      col += 3;
    }
  }
  return param;
}

XStepReport XStep(SolveState& state, const SolverConfig& config,
                  const RayField& rays, const std::vector<CameraFrame>& frames) {
  const int n = rays.frame_count();
  const int points = rays.point_count();
  const bool hard = !std::isfinite(config.lambda3);
  const Eigen::MatrixXd coupling =
      CouplingMatrix(state.weights, config, frames, points);

  XStepReport report;
  for (int p = 0; p < points; ++p) {
    // Per-frame blocks of the parameterization: x_f = o_f + B_f z_f.
    std::vector<Eigen::MatrixXd> blocks(n);
    std::vector<Vec3> offsets(n, Vec3::Zero());
    std::vector<int> start(n + 1, 0);
    for (int f = 0; f < n; ++f) {
      if (hard && rays.defined(p, f)) {
        blocks[f] = rays.direction(p, f);
        offsets[f] = rays.center(f);
      } else {
        blocks[f] = Eigen::Matrix3d::Identity();
      }
      start[f + 1] = start[f] + static_cast<int>(blocks[f].cols());
    }
    const int k = start[n];

    // Soft ray attachment: lambda3 ||P_perp (x_f - C_f)||^2.
    std::vector<Mat3> soft(n, Mat3::Zero());
    std::vector<Vec3> soft_linear(n, Vec3::Zero());
    if (!hard) {
      for (int f = 0; f < n; ++f) {
        if (!rays.defined(p, f)) continue;
        const Vec3& r = rays.direction(p, f);
        const Mat3 perp = Mat3::Identity() - r * r.transpose();
        soft[f] = 2.0 * config.lambda3 * perp;
        soft_linear[f] = -2.0 * config.lambda3 * perp * rays.center(f);
      }
    }

    Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(k, k);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k);
    for (int f = 0; f < n; ++f) {
      const Eigen::MatrixXd& bf = blocks[f];
      Vec3 grad_at_offset = soft[f] * offsets[f] + soft_linear[f];
      for (int g = 0; g < n; ++g) {
        const double s = coupling(f, g);
        if (s != 0.0) {
          normal.block(start[f], start[g], bf.cols(), blocks[g].cols()) +=
              s * bf.transpose() * blocks[g];
          grad_at_offset += s * offsets[g];
        }
      }
      normal.block(start[f], start[f], bf.cols(), bf.cols()) +=
          bf.transpose() * soft[f] * bf;
      rhs.segment(start[f], bf.cols()) = -bf.transpose() * grad_at_offset;
    }

    Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
    const bool singular = ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
                          ldlt.rcond() < 1e-14;
    Eigen::VectorXd z;
    if (singular) {
      const double ridge = 1e-10 * std::max(normal.trace() / k, 1e-300);
      Eigen::MatrixXd regularized = normal;
      regularized.diagonal().array() += ridge;
      z = regularized.ldlt().solve(rhs);
      report.ridge_regularized = true;
    } else {
      z = ldlt.solve(rhs);
    }
    report.normal_residual =
        std::max(report.normal_residual, (normal * z - rhs).norm());
    report.gradient_scale = std::max(report.gradient_scale, rhs.norm());

    for (int f = 0; f < n; ++f) {
      state.structure.point(p, f) =
          offsets[f] + blocks[f] * z.segment(start[f], blocks[f].cols());
    }
  }
  state.depths = ProjectDepth(state.structure, rays);
  return report;
}

namespace {

// Data Hessians (2/FP) (X_A - s_f 1^T)^T (X_A - s_f 1^T) for each column,
// restricted to its allowed atoms.
struct ColumnProblem {
  std::vector<Eigen::Index> atoms;
  Eigen::MatrixXd hessian;
};

std::vector<ColumnProblem> BuildColumnProblems(const StructureMatrix& x,
                                               const SupportMask& mask) {
  const int n = x.frame_count();
  const double scale = 2.0 / (static_cast<double>(n) * x.point_count());
  std::vector<ColumnProblem> problems(n);
  for (int f = 0; f < n; ++f) {
    ColumnProblem& prob = problems[f];
    for (int j = 0; j < n; ++j) {
      if (mask.allowed(j, f)) prob.atoms.push_back(j);
    }
    const Eigen::Index k = static_cast<Eigen::Index>(prob.atoms.size());
    Eigen::MatrixXd centered(x.shapes.rows(), k);
    for (Eigen::Index a = 0; a < k; ++a) {
      centered.col(a) = x.shapes.col(prob.atoms[a]) - x.shapes.col(f);
    }
    prob.hessian = scale * centered.transpose() * centered;
  }
  return problems;
}

bool IsFeasible(const Eigen::MatrixXd& w, const SupportMask& mask) {
  for (Eigen::Index f = 0; f < w.cols(); ++f) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < w.rows(); ++j) {
      if (w(j, f) < 0.0 || (!mask.allowed(j, f) && w(j, f) != 0.0)) return false;
      sum += w(j, f);
    }
    if (std::abs(sum - 1.0) > 1e-9) return false;
  }
  return true;
}

double WObjective(const StructureMatrix& x, const CoefficientMatrix& w,
                  double lambda1) {
  const double fp = static_cast<double>(x.frame_count()) * x.point_count();
  return SelfExpressionError(x, w) / fp + lambda1 * Psi1(w);
}

}  // namespace

void InitializeWeights(SolveState& state, const SupportMask& mask, int threads) {
  state.weights = SelfExpress(state.structure, mask, threads);
  state.auxiliary = state.weights.weights;
  state.dual = Eigen::MatrixXd::Zero(state.weights.weights.rows(),
                                     state.weights.weights.cols());
}

WStepReport AdmmWStep(SolveState& state, const SolverConfig& config,
                      const SupportMask& mask) {
  const int n = state.structure.frame_count();
  DYNRECON_CHECK(mask.frame_count() == n, ErrorCategory::kInput,
                 "support mask does not match structure");
  if (state.weights.weights.rows() != n) {
    InitializeWeights(state, mask, config.threads);
  }
  if (state.auxiliary.rows() != n) state.auxiliary = state.weights.weights;
  if (state.dual.rows() != n) state.dual = Eigen::MatrixXd::Zero(n, n);

  const std::vector<ColumnProblem> problems =
      BuildColumnProblems(state.structure, mask);

  // The iteration runs on the cost divided by its mean data curvature, so
  // rho and the stopping tolerances do not depend on the scene scale.
  double curvature = 0.0;
  int diag_count = 0;
  for (const ColumnProblem& prob : problems) {
    curvature += prob.hessian.trace();
    diag_count += static_cast<int>(prob.atoms.size());
  }
  curvature = diag_count > 0 ? curvature / diag_count : 0.0;
  if (!(curvature > 0.0)) curvature = 1.0;

  const double coupling = 4.0 * config.lambda1 / n / curvature;
  double rho = config.rho;

  const SolveState saved = state;
  const double before = WObjective(state.structure, state.weights, config.lambda1);
  const bool start_feasible = IsFeasible(state.weights.weights, mask);

  Eigen::MatrixXd w = state.weights.weights;
  Eigen::MatrixXd z = state.auxiliary;
  Eigen::MatrixXd y = state.dual / curvature;

  std::vector<Eigen::MatrixXd> hessians(n);
  for (int f = 0; f < n; ++f) {
    hessians[f] = problems[f].hessian / curvature;
    hessians[f].diagonal().array() += rho;
  }

  WStepReport report;
  for (int it = 0; it < config.admm_max; ++it) {
    // Step 1: independent simplex-constrained columns.
    ParallelFor(n, config.threads, [&](int f) {
      const ColumnProblem& prob = problems[f];
      const Eigen::Index k = static_cast<Eigen::Index>(prob.atoms.size());
      const Eigen::MatrixXd& hessian = hessians[f];
      Eigen::VectorXd linear(k);
      Eigen::VectorXd warm(k);
      for (Eigen::Index a = 0; a < k; ++a) {
        linear(a) = y(prob.atoms[a], f) - rho * z(prob.atoms[a], f);
        warm(a) = w(prob.atoms[a], f);
      }
      const SimplexQpResult qp = detail::SolveSimplexQpUnchecked(hessian, linear, &warm);
      w.col(f).setZero();
      for (Eigen::Index a = 0; a < k; ++a) w(prob.atoms[a], f) = qp.weights(a);
    });

    // Step 2: closed-form stationarity of the symmetric coupling.
    const Eigen::MatrixXd b = y + rho * w;
    const Eigen::MatrixXd z_prev = z;
    z = ((coupling + rho) * b + coupling * b.transpose()) /
        (rho * (2.0 * coupling + rho));

    // Step 3: dual ascent.
    y += rho * (w - z);

    report.iterations = it + 1;
    report.primal_residual = (w - z).norm();
    report.dual_residual = rho * (z - z_prev).norm();
    report.max_consensus_gap = (w - z).cwiseAbs().maxCoeff();
    const double eps_primal =
        n * config.admm_abs_tol + config.admm_rel_tol * std::max(w.norm(), z.norm());
    const double eps_dual = n * config.admm_abs_tol + config.admm_rel_tol * y.norm();
    if (report.primal_residual <= eps_primal && report.dual_residual <= eps_dual &&
        report.max_consensus_gap <= config.admm_consensus_tol) {
      report.converged = true;
      break;
    }
    if (config.adaptive_rho) {
      double factor = 1.0;
      if (report.primal_residual > 10.0 * report.dual_residual) factor = 2.0;
      if (report.dual_residual > 10.0 * report.primal_residual) factor = 0.5;
      if (factor != 1.0) {
        for (Eigen::MatrixXd& h : hessians) h.diagonal().array() += (factor - 1.0) * rho;
        rho *= factor;
      }
    }
  }

  state.weights.weights = w;
  state.auxiliary = z;
  state.dual = y * curvature;
  state.admm_iterations += report.iterations;
  if (!report.converged) state.flags.admm_not_converged = true;

  const double after = WObjective(state.structure, state.weights, config.lambda1);
  if (start_feasible && after > before) {
    // Keep the descent property of the alternation.
    const int iterations = state.admm_iterations;
    SolveFlags flags = state.flags;
    state = saved;
    state.admm_iterations = iterations;
    state.flags = flags;
    state.flags.w_step_rejected = true;
  }
  return report;
}

PairFit FitRayPair(const RayField& rays, int f, int j) {
  PairFit fit;
  const int points = rays.point_count();
  fit.depth_f = Eigen::VectorXd::Constant(points, std::nan(""));
  fit.depth_j = Eigen::VectorXd::Constant(points, std::nan(""));
  const Vec3 baseline = rays.center(f) - rays.center(j);
  double cost = 0.0;
  int shared = 0;
  for (int p = 0; p < points; ++p) {
    if (!rays.defined(p, f) || !rays.defined(p, j)) continue;
    const Vec3& rf = rays.direction(p, f);
    const Vec3& rj = rays.direction(p, j);
    // min ||baseline + a rf - b rj||^2
    const double c = rf.dot(rj);
    const double det = 1.0 - c * c;
    if (det < 1e-12) return PairFit{};  // parallel rays: no unique closest point
    const double u = -rf.dot(baseline);
    const double v = rj.dot(baseline);
    const double a = (u + c * v) / det;
    const double b = (c * u + v) / det;
    const double neg_tol = -1e-12 * (1.0 + baseline.norm());
    if (a < neg_tol || b < neg_tol) return PairFit{};  // divergent pair
    fit.depth_f(p) = a;
    fit.depth_j(p) = b;
    cost += (baseline + a * rf - b * rj).squaredNorm();
    ++shared;
  }
  if (shared == 0) return PairFit{};
  fit.cost = cost;
  return fit;
}

DepthInitialization InitializeDepths(const RayField& rays,
                                     const std::vector<CameraFrame>& frames) {
  const int n = rays.frame_count();
  const int points = rays.point_count();
  const std::vector<int> videos = VideoOfFrame(frames);
  DYNRECON_CHECK(std::set<int>(videos.begin(), videos.end()).size() >= 2,
                 ErrorCategory::kInfeasible,
                 "depth initialization needs at least two videos");

  DepthInitialization init;
  init.depths = DepthMatrix(points, n);
  init.distance = Eigen::MatrixXd::Constant(n, n, std::numeric_limits<double>::infinity());
  init.partner.assign(n, -1);

  std::vector<std::vector<PairFit>> fits(n, std::vector<PairFit>(n));
  for (int f = 0; f < n; ++f) {
    for (int j = f + 1; j < n; ++j) {
      if (videos[f] == videos[j]) continue;
      fits[f][j] = FitRayPair(rays, f, j);
      init.distance(f, j) = init.distance(j, f) = fits[f][j].cost;
    }
  }

  for (int f = 0; f < n; ++f) {
    int best = -1;
    double best_cost = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      if (init.distance(f, j) < best_cost) {
        best_cost = init.distance(f, j);
        best = j;
      }
    }
    Eigen::VectorXd depth = Eigen::VectorXd::Constant(points, std::nan(""));
    if (best >= 0) {
      depth = f < best ? fits[f][best].depth_f : fits[best][f].depth_j;
      init.partner[f] = best;
    } else {
      init.fallback = true;
    }
    // Observations the partner does not share take the frame's mean depth.
    double sum = 0.0;
    int count = 0;
    for (int p = 0; p < points; ++p) {
      if (rays.defined(p, f) && std::isfinite(depth(p))) {
        sum += depth(p);
        ++count;
      }
    }
    const double fill = count > 0 ? sum / count : 1.0;
    for (int p = 0; p < points; ++p) {
      if (!rays.defined(p, f)) continue;
      init.depths.values(p, f) = std::isfinite(depth(p)) ? depth(p) : fill;
      init.depths.defined(p, f) = true;
    }
  }
  return init;
}

StructureMatrix InitialStructure(const DepthInitialization& init,
                                 const RayField& rays) {
  const int n = rays.frame_count();
  const int points = rays.point_count();
  StructureMatrix x = AssembleStructure(init.depths, rays);
  Vec3 global_mean = Vec3::Zero();
  int global_count = 0;
  std::vector<Vec3> point_mean(points, Vec3::Zero());
  std::vector<int> point_count(points, 0);
  for (int p = 0; p < points; ++p) {
    for (int f = 0; f < n; ++f) {
      if (!rays.defined(p, f)) continue;
      point_mean[p] += x.point(p, f);
      ++point_count[p];
    }
    global_mean += point_mean[p];
    global_count += point_count[p];
    if (point_count[p] > 0) point_mean[p] /= point_count[p];
  }
  if (global_count > 0) global_mean /= global_count;
  for (int p = 0; p < points; ++p) {
    for (int f = 0; f < n; ++f) {
      if (rays.defined(p, f)) continue;
      const int partner = init.partner[f];
      if (partner >= 0 && rays.defined(p, partner)) {
        x.point(p, f) = x.point(p, partner);
      } else {
        x.point(p, f) = point_count[p] > 0 ? point_mean[p] : global_mean;
      }
    }
  }
  return x;
}

ScaledFrames NormalizeScale(const std::vector<CameraFrame>& frames) {
  std::set<std::tuple<double, double, double>> unique;
  for (const CameraFrame& frame : frames) {
    unique.emplace(frame.center.x(), frame.center.y(), frame.center.z());
  }
  DYNRECON_CHECK(unique.size() >= 2, ErrorCategory::kInput,
                 "scale normalization needs two distinct camera centers");
  std::vector<Vec3> centers;
  for (const auto& [x, y, z] : unique) centers.emplace_back(x, y, z);
  double sum = 0.0;
  double pairs = 0.0;
  for (std::size_t a = 0; a < centers.size(); ++a) {
    for (std::size_t b = a + 1; b < centers.size(); ++b) {
      sum += (centers[a] - centers[b]).norm();
      pairs += 1.0;
    }
  }
  ScaledFrames out;
  out.factor = pairs / sum;
  out.frames = frames;
  for (CameraFrame& frame : out.frames) frame.center *= out.factor;
  return out;
}

void RunStage(SolveState& state, const SolverConfig& config,
              const RayField& rays, const std::vector<CameraFrame>& frames,
              const SupportMask& mask) {
  double previous = Objective(state.structure, state.weights, config, rays, frames).total;
  for (int it = 0; it < config.outer_max; ++it) {
    const XStepReport xr = XStep(state, config, rays, frames);
    if (xr.ridge_regularized) state.flags.ridge_regularized = true;
    state.block_trace.push_back(
        Objective(state.structure, state.weights, config, rays, frames).total);

    AdmmWStep(state, config, mask);
    const double current =
        Objective(state.structure, state.weights, config, rays, frames).total;
    state.block_trace.push_back(current);
    state.objective_trace.push_back(current);
    ++state.outer_iterations;

    const double change = std::abs(previous - current) /
                          std::max(std::abs(previous), 1e-300);
    previous = current;
    if (change < config.outer_rel_tol) return;
  }
  state.flags.outer_not_converged = true;
}

SolveState Solve(const ObservationSet& obs,
                 const std::vector<CameraFrame>& frames,
                 const SolverConfig& config) {
  config.Validate();
  ValidateFrames(frames);
  const int n = obs.frame_count();
  DYNRECON_CHECK(static_cast<int>(frames.size()) == n, ErrorCategory::kInput,
                 "frame list does not match observations");
  DYNRECON_CHECK(n >= 3, ErrorCategory::kInfeasible, "need at least 3 frames");
  DYNRECON_CHECK(obs.point_count() >= 1, ErrorCategory::kInput,
                 "need at least one point");

  const std::vector<int> videos = VideoOfFrame(frames);
  const std::size_t video_count = std::set<int>(videos.begin(), videos.end()).size();
  DYNRECON_CHECK(!(config.same_video_exclusion && video_count < 2),
                 ErrorCategory::kInfeasible,
                 "a single video cannot be reconstructed with same-video "
                 "exclusion: every weight column would be empty");
  const SupportMask mask = SupportMask::Build(videos, config.same_video_exclusion);
  try {
    mask.Validate(2);
  } catch (const Error& e) {
    throw Error(ErrorCategory::kInfeasible, e.what());
  }

  const ScaledFrames scaled = NormalizeScale(frames);
  const RayField rays = ComputeRays(scaled.frames, obs);

  SolveState state;
  const DepthInitialization init = InitializeDepths(rays, scaled.frames);
  state.flags.init_fallback = init.fallback;
  state.structure = InitialStructure(init, rays);
  state.depths = ProjectDepth(state.structure, rays);
  Psi2(state.structure, scaled.frames, &state.flags.psi2_undefined);

  InitializeWeights(state, mask, config.threads);
  AdmmWStep(state, config, mask);
  state.objective_trace.push_back(
      Objective(state.structure, state.weights, config, rays, scaled.frames).total);
  state.block_trace.push_back(state.objective_trace.back());

  RunStage(state, config, rays, scaled.frames, mask);
  if (config.second_stage && config.lambda2 > 0.0) {
    SolverConfig stage2 = config;
    stage2.lambda2 = 0.0;
    RunStage(state, stage2, rays, scaled.frames, mask);
  }

  state.structure.shapes /= scaled.factor;
  state.depths.values /= scaled.factor;
  return state;
}

}  // namespace dynrecon
