#include "dynrecon/reconstructability.hpp"

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/SVD>

namespace dynrecon {

LinearSystem BuildSystem(const std::vector<Vec3>& rays,
                         const CoefficientMatrix& w,
                         const Eigen::Matrix3Xd& ground_truth) {
  const Eigen::Index n = static_cast<Eigen::Index>(rays.size());
  DYNRECON_CHECK(w.weights.rows() == n && w.weights.cols() == n &&
                     ground_truth.cols() == n,
                 ErrorCategory::kInput, "analysis dimension mismatch");
  const Eigen::MatrixXd residual_op =
      Eigen::MatrixXd::Identity(n, n) - w.weights;
  const Eigen::MatrixXd m = residual_op * residual_op.transpose();
  const Eigen::Matrix3Xd projected = ground_truth * m;

  LinearSystem sys;
  sys.a.resize(n, n);
  sys.b.resize(n);
  for (Eigen::Index f = 0; f < n; ++f) {
    for (Eigen::Index j = 0; j < n; ++j) sys.a(f, j) = m(f, j) * rays[j].dot(rays[f]);
    sys.b(f) = rays[f].dot(projected.col(f));
  }
  return sys;
}

double SystemCondition(const Eigen::MatrixXd& a) {
  DYNRECON_CHECK(a.rows() == a.cols(), ErrorCategory::kInput,
                 "system condition needs a square matrix");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const auto& sigma = svd.singularValues();
  const double largest = sigma(0);
  const double smallest = sigma(sigma.size() - 1);
  if (!(largest > 0.0) || smallest < 1e-12 * largest) {
    return std::numeric_limits<double>::infinity();
  }
  return 1.0 / smallest;
}

ErrorSolution ErrorVector(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  DYNRECON_CHECK(a.rows() == a.cols() && a.rows() == b.size(),
                 ErrorCategory::kInput, "error vector dimension mismatch");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sigma = svd.singularValues();
  const double largest = sigma(0);
  const double smallest = sigma(sigma.size() - 1);

  ErrorSolution out;
  out.singular = !(largest > 0.0) || smallest < 1e-12 * largest;
  if (out.singular) {
    svd.setThreshold(1e-12);
    out.l = svd.solve(b);
    out.bound = b.norm() == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  } else {
    out.l = svd.solve(b);
    out.bound = b.norm() / smallest;
  }
  out.norm = out.l.norm();
  return out;
}

double Residual(const StructureMatrix& ground_truth, const CoefficientMatrix& w) {
  const Eigen::Index n = ground_truth.shapes.cols();
  DYNRECON_CHECK(w.weights.rows() == n && w.weights.cols() == n,
                 ErrorCategory::kInput, "residual dimension mismatch");
  const double pf = static_cast<double>(ground_truth.point_count()) * n;
  return (ground_truth.shapes - ground_truth.shapes * w.weights).norm() / pf;
}

ReconstructabilityReport Analyze(const std::vector<Vec3>& rays,
                                 const CoefficientMatrix& w,
                                 const Eigen::Matrix3Xd& ground_truth) {
  const LinearSystem sys = BuildSystem(rays, w, ground_truth);
  ReconstructabilityReport report;
  report.a_matrix = sys.a;
  report.b_vector = sys.b;
  const ErrorSolution sol = ErrorVector(sys.a, sys.b);
  report.error_vector = sol.l;
  report.singular = sol.singular;
  report.system_condition = SystemCondition(sys.a);
  report.error_bound = sol.bound;
  StructureMatrix single{Eigen::MatrixXd(ground_truth)};
  report.residual_per_point = Residual(single, w);
  return report;
}

std::vector<ReconstructabilityReport> AnalyzePoints(
    const RayField& rays, const CoefficientMatrix& w,
    const StructureMatrix& ground_truth) {
  DYNRECON_CHECK(rays.point_count() == ground_truth.point_count() &&
                     rays.frame_count() == ground_truth.frame_count(),
                 ErrorCategory::kInput, "analysis dimension mismatch");
  std::vector<ReconstructabilityReport> reports;
  for (int p = 0; p < rays.point_count(); ++p) {
    std::vector<Vec3> dirs(rays.frame_count());
    Eigen::Matrix3Xd truth(3, rays.frame_count());
    for (int f = 0; f < rays.frame_count(); ++f) {
      DYNRECON_CHECK(rays.defined(p, f), ErrorCategory::kInput,
                     "analysis needs every observation (point " +
                         std::to_string(p) + ", frame " + std::to_string(f) + ")");
      dirs[f] = rays.direction(p, f);
      truth.col(f) = ground_truth.point(p, f);
    }
    reports.push_back(Analyze(dirs, w, truth));
  }
  return reports;
}

FilterWeights MakeFilterWeights(const std::vector<double>& taps, int frame_count) {
  const int m = static_cast<int>(taps.size());
  DYNRECON_CHECK(m >= 2, ErrorCategory::kInput, "a filter needs at least two taps");
  DYNRECON_CHECK(frame_count > m, ErrorCategory::kInput,
                 "frame count must exceed the number of taps");
  int pivot = 0;
  for (int i = 1; i < m; ++i) {
    if (std::abs(taps[i]) > std::abs(taps[pivot])) pivot = i;
  }
  DYNRECON_CHECK(taps[pivot] != 0.0, ErrorCategory::kInput, "all-zero filter");

  const int positions = frame_count - m + 1;
  FilterWeights out;
  out.g = Eigen::MatrixXd::Zero(frame_count, positions);
  out.w.weights = Eigen::MatrixXd::Zero(frame_count, frame_count);
  for (int k = 0; k < positions; ++k) {
    const int represented = k + pivot;
    for (int i = 0; i < m; ++i) {
      out.g(k + i, k) = taps[i];
      if (i != pivot) out.w.weights(k + i, represented) = -taps[i] / taps[pivot];
    }
  }
  return out;
}

}  // namespace dynrecon
