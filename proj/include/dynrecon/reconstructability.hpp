#pragma once

#include <vector>

#include <Eigen/Core>

#include "dynrecon/geometry.hpp"
#include "dynrecon/simplex_coding.hpp"

namespace dynrecon {

/// Error analysis of a single point tracked across F frames, assuming the
/// weights W are known and fixed.
///
/// With X_f = X*_f + l_f r_f, minimizing ||X (I - W)||^2 over l gives the
/// linear system A l = b where
///   A(f, j) = [(I - W)(I - W)^T](f, j) * r_j^T r_f
///   b(f)    = r_f^T X* (I - W) (I - W)(f, :)^T
struct ReconstructabilityReport {
  Eigen::MatrixXd a_matrix;
  Eigen::VectorXd b_vector;
  Eigen::VectorXd error_vector;
  double system_condition = 0.0;  // 1 / sigma_min(A); +inf past the cutoff
  double error_bound = 0.0;       // ||A^-1||_2 ||b||_2
  double residual_per_point = 0.0;
  bool singular = false;
};

struct LinearSystem {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
};

/// `rays` holds the F unit directions of one point; `ground_truth` is the
/// 3 x F trajectory of that point.
LinearSystem BuildSystem(const std::vector<Vec3>& rays,
                         const CoefficientMatrix& w,
                         const Eigen::Matrix3Xd& ground_truth);

struct ErrorSolution {
  Eigen::VectorXd l;
  double norm = 0.0;
  double bound = 0.0;
  bool singular = false;  // least-norm solution returned
};

/// Solves A l = b. When sigma_min < 1e-12 sigma_max the least-norm solution
/// is returned and the bound is infinite.
ErrorSolution ErrorVector(const Eigen::MatrixXd& a, const Eigen::VectorXd& b);

/// 1 / sigma_min(A), or +inf when sigma_min < 1e-12 sigma_max.
double SystemCondition(const Eigen::MatrixXd& a);

/// (1 / PF) ||X* (I - W)||_F.
double Residual(const StructureMatrix& ground_truth, const CoefficientMatrix& w);

/// Single-point analysis bundled into one report.
ReconstructabilityReport Analyze(const std::vector<Vec3>& rays,
                                 const CoefficientMatrix& w,
                                 const Eigen::Matrix3Xd& ground_truth);

/// Runs the single-point analysis for every point of `rays`. Every entry of
/// `rays` must be defined.
std::vector<ReconstructabilityReport> AnalyzePoints(
    const RayField& rays, const CoefficientMatrix& w,
    const StructureMatrix& ground_truth);

/// High-pass filter bank g = [g_M, ..., g_1] laid out as the banded matrix G
/// (F x (F - M + 1)), and the equivalent fixed weights: for each filter
/// position the largest-magnitude tap marks the represented frame and the
/// remaining taps, divided by -pivot, become its weights. Boundary frames
/// without a filter keep a zero column.
struct FilterWeights {
  Eigen::MatrixXd g;
  CoefficientMatrix w;
};
FilterWeights MakeFilterWeights(const std::vector<double>& taps, int frame_count);

}  // namespace dynrecon
