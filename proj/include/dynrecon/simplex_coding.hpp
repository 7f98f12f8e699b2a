#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "dynrecon/geometry.hpp"

namespace dynrecon {

/// allowed(j, f) is true iff shape j may carry weight when representing
/// shape f. The diagonal is always false.
struct SupportMask {
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> allowed;

  int frame_count() const { return static_cast<int>(allowed.rows()); }

  /// Off-diagonal support, optionally excluding pairs from the same video.
  /// `video_of_frame[f]` is the video id of global frame f.
  static SupportMask Build(const std::vector<int>& video_of_frame,
                           bool same_video_exclusion);

  /// Throws Error(kConstraint) naming the first column with fewer than
  /// `min_per_column` allowed entries.
  void Validate(int min_per_column = 2) const;
};

/// F x F column-stochastic weights; column f represents shape f.
struct CoefficientMatrix {
  Eigen::MatrixXd weights;

  int frame_count() const { return static_cast<int>(weights.rows()); }
};

/// Minimizes 0.5 w^T H w + c^T w over the probability simplex, where H is
/// symmetric positive semidefinite. The caller supplies the problem already
/// compressed to the allowed atoms.
struct SimplexQpResult {
  Eigen::VectorXd weights;
  double objective = 0.0;  // 0.5 w^T H w + c^T w
  int iterations = 0;
  bool used_fallback = false;
};

/// Active-set solver. Starts from `warm_start` when it is feasible, otherwise
/// from the best vertex (lowest index on ties). Falls back to accelerated
/// projected gradient when the active-set budget (10 * n iterations) runs out.
SimplexQpResult SolveSimplexQp(const Eigen::MatrixXd& hessian,
                               const Eigen::VectorXd& linear,
                               const Eigen::VectorXd* warm_start = nullptr);

namespace detail {
/// SolveSimplexQp without input validation; callers guarantee finite,
/// symmetric positive semidefinite data of matching size.
SimplexQpResult SolveSimplexQpUnchecked(const Eigen::MatrixXd& hessian,
                                        const Eigen::VectorXd& linear,
                                        const Eigen::VectorXd* warm_start);
}  // namespace detail

/// Euclidean projection onto {w >= 0, sum w = 1}.
Eigen::VectorXd ProjectToSimplex(const Eigen::VectorXd& v);

/// min ||target - D w||^2 over the simplex restricted to `allowed`; returns a
/// full-length vector with exact zeros on disallowed atoms.
Eigen::VectorXd SimplexCode(const Eigen::VectorXd& target,
                            const Eigen::MatrixXd& dictionary,
                            const std::vector<bool>& allowed,
                            const Eigen::VectorXd* warm_start = nullptr);

/// Column-wise self-expression of the dictionary under `mask`.
/// Columns are independent; `threads` > 1 evaluates them concurrently.
CoefficientMatrix SelfExpress(const StructureMatrix& dictionary,
                              const SupportMask& mask, int threads = 1);

/// Number of entries strictly above `eps` in each column.
std::vector<int> SparsityProfile(const CoefficientMatrix& w, double eps);

/// Squared Frobenius norm ||X - X W||^2.
double SelfExpressionError(const StructureMatrix& x, const CoefficientMatrix& w);

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
/// handled by exactly one worker.
template <typename Fn>
void ParallelFor(int n, int threads, Fn&& fn);

}  // namespace dynrecon

#include "dynrecon/parallel_impl.hpp"
