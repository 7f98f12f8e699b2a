#include "dynrecon/simplex_coding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

namespace dynrecon {

SupportMask SupportMask::Build(const std::vector<int>& video_of_frame,
                               bool same_video_exclusion) {
  const int n = static_cast<int>(video_of_frame.size());
  SupportMask mask;
  mask.allowed.resize(n, n);
  for (int f = 0; f < n; ++f) {
    for (int j = 0; j < n; ++j) {
      mask.allowed(j, f) =
          j != f &&
          !(same_video_exclusion && video_of_frame[j] == video_of_frame[f]);
    }
  }
  return mask;
}

void SupportMask::Validate(int min_per_column) const {
  DYNRECON_CHECK(allowed.rows() == allowed.cols(), ErrorCategory::kInput,
                 "support mask must be square");
  for (int f = 0; f < allowed.cols(); ++f) {
    DYNRECON_CHECK(!allowed(f, f), ErrorCategory::kConstraint,
                   "support mask allows frame " + std::to_string(f) +
                       " to represent itself");
    const int count = static_cast<int>(allowed.col(f).count());
    DYNRECON_CHECK(count >= min_per_column, ErrorCategory::kConstraint,
                   "column " + std::to_string(f) + " of the support mask has " +
                       std::to_string(count) + " allowed atoms");
  }
}

Eigen::VectorXd ProjectToSimplex(const Eigen::VectorXd& v) {
  const Eigen::Index n = v.size();
  std::vector<double> sorted(v.data(), v.data() + n);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double shift = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    cumulative += sorted[i];
    const double candidate = (cumulative - 1.0) / static_cast<double>(i + 1);
    if (sorted[i] - candidate > 0.0) shift = candidate;
  }
  return (v.array() - shift).max(0.0).matrix();
}

namespace {

double QpObjective(const Eigen::MatrixXd& h, const Eigen::VectorXd& c,
                   const Eigen::VectorXd& w) {
  return 0.5 * w.dot(h * w) + c.dot(w);
}

bool IsFeasible(const Eigen::VectorXd& w, Eigen::Index n) {
  return w.size() == n && w.allFinite() && w.minCoeff() >= -1e-12 &&
         std::abs(w.sum() - 1.0) <= 1e-9;
}

// Accelerated projected gradient; only used when the active-set budget is
// exhausted.
Eigen::VectorXd ProjectedGradient(const Eigen::MatrixXd& h,
                                  const Eigen::VectorXd& c,
                                  Eigen::VectorXd w) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h, Eigen::EigenvaluesOnly);
  const double lipschitz = std::max(eig.eigenvalues().maxCoeff(), 1e-300);
  Eigen::VectorXd y = w;
  double t = 1.0;
  for (int it = 0; it < 50000; ++it) {
    const Eigen::VectorXd next = ProjectToSimplex(y - (h * y + c) / lipschitz);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = next + ((t - 1.0) / t_next) * (next - w);
    const double change = (next - w).lpNorm<Eigen::Infinity>();
    w = next;
    t = t_next;
    if (change < 1e-15) break;
  }
  return w;
}

}  // namespace

SimplexQpResult SolveSimplexQp(const Eigen::MatrixXd& hessian,
                               const Eigen::VectorXd& linear,
                               const Eigen::VectorXd* warm_start) {
  const Eigen::Index n = linear.size();
  DYNRECON_CHECK(n >= 1, ErrorCategory::kConstraint, "empty simplex");
  DYNRECON_CHECK(hessian.rows() == n && hessian.cols() == n,
                 ErrorCategory::kInput, "hessian/linear size mismatch");
  DYNRECON_CHECK(hessian.allFinite() && linear.allFinite(),
                 ErrorCategory::kInput, "non-finite simplex QP data");
  return detail::SolveSimplexQpUnchecked(hessian, linear, warm_start);
}

SimplexQpResult detail::SolveSimplexQpUnchecked(const Eigen::MatrixXd& hessian,
                                                const Eigen::VectorXd& linear,
                                                const Eigen::VectorXd* warm_start) {
  const Eigen::Index n = linear.size();
  SimplexQpResult result;
  if (n == 1) {
    result.weights = Eigen::VectorXd::Ones(1);
    result.objective = QpObjective(hessian, linear, result.weights);
    return result;
  }

  const double scale =
      hessian.diagonal().cwiseAbs().maxCoeff() + linear.cwiseAbs().maxCoeff();
  const double grad_tol = 1e-12 * std::max(scale, 1e-300);

  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  if (warm_start != nullptr && IsFeasible(*warm_start, n)) {
    w = warm_start->cwiseMax(0.0);
    w /= w.sum();
  } else {
    Eigen::Index best = 0;
    double best_value = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      const double value = 0.5 * hessian(j, j) + linear(j);
      if (value < best_value) {
        best_value = value;
        best = j;
      }
    }
    w(best) = 1.0;
  }

  std::vector<char> in_support(n, 0);
  for (Eigen::Index j = 0; j < n; ++j) in_support[j] = w(j) > 0.0;

  const int budget = static_cast<int>(10 * n);
  bool converged = false;
  int it = 0;
  std::vector<Eigen::Index> support;
  Eigen::VectorXd grad(n);
  Eigen::MatrixXd h_face;
  Eigen::VectorXd g_face;
  Eigen::LLT<Eigen::MatrixXd> llt;
  for (; it < budget; ++it) {
    support.clear();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (in_support[j]) support.push_back(j);
    }
    grad = linear;
    for (Eigen::Index j : support) grad.noalias() += w(j) * hessian.col(j);
    const Eigen::Index k = static_cast<Eigen::Index>(support.size());

    // Search direction on the face spanned by the support, expressed in an
    // orthonormal basis of {p : sum p = 0}.
    Eigen::VectorXd step = Eigen::VectorXd::Zero(n);
    bool unbounded = false;
    if (k >= 2) {
      h_face.resize(k, k);
      g_face.resize(k);
      for (Eigen::Index a = 0; a < k; ++a) {
        g_face(a) = grad(support[a]);
        for (Eigen::Index b = 0; b < k; ++b) {
          h_face(a, b) = hessian(support[a], support[b]);
        }
      }
    }
    // Well-conditioned faces: Newton step from a Cholesky factorization.
    bool solved_face = false;
    if (k >= 2) {
      llt.compute(h_face);
      if (llt.info() == Eigen::Success) {
        const auto diag = llt.matrixLLT().diagonal();
        const double pivot_min = diag.cwiseAbs2().minCoeff();
        if (pivot_min > 1e-10 * h_face.diagonal().maxCoeff()) {
          const Eigen::VectorXd u = llt.solve(g_face);
          const Eigen::VectorXd v = llt.solve(Eigen::VectorXd::Ones(k));
          const double nu = u.sum() / v.sum();
          const Eigen::VectorXd face_step = nu * v - u;
          for (Eigen::Index a = 0; a < k; ++a) step(support[a]) = face_step(a);
          solved_face = true;
        }
      }
    }
    if (k >= 2 && !solved_face) {
      Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(k, 1);
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(ones);
      const Eigen::MatrixXd basis =
          Eigen::MatrixXd(qr.householderQ()).rightCols(k - 1);
      const Eigen::MatrixXd reduced = basis.transpose() * h_face * basis;
      const Eigen::VectorXd reduced_grad = basis.transpose() * g_face;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(reduced);
      const Eigen::VectorXd& lambda = eig.eigenvalues();
      const Eigen::MatrixXd& vecs = eig.eigenvectors();
      const double curvature_tol =
          1e-12 * std::max({lambda.cwiseAbs().maxCoeff(), scale, 1e-300});
      const Eigen::VectorXd coeffs = vecs.transpose() * reduced_grad;
      Eigen::VectorXd y = Eigen::VectorXd::Zero(k - 1);
      for (Eigen::Index i = 0; i < k - 1; ++i) {
        if (lambda(i) <= curvature_tol && std::abs(coeffs(i)) > grad_tol) {
          // Flat descent direction: follow it until a bound blocks.
          y = -coeffs(i) * vecs.col(i);
          unbounded = true;
          break;
        }
      }
      if (!unbounded) {
        for (Eigen::Index i = 0; i < k - 1; ++i) {
          if (lambda(i) > curvature_tol) y -= (coeffs(i) / lambda(i)) * vecs.col(i);
        }
      }
      const Eigen::VectorXd face_step = basis * y;
      for (Eigen::Index a = 0; a < k; ++a) step(support[a]) = face_step(a);
    }

    if (!unbounded && step.lpNorm<Eigen::Infinity>() <= 1e-13) {
      // Stationary on the face: price out the atoms outside the support.
      double mu = 0.0;
      for (Eigen::Index j : support) mu += grad(j);
      mu /= static_cast<double>(k);
      Eigen::Index entering = -1;
      double most_negative = -grad_tol;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (in_support[j]) continue;
        const double reduced_cost = grad(j) - mu;
        if (reduced_cost < most_negative) {
          most_negative = reduced_cost;
          entering = j;
        }
      }
      if (entering < 0) {
        converged = true;
        break;
      }
      in_support[entering] = 1;
      continue;
    }

    double alpha = unbounded ? std::numeric_limits<double>::infinity() : 1.0;
    Eigen::Index blocking = -1;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!in_support[j] || step(j) >= 0.0) continue;
      const double ratio = -w(j) / step(j);
      if (ratio < alpha) {
        alpha = ratio;
        blocking = j;
      }
    }
    if (!std::isfinite(alpha)) break;  // should not happen on a bounded face
    w += alpha * step;
    if (blocking >= 0) w(blocking) = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (in_support[j] && w(j) <= 0.0) {
        w(j) = 0.0;
        in_support[j] = 0;
      }
    }
    w /= w.sum();
  }

  result.iterations = it;
  if (!converged) {
    result.used_fallback = true;
    w = ProjectedGradient(hessian, linear, w);
  }
  result.weights = std::move(w);
  result.objective = QpObjective(hessian, linear, result.weights);
  return result;
}

namespace {

std::vector<Eigen::Index> AllowedIndices(const std::vector<bool>& allowed) {
  std::vector<Eigen::Index> idx;
  for (std::size_t j = 0; j < allowed.size(); ++j) {
    if (allowed[j]) idx.push_back(static_cast<Eigen::Index>(j));
  }
  return idx;
}

}  // namespace

Eigen::VectorXd SimplexCode(const Eigen::VectorXd& target,
                            const Eigen::MatrixXd& dictionary,
                            const std::vector<bool>& allowed,
                            const Eigen::VectorXd* warm_start) {
  const Eigen::Index atoms = dictionary.cols();
  DYNRECON_CHECK(static_cast<Eigen::Index>(allowed.size()) == atoms &&
                     target.size() == dictionary.rows(),
                 ErrorCategory::kInput, "simplex code dimension mismatch");
  DYNRECON_CHECK(target.allFinite() && dictionary.allFinite(),
                 ErrorCategory::kInput, "non-finite simplex code input");
  const auto idx = AllowedIndices(allowed);
  DYNRECON_CHECK(!idx.empty(), ErrorCategory::kConstraint,
                 "no allowed atoms for simplex coding");

  // With sum(w) = 1, ||t - D w|| = ||(D - t 1^T) w||, which removes the
  // constant term and the cancellation it causes.
  const Eigen::Index k = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd centered(dictionary.rows(), k);
  for (Eigen::Index a = 0; a < k; ++a) centered.col(a) = dictionary.col(idx[a]) - target;
  const Eigen::MatrixXd hessian = 2.0 * centered.transpose() * centered;

  Eigen::VectorXd warm;
  const Eigen::VectorXd* warm_ptr = nullptr;
  if (warm_start != nullptr && warm_start->size() == atoms) {
    warm.resize(k);
    for (Eigen::Index a = 0; a < k; ++a) warm(a) = (*warm_start)(idx[a]);
    warm_ptr = &warm;
  }
  const SimplexQpResult qp =
      SolveSimplexQp(hessian, Eigen::VectorXd::Zero(k), warm_ptr);

  Eigen::VectorXd out = Eigen::VectorXd::Zero(atoms);
  for (Eigen::Index a = 0; a < k; ++a) out(idx[a]) = qp.weights(a);
  return out;
}

CoefficientMatrix SelfExpress(const StructureMatrix& dictionary,
                              const SupportMask& mask, int threads) {
  const int frames = dictionary.frame_count();
  DYNRECON_CHECK(mask.frame_count() == frames, ErrorCategory::kInput,
                 "support mask does not match dictionary size");
  CoefficientMatrix out;
  out.weights = Eigen::MatrixXd::Zero(frames, frames);
  ParallelFor(frames, threads, [&](int f) {
    std::vector<bool> allowed(frames);
    for (int j = 0; j < frames; ++j) allowed[j] = mask.allowed(j, f);
    try {
      out.weights.col(f) =
          SimplexCode(dictionary.shapes.col(f), dictionary.shapes, allowed);
    } catch (const Error& e) {
      throw Error(e.category(),
                  "column " + std::to_string(f) + ": " + e.what());
    }
  });
  return out;
}

std::vector<int> SparsityProfile(const CoefficientMatrix& w, double eps) {
  DYNRECON_CHECK(eps > 0.0, ErrorCategory::kInput, "eps must be positive");
  std::vector<int> counts(w.weights.cols());
  for (Eigen::Index f = 0; f < w.weights.cols(); ++f) {
    counts[f] = static_cast<int>((w.weights.col(f).array() > eps).count());
  }
  return counts;
}

double SelfExpressionError(const StructureMatrix& x, const CoefficientMatrix& w) {
  return (x.shapes - x.shapes * w.weights).squaredNorm();
}

}  // namespace dynrecon
