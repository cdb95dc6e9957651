#pragma once

// Small dense semidefinite programs over a product of real symmetric PSD
// blocks:
//
//   minimize    sum_b <C_b, X_b>
//   subject to  sum_b <A_ib, X_b> = b_i,   X_b >= 0.
//
// Scalar nonnegative variables are 1 x 1 blocks. Solved with an infeasible
// primal-dual path-following method (HKM direction, Mehrotra
// predictor-corrector).

#include <cstddef>
#include <string>
#include <vector>

#include "cpsofdm/dsp.hpp"

namespace cpsofdm {

/// One block of one constraint. `factor` optionally holds a low-rank
/// factorization matrix = factor diag(weights) factor^T, used to speed up
/// the Schur complement.
struct ConicTerm {
  std::size_t block = 0;
  RealMat matrix;
  RealMat factor;
  RealVec weights;
};

struct ConicConstraint {
  std::vector<ConicTerm> terms;
  double rhs = 0;
};

struct ConicProblem {
  std::vector<std::size_t> block_sizes;
  std::vector<RealMat> objective;  // C_b, empty matrix means zero
  std::vector<ConicConstraint> constraints;

  std::size_t add_block(std::size_t size);
  /// Adds sum_t <A_t, X_{b_t}> = rhs and returns its index.
  std::size_t add_constraint(std::vector<ConicTerm> terms, double rhs);
};

ConicTerm dense_term(std::size_t block, RealMat matrix);
/// Single entry term: coefficient on X(i, j) (symmetrized when i != j).
ConicTerm entry_term(std::size_t block, std::size_t size, std::size_t i, std::size_t j,
                     double coefficient);
/// matrix = factor diag(weights) factor^T.
ConicTerm factored_term(std::size_t block, RealMat factor, RealVec weights);

struct ConicOptions {
  double tolerance = 1e-10;  // relative gap and infeasibilities
  // A run that stalls with every measure below this is reported as
  // kNearOptimal; the gap floor of double precision sits around 1e-10.
  double near_tolerance = 1e-8;
  int max_iterations = 150;
  double step_factor = 0.98;
};

enum class ConicStatus { kOptimal, kNearOptimal, kInfeasible, kStalled };

struct ConicSolution {
  ConicStatus status = ConicStatus::kStalled;
  std::vector<RealMat> x;
  std::vector<RealMat> z;
  RealVec y;
  double primal_objective = 0;
  double dual_objective = 0;
  double relative_gap = 0;
  double primal_infeasibility = 0;
  double dual_infeasibility = 0;
  int iterations = 0;
};

/// Runs the interior-point method. Never throws on non-convergence; the
/// status and residuals report what happened.
ConicSolution solve_conic(const ConicProblem& problem, const ConicOptions& options = {});

/// Throws kInfeasible or kNumeric unless the solution is optimal.
void require_optimal(const ConicSolution& solution, const std::string& context);

/// Real 2S x 2S image [[Re F, -Im F], [Im F, Re F]] of a Hermitian matrix.
RealMat real_embedding(const ComplexMat& f);

/// Hermitian X recovered from a real PSD block Z of size 2S:
/// X = (Z11 + Z22)/2 + j (Z21 - Z12)/2, so that tr(F X) = <real_embedding(F)/2, Z>.
ComplexMat complex_from_embedding(const RealMat& z);

}  // namespace cpsofdm
