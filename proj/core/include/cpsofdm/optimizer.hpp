#pragma once

// Prototype shaping design: minimize the variance of instantaneous power
// subject to bounds on out-of-subband power and noise enhancement, by a
// convex-iteration initializer followed by majorization-minimization over
// semidefinite relaxations of the lifted variable X = p p^H.

#include <cstddef>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cpsofdm/conic.hpp"
#include "cpsofdm/dsp.hpp"
#include "cpsofdm/metrics.hpp"
#include "cpsofdm/precoder.hpp"

namespace cpsofdm {

/// S x S Hermitian PSD matrix standing in for p p^H.
struct LiftedShaping {
  ComplexMat x;

  double trace() const { return x.trace().real(); }
  /// lambda_2 / lambda_1 (0 for an exact rank-one matrix).
  double rank_ratio() const;
};

struct QuarticKernel {
  std::size_t subcarriers = 0;
  ComplexMat t;          // S^2 x S^2, Hermitian
  double lambda_max = 0;  // largest eigenvalue of T
  double lambda_min = 0;  // smallest eigenvalue of T, logged only

  /// vec(X)^H T vec(X).
  double evaluate(const ComplexMat& x) const;
};

/// T = (1/N) sum_n [(sigma4 - 2 Es^2) sum_{k,m} vec(U)vec(U)^H + 2 Es^2 S_n^T (x) S_n]
/// with U = u u^H, u = C_{kM}^T e_{m,n} and S_n = sum_{k,m} U. Throws
/// kResource above `max_subcarriers`.
QuarticKernel build_quartic_kernel(const WaveformConfig& cfg, double symbol_energy,
                                   double fourth_moment, std::size_t max_subcarriers = 48);

/// Largest eigenvalue of a Hermitian matrix (dense eigensolver).
double lambda_max(const ComplexMat& t);

/// V = (E + E^H)/2, E = reshape((T - lambda I) vec(X_l)), lambda = (1 + 1e-9) lambda_max.
ComplexMat surrogate_gradient(const ComplexMat& x_l, const QuarticKernel& kernel);

/// Majorizer of f at X_l evaluated at X:
/// 2 tr(V X) + lambda ||X||_F^2 - vec(X_l)^H J vec(X_l).
double surrogate_value(const ComplexMat& x, const ComplexMat& x_l, const QuarticKernel& kernel);

/// Row i of (W_K^H (x) I_M) as a column vector r_i, so that the NEP
/// denominators are d_i = r_i^H X r_i.
ComplexMat nep_rows(std::size_t k_sub, std::size_t m_sub);

/// d_i = [(W_K^H (x) I_M) X (W_K (x) I_M)]_ii.
RealVec nep_denominators(const ComplexMat& x, std::size_t k_sub, std::size_t m_sub);
/// zeta(X) = sum 1 / d_i; +inf when some d_i <= 0.
double nep_lifted(const ComplexMat& x, std::size_t k_sub, std::size_t m_sub);

/// minimize tr(objective X) s.t. tr(X) = rho, zeta(X) <= (1 + eps) S^2 / rho,
/// optionally tr(Omega X) <= U, X >= 0.
struct ConvexSubproblem {
  ComplexMat objective;
  ComplexMat omega;                     // needed when osbep_bound is set
  std::optional<double> osbep_bound;
  double rho = 1.0;
  double epsilon = 0.0;                 // +inf drops the NEP constraint
  std::size_t k_sub = 1;
  std::size_t m_sub = 1;

  double nep_bound() const;
};

/// Conic form of the subproblem. NEP terms become 2 x 2 blocks
/// [[d_i, 1], [1, t_i]] >= 0 with sum t_i <= bound. With epsilon = 0 the
/// reciprocal-sum bound has no interior and is replaced by its equality
/// case d_i = rho / S (the trace constraint is then implied and dropped).
ConicProblem to_conic(const ConvexSubproblem& problem);

struct SubproblemResult {
  LiftedShaping x;
  double objective = 0;
  ConicSolution solver;
};

SubproblemResult solve_sdp_subproblem(const ConvexSubproblem& problem,
                                      const ConicOptions& options = {});

/// minimize w tr(Y B) + tr(Omega Y) under the NEP / trace / PSD constraints.
SubproblemResult solve_ci_subproblem(const ComplexMat& direction, double weight,
                                     const ConvexSubproblem& base,
                                     const ConicOptions& options = {});

/// Projector onto the S - 1 trailing eigenvectors of Y.
ComplexMat build_direction_matrix(const ComplexMat& y);

/// p = sqrt(lambda_1) v_1, largest-magnitude entry real positive. Throws
/// NotRankOneError when lambda_2 / lambda_1 > tol.
ComplexVec extract_rank_one(const ComplexMat& x, double rank_one_tol);

struct OptimizerParams {
  double beta = 10.0;
  double epsilon = 0.0;
  double weight = 1000.0;
  double ci_tol = 1e-8;
  double mm_tol = 1e-10;
  int max_ci_iters = 10000;
  int max_mm_iters = 100000;
  double rank_one_tol = 1e-5;
  std::optional<double> rho;  // defaults to M
  double symbol_energy = 1.0;
  double fourth_moment = 1.32;
  std::size_t max_kernel_subcarriers = 48;
  ConicOptions solver;
};

struct TraceRow {
  std::string phase;  // "ci" or "mm"
  int iteration = 0;
  double objective = 0;  // CI: w tr(YB) + tr(Omega Y); MM: g = tr(V X)
  double quartic = 0;    // f(X) via T (MM only)
  double osbep = 0;
  double nep = 0;
  double rank_ratio = 0;
};

std::string trace_csv(const std::vector<TraceRow>& trace);

struct OptimizerResult {
  ComplexVec p;
  ComplexMat x;
  double u_min = 0;
  double u_bound = 0;
  double lambda_max = 0;
  double lambda_min = 0;
  bool ci_converged = false;
  bool mm_converged = false;
  std::vector<TraceRow> trace;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<TraceRow> trace)
      : Error(ErrorKind::kConvergence, "convergence: " + what), trace_(std::move(trace)) {}
  const std::vector<TraceRow>& trace() const { return trace_; }

 private:
  std::vector<TraceRow> trace_;
};

/// Full procedure with prebuilt Omega and T.
OptimizerResult run_algorithm1(const ComplexMat& omega, const QuarticKernel& kernel,
                               std::size_t k_sub, std::size_t m_sub,
                               const OptimizerParams& params);

/// Builds Omega on `grid` and T from `cfg`, then runs the procedure.
OptimizerResult run_algorithm1(const WaveformConfig& cfg, const FrequencyGrid& grid,
                               const OptimizerParams& params);

}  // namespace cpsofdm
