#include <gtest/gtest.h>

#include <cmath>

#include "barrier_sdp.hpp"
#include "cpsofdm/optimizer.hpp"
#include "oracles.hpp"

using namespace cpsofdm;

namespace {

WaveformConfig toy(std::size_t k = 2, std::size_t m = 3) {
  return WaveformConfig::make(24, k, m, 8, GuardType::kCp, 2);
}

}  // namespace

TEST(Kernel, LiftedFormEqualsQuarticMoment) {
  Rng rng(1);
  WaveformConfig cfg = toy();
  cfg.data_m = {0, 2};
  const QuarticKernel kern = build_quartic_kernel(cfg, 1.0, 1.32);
  EXPECT_LT((kern.t - kern.t.adjoint()).norm(), 1e-12 * kern.t.norm());
  for (int i = 0; i < 10; ++i) {
    const ComplexVec p = oracle::random_vec(rng, 6);
    const double f = quartic_moment(p, cfg, 1.0, 1.32);
    EXPECT_NEAR(kern.evaluate(p * p.adjoint()), f, 1e-10 * f);
  }
  EXPECT_GE(kern.lambda_max, kern.lambda_min);
  EXPECT_NEAR(kern.lambda_max, lambda_max(kern.t), 1e-10 * kern.lambda_max);
}

TEST(Kernel, RefusesOversizedProblems) {
  try {
    build_quartic_kernel(WaveformConfig::make(128, 2, 30, 0, GuardType::kCp, 9), 1.0, 1.32);
    FAIL() << "expected resource error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kResource);
  }
}

TEST(Surrogate, MajorizesAndTouchesAtRankOnePoint) {
  Rng rng(2);
  const WaveformConfig cfg = toy();
  const QuarticKernel kern = build_quartic_kernel(cfg, 1.0, 1.32);
  const ComplexVec pl = oracle::random_vec(rng, 6);
  const ComplexMat xl = pl * pl.adjoint();
  EXPECT_NEAR(surrogate_value(xl, xl, kern), kern.evaluate(xl), 1e-9 * kern.evaluate(xl));
  for (int i = 0; i < 10; ++i) {
    const ComplexVec p = oracle::random_vec(rng, 6);
    const ComplexMat x = p * p.adjoint();
    EXPECT_GE(surrogate_value(x, xl, kern), kern.evaluate(x) * (1.0 - 1e-12));
  }
  // Affine part: value(X) = 2 tr(V X) + lambda ||X||^2 + const.
  const ComplexMat v = surrogate_gradient(xl, kern);
  EXPECT_LT((v - v.adjoint()).norm(), 1e-12 * v.norm());
  const ComplexVec p = oracle::random_vec(rng, 6);
  const ComplexMat x = p * p.adjoint();
  const double lam = (1.0 + 1e-9) * kern.lambda_max;
  const double c0 = surrogate_value(ComplexMat::Zero(6, 6), xl, kern);
  EXPECT_NEAR(surrogate_value(x, xl, kern),
              2.0 * (v * x).trace().real() + lam * x.squaredNorm() + c0,
              1e-9 * std::abs(surrogate_value(x, xl, kern)));
}

TEST(Nep, LiftedMatchesVectorForm) {
  Rng rng(3);
  for (auto [k, m] : {std::pair{2u, 3u}, {3u, 2u}, {1u, 6u}}) {
    const ComplexVec p = oracle::random_vec(rng, 6);
    EXPECT_NEAR(nep_lifted(p * p.adjoint(), k, m), nep(p, k, m), 1e-9 * nep(p, k, m));
  }
  EXPECT_TRUE(std::isinf(nep_lifted(ComplexMat::Zero(6, 6), 2, 3)));
}

TEST(Subproblem, AgreesWithBarrierOracle) {
  Rng rng(4);
  const std::size_t k = 2, m = 2, s = 4;
  const WaveformConfig cfg = WaveformConfig::make(16, k, m, 5, GuardType::kCp, 2);
  const FrequencyGrid grid = FrequencyGrid::for_subband(cfg, 6, 1);
  for (int trial = 0; trial < 2; ++trial) {
    ConvexSubproblem pb;
    pb.objective = oracle::random_hermitian(rng, s);
    pb.omega = osbep_matrix(cfg, grid);
    pb.rho = 2.0;
    pb.epsilon = 0.3;
    pb.k_sub = k;
    pb.m_sub = m;
    const ComplexMat x0 = (pb.rho / double(s)) * ComplexMat::Identity(s, s);
    pb.osbep_bound = 1.5 * (pb.omega * x0).trace().real();
    const SubproblemResult r = solve_sdp_subproblem(pb);

    oracle::BarrierProblem bp;
    bp.c = pb.objective;
    bp.eq = {ComplexMat::Identity(s, s)};
    bp.eq_rhs = {pb.rho};
    bp.ineq = {pb.omega};
    bp.ineq_rhs = {*pb.osbep_bound};
    bp.nep_rows = nep_rows(k, m);
    bp.nep_bound = pb.nep_bound();
    const auto ref = oracle::solve_barrier(bp, x0);
    EXPECT_NEAR(r.objective, ref.objective, 1e-6 * (1.0 + std::abs(ref.objective)));
    // Constraints hold at the conic solution.
    EXPECT_NEAR(r.x.trace(), pb.rho, 1e-7);
    EXPECT_LE((pb.omega * r.x.x).trace().real(), *pb.osbep_bound * (1 + 1e-7));
    EXPECT_LE(nep_lifted(r.x.x, k, m), pb.nep_bound() * (1 + 1e-7));
  }
}

TEST(Subproblem, EqualityCaseFixesDenominators) {
  Rng rng(5);
  ConvexSubproblem pb;
  pb.objective = oracle::random_hermitian(rng, 6);
  pb.rho = 3.0;
  pb.epsilon = 0.0;
  pb.k_sub = 2;
  pb.m_sub = 3;
  const SubproblemResult r = solve_sdp_subproblem(pb);
  const RealVec d = nep_denominators(r.x.x, 2, 3);
  for (Eigen::Index i = 0; i < d.size(); ++i) EXPECT_NEAR(d(i), 0.5, 1e-8);
  EXPECT_NEAR(r.x.trace(), 3.0, 1e-8);
  EXPECT_NEAR(nep_lifted(r.x.x, 2, 3), 36.0 / 3.0, 1e-6);
}

TEST(RankOne, ExtractionAndDirectionMatrix) {
  Rng rng(6);
  const ComplexVec p = oracle::random_vec(rng, 5);
  const ComplexVec q = extract_rank_one(p * p.adjoint(), 1e-9);
  // Equal up to a global phase.
  const cdouble phase = p.dot(q) / std::abs(p.dot(q));
  EXPECT_LT((q - phase * p).norm(), 1e-10 * p.norm());
  const ComplexVec w = oracle::random_vec(rng, 5);
  EXPECT_THROW(extract_rank_one(p * p.adjoint() + 0.1 * w * w.adjoint(), 1e-5), NotRankOneError);

  const ComplexMat b = build_direction_matrix(p * p.adjoint() + 1e-3 * ComplexMat::Identity(5, 5));
  EXPECT_LT((b * b - b).norm(), 1e-10);
  EXPECT_NEAR(b.trace().real(), 4.0, 1e-10);
  EXPECT_LT((b * p).norm(), 1e-10 * p.norm());
}

TEST(Algorithm, SmallCaseConvergesToFeasibleRankOneShaping) {
  const WaveformConfig cfg = WaveformConfig::make(32, 2, 3, 10, GuardType::kCp, 3);
  const FrequencyGrid grid = FrequencyGrid::for_subband(cfg, 10, 2);
  OptimizerParams params;
  params.epsilon = 0.2;
  const OptimizerResult res = run_algorithm1(cfg, grid, params);
  EXPECT_TRUE(res.ci_converged);
  EXPECT_TRUE(res.mm_converged);
  double prev = std::numeric_limits<double>::infinity();
  for (const auto& row : res.trace) {
    if (row.phase != "mm") continue;
    EXPECT_LE(row.quartic, prev + 1e-9);
    prev = row.quartic;
  }
  const double rho = 3.0;
  EXPECT_NEAR(res.p.squaredNorm(), rho, 1e-6);
  const ComplexMat omega = osbep_matrix(cfg, grid);
  EXPECT_LE(osbep(res.p, omega), res.u_bound * (1 + 1e-6));
  EXPECT_LE(nep(res.p, 2, 3), 1.2 * 36.0 / rho * (1 + 1e-6));
  const std::string csv = trace_csv(res.trace);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "phase,iteration,objective,quartic,osbep,nep,rank_ratio");
}

TEST(Algorithm, CapsRaiseConvergenceErrorWithTrace) {
  const WaveformConfig cfg = WaveformConfig::make(32, 2, 3, 10, GuardType::kCp, 3);
  const FrequencyGrid grid = FrequencyGrid::for_subband(cfg, 10, 2);
  OptimizerParams params;
  params.epsilon = 0.2;
  params.max_mm_iters = 1;
  try {
    run_algorithm1(cfg, grid, params);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConvergence);
    EXPECT_FALSE(e.trace().empty());
  }
}
