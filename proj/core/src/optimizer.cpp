#include "cpsofdm/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cpsofdm {

namespace {

Eigen::SelfAdjointEigenSolver<ComplexMat> hermitian_eig(const ComplexMat& x) {
  const ComplexMat h = 0.5 * (x + x.adjoint());
  return Eigen::SelfAdjointEigenSolver<ComplexMat>(h);
}

}  // namespace

double LiftedShaping::rank_ratio() const {
  Eigen::SelfAdjointEigenSolver<ComplexMat> es(0.5 * (x + x.adjoint()), Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  const Eigen::Index n = ev.size();
  if (n < 2 || ev(n - 1) <= 0.0) return n < 2 ? 0.0 : 1.0;
  return std::max(0.0, ev(n - 2)) / ev(n - 1);
}

double QuarticKernel::evaluate(const ComplexMat& x) const {
  require(static_cast<std::size_t>(x.rows()) == subcarriers && x.cols() == x.rows(),
          ErrorKind::kInvalidDimension, "lifted matrix size must be S x S");
  const ComplexVec v = vec(x);
  return v.dot(t * v).real();
}

QuarticKernel build_quartic_kernel(const WaveformConfig& cfg, double symbol_energy,
                                   double fourth_moment, std::size_t max_subcarriers) {
  const std::size_t s = cfg.subcarriers();
  require(s <= max_subcarriers, ErrorKind::kResource,
          "quartic kernel for S = " + std::to_string(s) + " exceeds the configured cap of " +
              std::to_string(max_subcarriers) + " subcarriers");
  require(!cfg.data_k.empty() && !cfg.data_m.empty(), ErrorKind::kInvalidConfig,
          "data index sets must be nonempty");
  const std::size_t n_fft = cfg.n_fft;
  const std::size_t m_sub = cfg.m_sub;
  const std::size_t d = cfg.num_data();
  const auto s2 = static_cast<Eigen::Index>(s * s);
  const double norm = 1.0 / std::sqrt(static_cast<double>(n_fft * m_sub));

  // Columns vec(U_{k,m,n}) = conj(u) (x) u for every n and data position.
  ComplexMat stacked(s2, static_cast<Eigen::Index>(n_fft * d));
  ComplexMat kron_sum = ComplexMat::Zero(s2, s2);
  ComplexVec u(static_cast<Eigen::Index>(s));
  ComplexMat s_n(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s));
  Eigen::Index col = 0;
  for (std::size_t n = 0; n < n_fft; ++n) {
    s_n.setZero();
    for (std::size_t k : cfg.data_k) {
      for (std::size_t m : cfg.data_m) {
        // [C^T e]_j = e_{<j + kM>_S}, e_i = exp(j 2 pi i (m/M - n/N)) / sqrt(NM)
        for (std::size_t j = 0; j < s; ++j) {
          const std::size_t i = (j + k * m_sub) % s;
          const double phase =
              2.0 * kPi *
              (static_cast<double>((i * m) % m_sub) / static_cast<double>(m_sub) -
               static_cast<double>((i * n) % n_fft) / static_cast<double>(n_fft));
          u(static_cast<Eigen::Index>(j)) = std::polar(norm, phase);
        }
        for (std::size_t c = 0; c < s; ++c)
          stacked.col(col).segment(static_cast<Eigen::Index>(c * s), static_cast<Eigen::Index>(s)) =
              std::conj(u(static_cast<Eigen::Index>(c))) * u;
        s_n.noalias() += u * u.adjoint();
        ++col;
      }
    }
    // S_n^T (x) S_n: block (r, c) is S_n(c, r) S_n.
    for (std::size_t r = 0; r < s; ++r)
      for (std::size_t c = 0; c < s; ++c)
        kron_sum.block(static_cast<Eigen::Index>(r * s), static_cast<Eigen::Index>(c * s),
                       static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s)) +=
            s_n(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(r)) * s_n;
  }

  const double es2 = symbol_energy * symbol_energy;
  const double inv_n = 1.0 / static_cast<double>(n_fft);
  QuarticKernel kernel;
  kernel.subcarriers = s;
  kernel.t = ComplexMat::Zero(s2, s2);
  kernel.t.selfadjointView<Eigen::Lower>().rankUpdate(stacked,
                                                     (fourth_moment - 2.0 * es2) * inv_n);
  kernel.t = kernel.t.selfadjointView<Eigen::Lower>();
  kernel.t += (2.0 * es2 * inv_n) * kron_sum;
  kernel.t = (0.5 * (kernel.t + kernel.t.adjoint())).eval();

  Eigen::SelfAdjointEigenSolver<ComplexMat> es(kernel.t, Eigen::EigenvaluesOnly);
  require(es.info() == Eigen::Success, ErrorKind::kNumeric,
          "eigenvalue decomposition of the quartic kernel failed");
  kernel.lambda_max = es.eigenvalues()(s2 - 1);
  kernel.lambda_min = es.eigenvalues()(0);
  return kernel;
}

double lambda_max(const ComplexMat& t) {
  require(t.rows() == t.cols() && t.rows() > 0, ErrorKind::kInvalidDimension,
          "lambda_max needs a nonempty square matrix");
  Eigen::SelfAdjointEigenSolver<ComplexMat> es(0.5 * (t + t.adjoint()), Eigen::EigenvaluesOnly);
  require(es.info() == Eigen::Success, ErrorKind::kNumeric,
          "dense Hermitian eigensolver did not converge");
  return es.eigenvalues()(t.rows() - 1);
}

namespace {

double safe_lambda(const QuarticKernel& kernel) { return (1.0 + 1e-9) * kernel.lambda_max; }

ComplexVec apply_j(const ComplexMat& x, const QuarticKernel& kernel) {
  const ComplexVec v = vec(x);
  return kernel.t * v - safe_lambda(kernel) * v;
}

}  // namespace

ComplexMat surrogate_gradient(const ComplexMat& x_l, const QuarticKernel& kernel) {
  require(static_cast<std::size_t>(x_l.rows()) == kernel.subcarriers,
          ErrorKind::kInvalidDimension, "lifted matrix size must be S x S");
  const ComplexMat e = unvec_square(apply_j(x_l, kernel), kernel.subcarriers);
  return 0.5 * (e + e.adjoint());
}

double surrogate_value(const ComplexMat& x, const ComplexMat& x_l, const QuarticKernel& kernel) {
  const ComplexVec jxl = apply_j(x_l, kernel);
  const ComplexVec xv = vec(x);
  const ComplexVec xlv = vec(x_l);
  return 2.0 * xv.dot(jxl).real() + safe_lambda(kernel) * xv.squaredNorm() - xlv.dot(jxl).real();
}

ComplexMat nep_rows(std::size_t k_sub, std::size_t m_sub) {
  const std::size_t s = k_sub * m_sub;
  // Column i holds r_i = conj(row i of W_K^H (x) I_M).
  ComplexMat r = ComplexMat::Zero(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s));
  const double norm = 1.0 / std::sqrt(static_cast<double>(k_sub));
  for (std::size_t kr = 0; kr < k_sub; ++kr)
    for (std::size_t m = 0; m < m_sub; ++m)
      for (std::size_t kc = 0; kc < k_sub; ++kc) {
        const double phase = 2.0 * kPi * static_cast<double>((kr * kc) % k_sub) /
                             static_cast<double>(k_sub);
        r(static_cast<Eigen::Index>(kc * m_sub + m), static_cast<Eigen::Index>(kr * m_sub + m)) =
            std::polar(norm, -phase);
      }
  return r;
}

RealVec nep_denominators(const ComplexMat& x, std::size_t k_sub, std::size_t m_sub) {
  const ComplexMat r = nep_rows(k_sub, m_sub);
  return (r.adjoint() * x * r).diagonal().real();
}

double nep_lifted(const ComplexMat& x, std::size_t k_sub, std::size_t m_sub) {
  const RealVec d = nep_denominators(x, k_sub, m_sub);
  double z = 0.0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (d(i) <= 0.0) return std::numeric_limits<double>::infinity();
    z += 1.0 / d(i);
  }
  return z;
}

double ConvexSubproblem::nep_bound() const {
  const double s = static_cast<double>(k_sub * m_sub);
  return (1.0 + epsilon) * s * s / rho;
}

namespace {

// Real rank-2 factor of embed(r r^H).
RealMat embedding_factor(const ComplexVec& r) {
  const Eigen::Index n = r.size();
  RealMat f(2 * n, 2);
  f.col(0) << r.real(), r.imag();
  f.col(1) << -r.imag(), r.real();
  return f;
}

}  // namespace

ConicProblem to_conic(const ConvexSubproblem& problem) {
  const std::size_t s = problem.k_sub * problem.m_sub;
  const auto n = static_cast<Eigen::Index>(s);
  require(problem.objective.rows() == n && problem.objective.cols() == n,
          ErrorKind::kInvalidDimension, "subproblem objective must be S x S");
  require(problem.rho > 0.0, ErrorKind::kInvalidArgument, "energy rho must be positive");
  require(problem.epsilon >= 0.0, ErrorKind::kInvalidArgument, "epsilon must be >= 0");

  ConicProblem cp;
  const std::size_t z0 = cp.add_block(2 * s);
  const ComplexMat obj = 0.5 * (problem.objective + problem.objective.adjoint());
  cp.objective[z0] = 0.5 * real_embedding(obj);

  const bool nep_active = std::isfinite(problem.epsilon);
  const bool nep_equality = nep_active && problem.epsilon == 0.0;

  if (!nep_equality) {
    cp.add_constraint({dense_term(z0, 0.5 * RealMat::Identity(2 * n, 2 * n))}, problem.rho);
  }

  if (problem.osbep_bound) {
    require(problem.omega.rows() == n && problem.omega.cols() == n, ErrorKind::kInvalidDimension,
            "Omega must be S x S");
    const std::size_t slack = cp.add_block(1);
    const ComplexMat om = 0.5 * (problem.omega + problem.omega.adjoint());
    cp.add_constraint({dense_term(z0, 0.5 * real_embedding(om)),
                       entry_term(slack, 1, 0, 0, 1.0)},
                      *problem.osbep_bound);
  }

  if (nep_active) {
    const ComplexMat r = nep_rows(problem.k_sub, problem.m_sub);
    const RealVec half = RealVec::Constant(2, 0.5);
    if (nep_equality) {
      const double target = problem.rho / static_cast<double>(s);
      for (Eigen::Index i = 0; i < n; ++i)
        cp.add_constraint({factored_term(z0, embedding_factor(r.col(i)), half)}, target);
    } else {
      std::vector<ConicTerm> sum_terms;
      for (Eigen::Index i = 0; i < n; ++i) {
        const std::size_t blk = cp.add_block(2);
        cp.add_constraint({factored_term(z0, embedding_factor(r.col(i)), half),
                           entry_term(blk, 2, 0, 0, -1.0)},
                          0.0);
        cp.add_constraint({entry_term(blk, 2, 0, 1, 1.0)}, 1.0);
        sum_terms.push_back(entry_term(blk, 2, 1, 1, 1.0));
      }
      const std::size_t slack = cp.add_block(1);
      sum_terms.push_back(entry_term(slack, 1, 0, 0, 1.0));
      cp.add_constraint(std::move(sum_terms), problem.nep_bound());
    }
  }
  return cp;
}

SubproblemResult solve_sdp_subproblem(const ConvexSubproblem& problem,
                                      const ConicOptions& options) {
  const ConicProblem cp = to_conic(problem);
  SubproblemResult out;
  out.solver = solve_conic(cp, options);
  require_optimal(out.solver, "SDP subproblem");
  out.x.x = complex_from_embedding(out.solver.x[0]);
  out.objective = (problem.objective * out.x.x).trace().real();
  return out;
}

SubproblemResult solve_ci_subproblem(const ComplexMat& direction, double weight,
                                     const ConvexSubproblem& base, const ConicOptions& options) {
  ConvexSubproblem p = base;
  p.osbep_bound.reset();
  p.objective = weight * direction + base.omega;
  return solve_sdp_subproblem(p, options);
}

ComplexMat build_direction_matrix(const ComplexMat& y) {
  require(y.rows() == y.cols() && y.rows() > 0, ErrorKind::kInvalidDimension,
          "direction matrix needs a square input");
  const auto es = hermitian_eig(y);
  const Eigen::Index n = y.rows();
  // Eigenvalues ascend; the first n - 1 eigenvectors span the trailing subspace.
  const ComplexMat u = es.eigenvectors().leftCols(n - 1);
  return u * u.adjoint();
}

ComplexVec extract_rank_one(const ComplexMat& x, double rank_one_tol) {
  const auto es = hermitian_eig(x);
  const Eigen::Index n = x.rows();
  const double l1 = es.eigenvalues()(n - 1);
  const double l2 = n > 1 ? std::max(0.0, es.eigenvalues()(n - 2)) : 0.0;
  if (!(l1 > 0.0)) throw NotRankOneError(1.0, "not-rank-one: matrix has no positive eigenvalue");
  const double ratio = l2 / l1;
  if (ratio > rank_one_tol) {
    std::ostringstream msg;
    msg << "not-rank-one: eigenvalue ratio " << ratio << " exceeds " << rank_one_tol;
    throw NotRankOneError(ratio, msg.str());
  }
  ComplexVec p = std::sqrt(l1) * es.eigenvectors().col(n - 1);
  Eigen::Index peak = 0;
  p.cwiseAbs().maxCoeff(&peak);
  p *= std::polar(1.0, -std::arg(p(peak)));
  p(peak) = std::abs(p(peak));
  return p;
}

std::string trace_csv(const std::vector<TraceRow>& trace) {
  std::ostringstream out;
  out << "phase,iteration,objective,quartic,osbep,nep,rank_ratio\n";
  for (const auto& r : trace)
    out << r.phase << ',' << r.iteration << ',' << format_double(r.objective) << ','
        << format_double(r.quartic) << ',' << format_double(r.osbep) << ','
        << format_double(r.nep) << ',' << format_double(r.rank_ratio) << '\n';
  return out.str();
}

OptimizerResult run_algorithm1(const ComplexMat& omega, const QuarticKernel& kernel,
                               std::size_t k_sub, std::size_t m_sub,
                               const OptimizerParams& params) {
  const std::size_t s = k_sub * m_sub;
  require(static_cast<std::size_t>(omega.rows()) == s && kernel.subcarriers == s,
          ErrorKind::kInvalidDimension, "Omega and T must match S = K M");
  require(params.beta >= 1.0, ErrorKind::kInvalidConfig, "beta must be >= 1");
  require(params.weight > 0.0, ErrorKind::kInvalidConfig, "CI weight must be positive");
  require(params.ci_tol > 0.0 && params.mm_tol > 0.0, ErrorKind::kInvalidConfig,
          "stopping tolerances must be positive");

  OptimizerResult res;
  res.lambda_max = kernel.lambda_max;
  res.lambda_min = kernel.lambda_min;

  ConvexSubproblem base;
  base.omega = omega;
  base.rho = params.rho.value_or(static_cast<double>(m_sub));
  base.epsilon = params.epsilon;
  base.k_sub = k_sub;
  base.m_sub = m_sub;

  auto osbep_of = [&](const ComplexMat& x) { return (omega * x).trace().real(); };

  // Convex iteration for the minimum OSBEP and a rank-one starting point.
  ComplexMat b = ComplexMat::Zero(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s));
  ComplexMat y;
  double u_prev = 0.0;
  for (int phi = 0; phi < params.max_ci_iters; ++phi) {
    const SubproblemResult r = solve_ci_subproblem(b, params.weight, base, params.solver);
    y = r.x.x;
    const double u = osbep_of(y);
    res.trace.push_back({"ci", phi, r.objective, kernel.evaluate(y), u,
                         nep_lifted(y, k_sub, m_sub), r.x.rank_ratio()});
    if (phi > 0 && std::abs(u - u_prev) <= params.ci_tol) {
      res.ci_converged = true;
      break;
    }
    u_prev = u;
    b = build_direction_matrix(y);
  }
  if (!res.ci_converged)
    throw ConvergenceError("convex iteration hit the cap of " +
                               std::to_string(params.max_ci_iters) + " iterations",
                           res.trace);
  res.u_min = osbep_of(y);
  res.u_bound = params.beta * res.u_min;

  // Majorization-minimization from X^(0) = Y_min.
  ConvexSubproblem mm = base;
  mm.osbep_bound = res.u_bound;
  ComplexMat x = y;
  double g_prev = 0.0;
  for (int l = 0; l < params.max_mm_iters; ++l) {
    mm.objective = surrogate_gradient(x, kernel);
    const SubproblemResult r = solve_sdp_subproblem(mm, params.solver);
    x = r.x.x;
    const double g = r.objective;
    res.trace.push_back({"mm", l, g, kernel.evaluate(x), osbep_of(x), nep_lifted(x, k_sub, m_sub),
                         r.x.rank_ratio()});
    if (l > 0 && std::abs(g - g_prev) <= params.mm_tol) {
      res.mm_converged = true;
      break;
    }
    g_prev = g;
  }
  if (!res.mm_converged)
    throw ConvergenceError("majorization-minimization hit the cap of " +
                               std::to_string(params.max_mm_iters) + " iterations",
                           res.trace);

  res.x = x;
  res.p = extract_rank_one(x, params.rank_one_tol);
  return res;
}

OptimizerResult run_algorithm1(const WaveformConfig& cfg, const FrequencyGrid& grid,
                               const OptimizerParams& params) {
  cfg.validate();
  const ComplexMat omega = osbep_matrix(cfg, grid, params.symbol_energy);
  const QuarticKernel kernel = build_quartic_kernel(cfg, params.symbol_energy,
                                                    params.fourth_moment,
                                                    params.max_kernel_subcarriers);
  return run_algorithm1(omega, kernel, cfg.k_sub, cfg.m_sub, params);
}

}  // namespace cpsofdm
