#include "cpsofdm/conic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace cpsofdm {

std::size_t ConicProblem::add_block(std::size_t size) {
  require(size > 0, ErrorKind::kInvalidDimension, "empty cone block");
  block_sizes.push_back(size);
  objective.emplace_back();
  return block_sizes.size() - 1;
}

std::size_t ConicProblem::add_constraint(std::vector<ConicTerm> terms, double rhs) {
  constraints.push_back({std::move(terms), rhs});
  return constraints.size() - 1;
}

ConicTerm dense_term(std::size_t block, RealMat matrix) {
  ConicTerm t;
  t.block = block;
  t.matrix = 0.5 * (matrix + matrix.transpose());
  return t;
}

ConicTerm entry_term(std::size_t block, std::size_t size, std::size_t i, std::size_t j,
                     double coefficient) {
  RealMat a = RealMat::Zero(static_cast<Eigen::Index>(size), static_cast<Eigen::Index>(size));
  if (i == j) {
    a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = coefficient;
  } else {
    a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 0.5 * coefficient;
    a(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = 0.5 * coefficient;
  }
  return dense_term(block, std::move(a));
}

ConicTerm factored_term(std::size_t block, RealMat factor, RealVec weights) {
  require(factor.cols() == weights.size(), ErrorKind::kInvalidDimension,
          "factor and weight sizes differ");
  ConicTerm t;
  t.block = block;
  t.matrix = factor * weights.asDiagonal() * factor.transpose();
  t.factor = std::move(factor);
  t.weights = std::move(weights);
  return t;
}

namespace {

using Blocks = std::vector<RealMat>;

double inner(const RealMat& a, const RealMat& b) { return (a.array() * b.array()).sum(); }

double inner(const Blocks& a, const Blocks& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += inner(a[i], b[i]);
  return s;
}

double norm(const Blocks& a) { return std::sqrt(inner(a, a)); }

RealMat sym(const RealMat& a) { return 0.5 * (a + a.transpose()); }

// Problem data after row and objective scaling, plus per-block indices.
struct Scaled {
  std::vector<std::size_t> sizes;
  Blocks c;
  std::vector<ConicConstraint> rows;
  RealVec b;
  std::vector<double> row_scale;
  double obj_scale = 1.0;
  // For each block, the (row, term) pairs that touch it.
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> touching;
};

Scaled prepare(const ConicProblem& p) {
  Scaled s;
  s.sizes = p.block_sizes;
  const std::size_t nb = p.block_sizes.size();
  s.c.resize(nb);
  double cnorm2 = 0.0;
  for (std::size_t b = 0; b < nb; ++b) {
    const auto n = static_cast<Eigen::Index>(p.block_sizes[b]);
    if (b < p.objective.size() && p.objective[b].size() > 0) {
      require(p.objective[b].rows() == n && p.objective[b].cols() == n,
              ErrorKind::kInvalidDimension, "objective block size mismatch");
      s.c[b] = sym(p.objective[b]);
    } else {
      s.c[b] = RealMat::Zero(n, n);
    }
    cnorm2 += s.c[b].squaredNorm();
  }
  s.obj_scale = cnorm2 > 0.0 ? 1.0 / std::sqrt(cnorm2) : 1.0;
  for (auto& cb : s.c) cb *= s.obj_scale;

  const std::size_t m = p.constraints.size();
  s.rows = p.constraints;
  s.b.resize(static_cast<Eigen::Index>(m));
  s.row_scale.resize(m);
  s.touching.resize(nb);
  for (std::size_t i = 0; i < m; ++i) {
    double n2 = 0.0;
    for (const auto& t : s.rows[i].terms) {
      require(t.block < nb, ErrorKind::kInvalidArgument, "constraint term references no block");
      const auto n = static_cast<Eigen::Index>(p.block_sizes[t.block]);
      require(t.matrix.rows() == n && t.matrix.cols() == n, ErrorKind::kInvalidDimension,
              "constraint block size mismatch");
      n2 += t.matrix.squaredNorm();
    }
    require(n2 > 0.0, ErrorKind::kInvalidArgument, "constraint with zero coefficients");
    const double scale = 1.0 / std::sqrt(n2);
    s.row_scale[i] = scale;
    for (std::size_t k = 0; k < s.rows[i].terms.size(); ++k) {
      auto& t = s.rows[i].terms[k];
      t.matrix *= scale;
      if (t.weights.size() > 0) t.weights *= scale;
      s.touching[t.block].emplace_back(i, k);
    }
    s.b(static_cast<Eigen::Index>(i)) = p.constraints[i].rhs * scale;
  }
  return s;
}

RealVec apply_a(const Scaled& s, const Blocks& x) {
  RealVec out = RealVec::Zero(static_cast<Eigen::Index>(s.rows.size()));
  for (std::size_t i = 0; i < s.rows.size(); ++i) {
    double v = 0.0;
    for (const auto& t : s.rows[i].terms) v += inner(t.matrix, x[t.block]);
    out(static_cast<Eigen::Index>(i)) = v;
  }
  return out;
}

Blocks apply_at(const Scaled& s, const RealVec& y) {
  Blocks out(s.sizes.size());
  for (std::size_t b = 0; b < s.sizes.size(); ++b)
    out[b] = RealMat::Zero(static_cast<Eigen::Index>(s.sizes[b]),
                           static_cast<Eigen::Index>(s.sizes[b]));
  for (std::size_t i = 0; i < s.rows.size(); ++i)
    for (const auto& t : s.rows[i].terms) out[t.block] += y(static_cast<Eigen::Index>(i)) * t.matrix;
  return out;
}

// Largest alpha in (0, 1] keeping x + alpha dx PSD, times the step factor.
double step_length(const Blocks& x, const Blocks& dx, double factor) {
  double alpha_max = std::numeric_limits<double>::infinity();
  for (std::size_t b = 0; b < x.size(); ++b) {
    double lmin;
    if (x[b].rows() == 1) {
      lmin = dx[b](0, 0) / x[b](0, 0);
    } else {
      Eigen::LLT<RealMat> llt(x[b]);
      if (llt.info() != Eigen::Success) return 0.0;
      const RealMat l_inv_dx = llt.matrixL().solve(dx[b]);
      const RealMat m = llt.matrixL().solve(l_inv_dx.transpose());
      Eigen::SelfAdjointEigenSolver<RealMat> es(sym(m), Eigen::EigenvaluesOnly);
      lmin = es.eigenvalues()(0);
    }
    if (lmin < 0.0) alpha_max = std::min(alpha_max, -1.0 / lmin);
  }
  return std::min(1.0, factor * alpha_max);
}

struct Direction {
  Blocks dx;
  Blocks dz;
  RealVec dy;
};

}  // namespace

ConicSolution solve_conic(const ConicProblem& problem, const ConicOptions& options) {
  const Scaled s = prepare(problem);
  const std::size_t nb = s.sizes.size();
  const auto m = static_cast<Eigen::Index>(s.rows.size());
  require(nb > 0 && m > 0, ErrorKind::kInvalidArgument, "conic problem is empty");

  std::size_t n_total = 0;
  for (auto n : s.sizes) n_total += n;

  // Starting point in the spirit of the usual infeasible-start heuristics.
  double xi = 10.0;
  double eta = 10.0;
  for (std::size_t i = 0; i < s.rows.size(); ++i)
    xi = std::max(xi, std::sqrt(static_cast<double>(n_total)) * (1.0 + std::abs(s.b(static_cast<Eigen::Index>(i)))));
  eta = std::max(eta, std::sqrt(static_cast<double>(n_total)));
  Blocks x(nb), z(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    const auto n = static_cast<Eigen::Index>(s.sizes[b]);
    x[b] = xi * RealMat::Identity(n, n);
    z[b] = eta * RealMat::Identity(n, n);
  }
  RealVec y = RealVec::Zero(m);

  const double bnorm = s.b.norm();
  const double cnorm = norm(s.c);

  ConicSolution sol;
  auto finish = [&](ConicStatus status, int iters) {
    if (status == ConicStatus::kStalled && sol.relative_gap <= options.near_tolerance &&
        sol.primal_infeasibility <= options.near_tolerance &&
        sol.dual_infeasibility <= options.near_tolerance)
      status = ConicStatus::kNearOptimal;
    sol.status = status;
    sol.iterations = iters;
    sol.x.resize(nb);
    sol.z.resize(nb);
    for (std::size_t b = 0; b < nb; ++b) {
      sol.x[b] = x[b];
      sol.z[b] = z[b] / s.obj_scale;
    }
    sol.y.resize(m);
    for (Eigen::Index i = 0; i < m; ++i)
      sol.y(i) = y(i) * s.row_scale[static_cast<std::size_t>(i)] / s.obj_scale;
    sol.primal_objective = inner(s.c, x) / s.obj_scale;
    sol.dual_objective = s.b.dot(y) / s.obj_scale;
    return sol;
  };

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const RealVec rp = s.b - apply_a(s, x);
    Blocks rd = apply_at(s, y);
    for (std::size_t b = 0; b < nb; ++b) rd[b] = s.c[b] - rd[b] - z[b];

    const double pobj = inner(s.c, x);
    const double dobj = s.b.dot(y);
    const double mu = inner(x, z) / static_cast<double>(n_total);
    sol.relative_gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
    sol.primal_infeasibility = rp.norm() / (1.0 + bnorm);
    sol.dual_infeasibility = norm(rd) / (1.0 + cnorm);

    if (sol.relative_gap <= options.tolerance && sol.primal_infeasibility <= options.tolerance &&
        sol.dual_infeasibility <= options.tolerance)
      return finish(ConicStatus::kOptimal, iter);

    // Divergence of the iterates with a vanishing residual in the other
    // space indicates an infeasibility certificate.
    const double xnorm = norm(x);
    const double ynorm = y.norm();
    if (xnorm > 1e12 || ynorm > 1e12) {
      return finish(ConicStatus::kInfeasible, iter);
    }

    // Z^{-1} per block.
    Blocks zinv(nb);
    for (std::size_t b = 0; b < nb; ++b) {
      Eigen::LLT<RealMat> llt(z[b]);
      if (llt.info() != Eigen::Success) return finish(ConicStatus::kStalled, iter);
      zinv[b] = llt.solve(RealMat::Identity(z[b].rows(), z[b].cols()));
      zinv[b] = sym(zinv[b]);
    }

    // Schur complement M_ij = sum_b tr(A_ib X_b A_jb Z_b^{-1}).
    RealMat schur = RealMat::Zero(m, m);
    for (std::size_t b = 0; b < nb; ++b) {
      const auto& touch = s.touching[b];
      if (touch.empty()) continue;
      // Low-rank terms: stack their factors once.
      std::vector<std::size_t> lr;
      std::vector<Eigen::Index> offset;
      Eigen::Index cols = 0;
      for (std::size_t t = 0; t < touch.size(); ++t) {
        const auto& term = s.rows[touch[t].first].terms[touch[t].second];
        if (term.factor.size() > 0) {
          lr.push_back(t);
          offset.push_back(cols);
          cols += term.factor.cols();
        }
      }
      if (!lr.empty()) {
        RealMat u(static_cast<Eigen::Index>(s.sizes[b]), cols);
        RealVec w(cols);
        for (std::size_t a = 0; a < lr.size(); ++a) {
          const auto& term = s.rows[touch[lr[a]].first].terms[touch[lr[a]].second];
          u.middleCols(offset[a], term.factor.cols()) = term.factor;
          w.segment(offset[a], term.factor.cols()) = term.weights;
        }
        const RealMat px = u.transpose() * x[b] * u;
        const RealMat pz = u.transpose() * zinv[b] * u;
        const RealMat prod = px.array() * pz.transpose().array();
        for (std::size_t a1 = 0; a1 < lr.size(); ++a1) {
          const auto& t1 = s.rows[touch[lr[a1]].first].terms[touch[lr[a1]].second];
          const auto i = static_cast<Eigen::Index>(touch[lr[a1]].first);
          for (std::size_t a2 = 0; a2 < lr.size(); ++a2) {
            const auto& t2 = s.rows[touch[lr[a2]].first].terms[touch[lr[a2]].second];
            const auto j = static_cast<Eigen::Index>(touch[lr[a2]].first);
            const auto r1 = t1.factor.cols();
            const auto r2 = t2.factor.cols();
            double v = 0.0;
            for (Eigen::Index p = 0; p < r1; ++p)
              for (Eigen::Index q = 0; q < r2; ++q)
                v += w(offset[a1] + p) * w(offset[a2] + q) * prod(offset[a1] + p, offset[a2] + q);
            schur(i, j) += v;
          }
        }
      }
      // Dense terms against everything touching the block.
      for (std::size_t t = 0; t < touch.size(); ++t) {
        const auto& term = s.rows[touch[t].first].terms[touch[t].second];
        if (term.factor.size() > 0) continue;
        const RealMat g = x[b] * term.matrix * zinv[b];
        const auto i = static_cast<Eigen::Index>(touch[t].first);
        for (std::size_t t2 = 0; t2 < touch.size(); ++t2) {
          const auto& other = s.rows[touch[t2].first].terms[touch[t2].second];
          const auto j = static_cast<Eigen::Index>(touch[t2].first);
          const double v = inner(other.matrix, g);
          if (other.factor.size() > 0) {
            schur(i, j) += v;
            schur(j, i) += v;
          } else {
            schur(j, i) += v;
          }
        }
      }
    }
    schur = 0.5 * (schur + schur.transpose()).eval();

    Eigen::LLT<RealMat> chol(schur);
    Eigen::LDLT<RealMat> ldlt;
    const bool use_llt = chol.info() == Eigen::Success;
    if (!use_llt) ldlt.compute(schur);
    auto solve_schur = [&](const RealVec& rhs) -> RealVec {
      return use_llt ? RealVec(chol.solve(rhs)) : RealVec(ldlt.solve(rhs));
    };

    // X R_d Z^{-1} is shared by predictor and corrector.
    Blocks xrz(nb);
    for (std::size_t b = 0; b < nb; ++b) xrz[b] = x[b] * rd[b] * zinv[b];

    auto direction = [&](double sigma_mu, const Blocks* corr) {
      Direction d;
      Blocks base(nb);
      for (std::size_t b = 0; b < nb; ++b) {
        base[b] = sigma_mu * zinv[b] - x[b] - xrz[b];
        if (corr) base[b] -= (*corr)[b];
      }
      const RealVec rhs = rp - apply_a(s, base);
      d.dy = solve_schur(rhs);
      d.dz = apply_at(s, d.dy);
      d.dx.resize(nb);
      for (std::size_t b = 0; b < nb; ++b) {
        d.dz[b] = rd[b] - d.dz[b];
        RealMat dx = sigma_mu * zinv[b] - x[b] - x[b] * d.dz[b] * zinv[b];
        if (corr) dx -= (*corr)[b];
        d.dx[b] = sym(dx);
      }
      return d;
    };

    const Direction pred = direction(0.0, nullptr);
    const double ap = step_length(x, pred.dx, 1.0);
    const double ad = step_length(z, pred.dz, 1.0);
    double mu_aff = 0.0;
    for (std::size_t b = 0; b < nb; ++b)
      mu_aff += inner(x[b] + ap * pred.dx[b], z[b] + ad * pred.dz[b]);
    mu_aff /= static_cast<double>(n_total);
    const double ratio = std::max(0.0, mu_aff / mu);
    const double sigma = std::min(1.0, ratio * ratio * ratio);

    Blocks corr(nb);
    for (std::size_t b = 0; b < nb; ++b) corr[b] = pred.dx[b] * pred.dz[b] * zinv[b];
    const Direction dir = direction(sigma * mu, &corr);

    const double alpha_p = step_length(x, dir.dx, options.step_factor);
    const double alpha_d = step_length(z, dir.dz, options.step_factor);
    if (alpha_p < 1e-14 && alpha_d < 1e-14) return finish(ConicStatus::kStalled, iter);
    for (std::size_t b = 0; b < nb; ++b) {
      x[b] = sym(x[b] + alpha_p * dir.dx[b]);
      z[b] = sym(z[b] + alpha_d * dir.dz[b]);
    }
    y += alpha_d * dir.dy;
  }
  return finish(ConicStatus::kStalled, options.max_iterations);
}

void require_optimal(const ConicSolution& solution, const std::string& context) {
  if (solution.status == ConicStatus::kOptimal || solution.status == ConicStatus::kNearOptimal)
    return;
  std::ostringstream msg;
  msg << context << ": interior-point solver "
      << (solution.status == ConicStatus::kInfeasible ? "detected infeasibility"
                                                      : "stalled")
      << " after " << solution.iterations << " iterations (gap " << solution.relative_gap
      << ", primal residual " << solution.primal_infeasibility << ", dual residual "
      << solution.dual_infeasibility << ")";
  throw_error(solution.status == ConicStatus::kInfeasible ? ErrorKind::kInfeasible
                                                          : ErrorKind::kNumeric,
              msg.str());
}

RealMat real_embedding(const ComplexMat& f) {
  const Eigen::Index n = f.rows();
  RealMat out(2 * n, 2 * n);
  out.topLeftCorner(n, n) = f.real();
  out.topRightCorner(n, n) = -f.imag();
  out.bottomLeftCorner(n, n) = f.imag();
  out.bottomRightCorner(n, n) = f.real();
  return out;
}

ComplexMat complex_from_embedding(const RealMat& z) {
  require(z.rows() == z.cols() && z.rows() % 2 == 0, ErrorKind::kInvalidDimension,
          "embedded block must be square with even size");
  const Eigen::Index n = z.rows() / 2;
  ComplexMat x(n, n);
  x.real() = 0.5 * (z.topLeftCorner(n, n) + z.bottomRightCorner(n, n));
  x.imag() = 0.5 * (z.bottomLeftCorner(n, n) - z.topRightCorner(n, n));
  return 0.5 * (x + x.adjoint());
}

}  // namespace cpsofdm
