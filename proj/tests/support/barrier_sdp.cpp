#include "barrier_sdp.hpp"

#include <cmath>
#include <stdexcept>

namespace oracle {

using cpsofdm::cdouble;
using cpsofdm::ComplexMat;
using cpsofdm::RealMat;
using cpsofdm::RealVec;

namespace {

std::vector<ComplexMat> hermitian_basis(Eigen::Index n) {
  std::vector<ComplexMat> basis;
  const double r = 1.0 / std::sqrt(2.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    ComplexMat e = ComplexMat::Zero(n, n);
    e(i, i) = 1.0;
    basis.push_back(e);
  }
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      ComplexMat e = ComplexMat::Zero(n, n);
      e(i, j) = r;
      e(j, i) = r;
      basis.push_back(e);
      ComplexMat f = ComplexMat::Zero(n, n);
      f(i, j) = cdouble(0.0, r);
      f(j, i) = cdouble(0.0, -r);
      basis.push_back(f);
    }
  return basis;
}

// Coordinates of a Hermitian matrix: c_k = tr(A E_k).
RealVec coords(const ComplexMat& a, const std::vector<ComplexMat>& basis) {
  RealVec v(static_cast<Eigen::Index>(basis.size()));
  for (std::size_t k = 0; k < basis.size(); ++k)
    v(static_cast<Eigen::Index>(k)) = (a * basis[k]).trace().real();
  return v;
}

ComplexMat assemble(const RealVec& theta, const std::vector<ComplexMat>& basis) {
  ComplexMat x = ComplexMat::Zero(basis.front().rows(), basis.front().cols());
  for (std::size_t k = 0; k < basis.size(); ++k) x += theta(static_cast<Eigen::Index>(k)) * basis[k];
  return x;
}

struct Terms {
  RealVec c;
  RealMat g;     // inequality rows
  RealVec h;
  RealMat q;     // NEP rows: d_i = q_i^T theta
  double nep_bound;
};

// Barrier value; +inf outside the domain.
double barrier(const RealVec& theta, double t, const Terms& tm,
               const std::vector<ComplexMat>& basis) {
  const ComplexMat x = assemble(theta, basis);
  Eigen::LLT<ComplexMat> llt(x);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i).real());
  if (!std::isfinite(logdet)) return std::numeric_limits<double>::infinity();
  double val = t * tm.c.dot(theta) - logdet;
  for (Eigen::Index j = 0; j < tm.g.rows(); ++j) {
    const double s = tm.h(j) - tm.g.row(j).dot(theta);
    if (s <= 0.0) return std::numeric_limits<double>::infinity();
    val -= std::log(s);
  }
  if (tm.q.rows() > 0) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < tm.q.rows(); ++i) {
      const double d = tm.q.row(i).dot(theta);
      if (d <= 0.0) return std::numeric_limits<double>::infinity();
      sum += 1.0 / d;
    }
    const double psi = tm.nep_bound - sum;
    if (psi <= 0.0) return std::numeric_limits<double>::infinity();
    val -= std::log(psi);
  }
  return val;
}

}  // namespace

BarrierResult solve_barrier(const BarrierProblem& pb, const ComplexMat& x0, double gap) {
  const auto basis = hermitian_basis(x0.rows());
  const auto dim = static_cast<Eigen::Index>(basis.size());
  Terms tm;
  tm.c = coords(pb.c, basis);
  tm.g.resize(static_cast<Eigen::Index>(pb.ineq.size()), dim);
  tm.h.resize(static_cast<Eigen::Index>(pb.ineq.size()));
  for (std::size_t j = 0; j < pb.ineq.size(); ++j) {
    tm.g.row(static_cast<Eigen::Index>(j)) = coords(pb.ineq[j], basis).transpose();
    tm.h(static_cast<Eigen::Index>(j)) = pb.ineq_rhs[j];
  }
  const bool has_nep = pb.nep_rows.size() > 0 && std::isfinite(pb.nep_bound);
  tm.q.resize(has_nep ? pb.nep_rows.cols() : 0, dim);
  for (Eigen::Index i = 0; i < tm.q.rows(); ++i)
    tm.q.row(i) = coords(pb.nep_rows.col(i) * pb.nep_rows.col(i).adjoint(), basis).transpose();
  tm.nep_bound = pb.nep_bound;
  RealMat a(static_cast<Eigen::Index>(pb.eq.size()), dim);
  for (std::size_t i = 0; i < pb.eq.size(); ++i)
    a.row(static_cast<Eigen::Index>(i)) = coords(pb.eq[i], basis).transpose();

  RealVec theta = coords(x0, basis);
  RealMat null;
  if (a.rows() == 0) {
    null = RealMat::Identity(dim, dim);
  } else {
    Eigen::FullPivLU<RealMat> lu(a);
    null = lu.kernel();
    null = Eigen::HouseholderQR<RealMat>(null).householderQ() *
           RealMat::Identity(dim, null.cols());
  }
  const double barrier_terms =
      static_cast<double>(x0.rows() + tm.g.rows() + (has_nep ? 1 : 0));
  double t = 1.0;
  for (int outer = 0; outer < 200; ++outer) {
    for (int it = 0; it < 100; ++it) {
      const ComplexMat x = assemble(theta, basis);
      const ComplexMat xi = x.inverse();
      RealVec grad = t * tm.c;
      RealMat hess = RealMat::Zero(dim, dim);
      std::vector<ComplexMat> xe(basis.size());
      for (std::size_t k = 0; k < basis.size(); ++k) xe[k] = xi * basis[k];
      for (Eigen::Index k = 0; k < dim; ++k) {
        grad(k) -= xe[static_cast<std::size_t>(k)].trace().real();
        for (Eigen::Index l = k; l < dim; ++l) {
          const double v =
              (xe[static_cast<std::size_t>(k)] * xe[static_cast<std::size_t>(l)]).trace().real();
          hess(k, l) += v;
          if (l != k) hess(l, k) += v;
        }
      }
      for (Eigen::Index j = 0; j < tm.g.rows(); ++j) {
        const double s = tm.h(j) - tm.g.row(j).dot(theta);
        grad += tm.g.row(j).transpose() / s;
        hess += tm.g.row(j).transpose() * tm.g.row(j) / (s * s);
      }
      if (has_nep) {
        RealVec gsum = RealVec::Zero(dim);
        RealMat hsum = RealMat::Zero(dim, dim);
        double sum = 0.0;
        for (Eigen::Index i = 0; i < tm.q.rows(); ++i) {
          const double d = tm.q.row(i).dot(theta);
          sum += 1.0 / d;
          gsum += tm.q.row(i).transpose() / (d * d);
          hsum += 2.0 * tm.q.row(i).transpose() * tm.q.row(i) / (d * d * d);
        }
        const double psi = tm.nep_bound - sum;
        grad -= gsum / psi;
        hess += gsum * gsum.transpose() / (psi * psi) + hsum / psi;
      }
      // Newton step restricted to the null space of the equalities.
      const RealMat hz = null.transpose() * hess * null;
      const RealVec gz = null.transpose() * grad;
      const RealVec step = null * hz.ldlt().solve(-gz);
      const double decrement = -grad.dot(step);
      if (decrement / 2.0 < 1e-12) break;
      double alpha = 1.0;
      const double f0 = barrier(theta, t, tm, basis);
      while (alpha > 1e-14) {
        const double f1 = barrier(theta + alpha * step, t, tm, basis);
        if (std::isfinite(f1) && f1 <= f0 - 0.25 * alpha * decrement) break;
        alpha *= 0.5;
      }
      theta += alpha * step;
    }
    if (barrier_terms / t < gap) break;
    t *= 8.0;
  }
  BarrierResult out;
  out.x = assemble(theta, basis);
  out.objective = tm.c.dot(theta);
  out.gap_bound = barrier_terms / t;
  return out;
}

}  // namespace oracle
