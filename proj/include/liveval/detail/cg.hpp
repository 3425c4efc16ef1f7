#pragma once

#include <cmath>
#include <string>

#include "liveval/error.hpp"
#include "liveval/numkit.hpp"

namespace liveval {

template <typename ApplyFn>
CgResult conjugate_gradient(ApplyFn &&apply, std::span<const double> b, double damping,
                            double tolerance, int max_iterations) {
  const std::size_t n = b.size();
  CgResult result;
  result.solution.assign(n, 0.0);
  const double bnorm = norm2(b);
  if (bnorm == 0.0)
    return result;

  RealVector r(b.begin(), b.end());
  RealVector p = r;
  double rr = dot(r, r);
  for (int it = 1; it <= max_iterations; ++it) {
    RealVector ap = apply(std::span<const double>(p));
    axpy_inplace(damping, p, ap);
    const double pap = dot(p, ap);
    // Indefinite operators are allowed; only an exact breakdown stops early.
    if (pap == 0.0 || !std::isfinite(pap))
      fail(ErrorKind::solver, "cg: breakdown, zero curvature along search direction "
                              "(relative residual " + std::to_string(std::sqrt(rr) / bnorm) + ")");
    const double alpha = rr / pap;
    axpy_inplace(alpha, p, result.solution);
    axpy_inplace(-alpha, ap, r);
    const double rr_next = dot(r, r);
    result.iterations = it;
    result.relative_residual = std::sqrt(rr_next) / bnorm;
    if (result.relative_residual <= tolerance)
      return result;
    const double beta = rr_next / rr;
    for (std::size_t k = 0; k < n; ++k)
      p[k] = r[k] + beta * p[k];
    rr = rr_next;
  }
  fail(ErrorKind::solver, "cg: no convergence in " + std::to_string(max_iterations) +
                              " iterations (relative residual " +
                              std::to_string(result.relative_residual) + ")");
}

} // namespace liveval
