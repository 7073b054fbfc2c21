#pragma once

#include <functional>
#include <vector>

#include "tnmf/errors.hpp"

namespace tnmf::poly {

/// Real polynomial of degree <= 4, coefficients in descending powers:
/// coeffs[0] x^d + ... + coeffs[d-1] x + coeffs[d]. A zero leading
/// coefficient degrades the degree gracefully.
struct Polynomial {
  std::vector<double> coeffs;

  Polynomial() = default;
  explicit Polynomial(std::vector<double> c) : coeffs(std::move(c)) {}

  double eval(double x) const;
  double deriv_eval(double x) const;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;  // may be +inf
};

/// All real roots in ascending order, repeated with multiplicity.
/// Complex conjugate pairs are excluded. Throws ParameterError for the
/// zero or constant polynomial and for degrees above 4.
std::vector<double> real_roots(const Polynomial& p);

/// Subset of real_roots inside [lo, hi], endpoint-inclusive with a
/// 1e-12 relative tolerance; results are clamped into the interval.
std::vector<double> roots_in_interval(const Polynomial& p, const Interval& iv);

/// Low-level solvers writing ascending roots into `out`; return the count.
/// Leading coefficients may be zero (the degree degrades).
int solve_quadratic(double a, double b, double c, double out[2]);
int solve_cubic(double a, double b, double c, double d, double out[3]);
int solve_quartic(double a, double b, double c, double d, double e, double out[4]);

/// Safeguarded Newton iteration: steps leaving the bracket fall back to
/// bisection, so convergence is guaranteed for a continuous f with a
/// sign change. Returns x with |f(x)| <= tol (or the bracket collapsed
/// to machine precision). Throws BracketingError without a sign change.
double newton_bracketed(const std::function<double(double)>& f,
                        const std::function<double(double)>& df,
                        const Interval& bracket, double x0, double tol,
                        int max_iter = 200);

/// Digamma function for x > 0; recurrence into the asymptotic regime.
double digamma(double x);

/// Trigamma function for x > 0 (derivative of digamma).
double trigamma(double x);

}  // namespace tnmf::poly
