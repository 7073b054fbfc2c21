#include "tnmf/polyroots.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

namespace tnmf::poly {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEps = std::numeric_limits<double>::epsilon();

double horner(const double* c, int n, double x) {
  double r = c[0];
  for (int i = 1; i < n; ++i) r = r * x + c[i];
  return r;
}

// One or two Newton polish steps against the original coefficients.
double polish(const double* c, int n, double x) {
  for (int it = 0; it < 2; ++it) {
    double p = c[0];
    double dp = 0.0;
    for (int i = 1; i < n; ++i) {
      dp = dp * x + p;
      p = p * x + c[i];
    }
    if (dp == 0.0 || !std::isfinite(dp)) break;
    const double step = p / dp;
    if (!std::isfinite(step)) break;
    const double xn = x - step;
    if (std::fabs(xn - x) > 0.5 * (1.0 + std::fabs(x))) break;
    x = xn;
  }
  return x;
}

}  // namespace

double Polynomial::eval(double x) const {
  if (coeffs.empty()) return 0.0;
  return horner(coeffs.data(), static_cast<int>(coeffs.size()), x);
}

double Polynomial::deriv_eval(double x) const {
  const int d = static_cast<int>(coeffs.size()) - 1;
  if (d < 1) return 0.0;
  double r = coeffs[0] * d;
  for (int i = 1; i < d; ++i) r = r * x + coeffs[i] * (d - i);
  return r;
}

int solve_quadratic(double a, double b, double c, double out[2]) {
  if (a == 0.0) {
    if (b == 0.0) return 0;
    out[0] = -c / b;
    return 1;
  }
  const double disc = b * b - 4.0 * a * c;
  const double scale = b * b + std::fabs(4.0 * a * c);
  if (disc < -4.0 * kEps * scale) return 0;
  if (disc <= 4.0 * kEps * scale) {
    out[0] = out[1] = -b / (2.0 * a);
    return 2;
  }
  const double s = std::sqrt(disc);
  double r0, r1;
  if (b == 0.0) {
    r0 = -s / (2.0 * a);
    r1 = s / (2.0 * a);
  } else {
    const double q = -0.5 * (b + std::copysign(s, b));
    r0 = q / a;
    r1 = c / q;
  }
  if (r0 > r1) std::swap(r0, r1);
  out[0] = r0;
  out[1] = r1;
  return 2;
}

int solve_cubic(double a, double b, double c, double d, double out[3]) {
  if (a == 0.0) return solve_quadratic(b, c, d, out);
  // Normalized x^3 + p x^2 + q x + r, then the classic trigonometric /
  // Cardano split on the depressed cubic.
  const double p = b / a;
  const double q = c / a;
  const double r = d / a;
  const double coeffs[4] = {a, b, c, d};

  const double p2 = p * p;
  const double qq = (p2 - 3.0 * q) / 9.0;
  const double rr = (p * (2.0 * p2 - 9.0 * q) + 27.0 * r) / 54.0;
  const double rr2 = rr * rr;
  const double qq3 = qq * qq * qq;

  int n = 0;
  const double tol = 1e-12 * std::max({rr2, std::fabs(qq3), 1e-300});
  if (rr2 <= qq3 + tol) {
    // three real roots (possibly a double root on the boundary)
    const double sq = std::sqrt(std::max(qq, 0.0));
    double t = (sq > 0.0) ? rr / (sq * sq * sq) : 0.0;
    t = std::clamp(t, -1.0, 1.0);
    const double theta = std::acos(t);
    const double two_pi = 6.283185307179586476925286766559;
    const double shift = p / 3.0;
    out[0] = -2.0 * sq * std::cos(theta / 3.0) - shift;
    out[1] = -2.0 * sq * std::cos((theta + two_pi) / 3.0) - shift;
    out[2] = -2.0 * sq * std::cos((theta - two_pi) / 3.0) - shift;
    n = 3;
  } else {
    double big = -std::cbrt(std::fabs(rr) + std::sqrt(rr2 - qq3));
    if (rr < 0.0) big = -big;
    const double small = (big == 0.0) ? 0.0 : qq / big;
    out[0] = (big + small) - p / 3.0;
    n = 1;
  }
  for (int i = 0; i < n; ++i) out[i] = polish(coeffs, 4, out[i]);
  std::sort(out, out + n);
  return n;
}

int solve_quartic(double a, double b, double c, double d, double e,
                  double out[4]) {
  if (a == 0.0) return solve_cubic(b, c, d, e, out);
  const double coeffs[5] = {a, b, c, d, e};
  // Companion-matrix eigenvalues of the monic quartic, then polish.
  Eigen::Matrix4d companion = Eigen::Matrix4d::Zero();
  companion(0, 0) = -b / a;
  companion(0, 1) = -c / a;
  companion(0, 2) = -d / a;
  companion(0, 3) = -e / a;
  companion(1, 0) = 1.0;
  companion(2, 1) = 1.0;
  companion(3, 2) = 1.0;
  const Eigen::EigenSolver<Eigen::Matrix4d> solver(companion, false);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("quartic eigenvalue solve failed");
  }
  int n = 0;
  double coeff_scale = 0.0;
  for (double v : coeffs) coeff_scale = std::max(coeff_scale, std::fabs(v));
  for (int i = 0; i < 4; ++i) {
    const std::complex<double> ev = solver.eigenvalues()(i);
    const double mag = std::max(1.0, std::fabs(ev.real()));
    if (std::fabs(ev.imag()) > 1e-7 * mag) continue;
    double x = polish(coeffs, 5, ev.real());
    const double xmag = std::max(1.0, std::fabs(x));
    const double residual_scale =
        coeff_scale * xmag * xmag * xmag * xmag * 64.0 * kEps +
        1e-8 * std::max(1.0, coeff_scale);
    if (std::fabs(horner(coeffs, 5, x)) > residual_scale) continue;
    out[n++] = x;
  }
  std::sort(out, out + n);
  return n;
}

std::vector<double> real_roots(const Polynomial& p) {
  std::vector<double> c = p.coeffs;
  std::size_t lead = 0;
  while (lead < c.size() && c[lead] == 0.0) ++lead;
  c.erase(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(lead));
  if (c.empty()) throw ParameterError("zero polynomial has no defined roots");
  if (c.size() == 1) throw ParameterError("constant polynomial has no roots");
  if (c.size() > 5) throw ParameterError("degree above 4 is not supported");

  double out[4];
  int n = 0;
  switch (c.size()) {
    case 2:
      out[0] = -c[1] / c[0];
      n = 1;
      break;
    case 3:
      n = solve_quadratic(c[0], c[1], c[2], out);
      break;
    case 4:
      n = solve_cubic(c[0], c[1], c[2], c[3], out);
      break;
    default:
      n = solve_quartic(c[0], c[1], c[2], c[3], c[4], out);
      break;
  }
  return std::vector<double>(out, out + n);
}

std::vector<double> roots_in_interval(const Polynomial& p, const Interval& iv) {
  if (!(iv.lo <= iv.hi)) throw ParameterError("interval must have lo <= hi");
  const std::vector<double> all = real_roots(p);
  std::vector<double> kept;
  for (double r : all) {
    double scale = std::max(1.0, std::fabs(iv.lo));
    if (std::isfinite(iv.hi)) scale = std::max(scale, std::fabs(iv.hi));
    scale = std::max(scale, std::fabs(r));
    const double tol = 1e-12 * scale;
    if (r >= iv.lo - tol && r <= iv.hi + tol) {
      kept.push_back(std::clamp(r, iv.lo, iv.hi));
    }
  }
  return kept;
}

double newton_bracketed(const std::function<double(double)>& f,
                        const std::function<double(double)>& df,
                        const Interval& bracket, double x0, double tol,
                        int max_iter) {
  double lo = bracket.lo;
  double hi = bracket.hi;
  if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw ParameterError("newton_bracketed needs a finite bracket");
  }
  double flo = f(lo);
  double fhi = f(hi);
  if (std::fabs(flo) <= tol) return lo;
  if (std::fabs(fhi) <= tol) return hi;
  if ((flo > 0.0) == (fhi > 0.0)) {
    throw BracketingError("no sign change on the bracket");
  }

  double x = std::clamp(x0, lo, hi);
  for (int it = 0; it < max_iter; ++it) {
    const double fx = f(x);
    if (std::fabs(fx) <= tol) return x;
    if ((fx > 0.0) == (fhi > 0.0)) {
      hi = x;
      fhi = fx;
    } else {
      lo = x;
      flo = fx;
    }
    const double d = df(x);
    double next = (d != 0.0 && std::isfinite(d)) ? x - fx / d : lo;
    if (!(next > lo && next < hi) || !std::isfinite(next)) {
      next = 0.5 * (lo + hi);
    }
    x = next;
    if (hi - lo <= 8.0 * kEps * std::max(std::fabs(lo), std::fabs(hi))) {
      return x;  // bracket collapsed to machine precision
    }
  }
  throw NumericalError("newton_bracketed did not converge");
}

double digamma(double x) {
  if (!(x > 0.0)) throw DomainError("digamma requires x > 0");
  double result = 0.0;
  while (x < 10.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Bernoulli-number asymptotic series, terms through x^-12.
  const double series =
      inv2 * (1.0 / 12.0 +
              inv2 * (-1.0 / 120.0 +
                      inv2 * (1.0 / 252.0 +
                              inv2 * (-1.0 / 240.0 +
                                      inv2 * (1.0 / 132.0 +
                                              inv2 * (-691.0 / 32760.0))))));
  return result + std::log(x) - 0.5 * inv - series;
}

double trigamma(double x) {
  if (!(x > 0.0)) throw DomainError("trigamma requires x > 0");
  double result = 0.0;
  while (x < 10.0) {
    result += 1.0 / (x * x);
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double series =
      1.0 +
      inv * (0.5 +
             inv * (1.0 / 6.0 +
                    inv2 * (-1.0 / 30.0 +
                            inv2 * (1.0 / 42.0 +
                                    inv2 * (-1.0 / 30.0 + inv2 * 5.0 / 66.0)))));
  return result + inv * series;
}

}  // namespace tnmf::poly
