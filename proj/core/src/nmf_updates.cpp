#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "tnmf/nmf.hpp"
#include "tnmf/polyroots.hpp"

namespace tnmf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double floored(double x) { return x > 0.0 ? x : kActivationFloor; }

// Largest root of a x^2 + b x + c with a >= 0 and c <= 0; such a
// polynomial has exactly one non-negative root (possibly after the
// degree degrades to linear).
double nonneg_quad_root(double a, double b, double c) {
  if (a == 0.0) {
    if (b <= 0.0) throw NumericalError("degenerate coordinate quadratic");
    return -c / b;
  }
  const double disc = b * b - 4.0 * a * c;
  const double s = std::sqrt(std::max(disc, 0.0));
  if (b >= 0.0) {
    const double den = b + s;
    return den > 0.0 ? -2.0 * c / den : 0.0;
  }
  return (-b + s) / (2.0 * a);
}

// Minimum of the single-column coordinate problem -p log h + q h, the
// case where a one-column fit leaves no chain prior terms.
double bare_coordinate(double p, double q) {
  if (p <= 0.0) return 0.0;
  if (!(q > 0.0)) {
    throw NumericalError("unbounded coordinate problem (q = 0 with p > 0)");
  }
  return p / q;
}

}  // namespace

namespace coord {

double rate_first(double p, double q, double alpha, double beta, double h2) {
  return floored(nonneg_quad_root(q, alpha - p, -beta * h2));
}

double rate_middle(double p, double q, double beta, double h_prev,
                   double h_next) {
  return floored(nonneg_quad_root(q + beta / h_prev, 1.0 - p, -beta * h_next));
}

double rate_last(double p, double q, double alpha, double beta,
                 double h_prev) {
  const double num = p + alpha - 1.0;
  if (num <= 0.0) return kActivationFloor;
  return floored(num / (q + beta / h_prev));
}

double hier_z(double alpha_z, double beta_z, double alpha_h, double beta_h,
              double h_prev, double h_cur) {
  return (alpha_z + alpha_h - 1.0) / (beta_z * h_prev + beta_h * h_cur);
}

double hier_first(double p, double q, double alpha_z, double beta_z,
                  double z2) {
  return floored((p + alpha_z) / (q + beta_z * z2));
}

double hier_middle(double p, double q, double alpha_z, double beta_z,
                   double alpha_h, double beta_h, double z_cur,
                   double z_next) {
  return floored((p + alpha_h + alpha_z - 1.0) /
                 (q + beta_h * z_cur + beta_z * z_next));
}

double hier_last(double p, double q, double alpha_h, double beta_h,
                 double z_last) {
  const double num = p + alpha_h - 1.0;
  if (num <= 0.0) return kActivationFloor;
  return floored(num / (q + beta_h * z_last));
}

namespace {

// Shared Newton driver for the digamma coordinate equations. g is
// negative near zero and grows like alpha h log(alpha h); expand a
// bracket, then run the safeguarded iteration.
double solve_digamma_equation(const std::function<double(double)>& g,
                              const std::function<double(double)>& dg,
                              double x0, double tol) {
  double lo = std::min(std::max(x0, kActivationFloor), 1.0);
  int guard = 0;
  while (g(lo) >= 0.0) {
    lo *= 0.5;
    if (++guard > 4000 || lo < 1e-300) {
      throw NumericalError("no lower bracket for digamma equation");
    }
  }
  double hi = std::max(2.0 * x0, 1.0);
  guard = 0;
  while (g(hi) <= 0.0) {
    hi *= 2.0;
    if (++guard > 4000) {
      throw NumericalError("no upper bracket for digamma equation");
    }
  }
  return poly::newton_bracketed(g, dg, {lo, hi}, x0, tol);
}

}  // namespace

double shape_first(double p, double q, double alpha, double beta, double h2,
                   double x0) {
  const double lin = q - alpha * std::log(beta * h2);
  const auto g = [&](double h) {
    return -p + (lin + alpha * poly::digamma(alpha * h)) * h;
  };
  const auto dg = [&](double h) {
    const double ah = alpha * h;
    return lin + alpha * poly::digamma(ah) +
           alpha * ah * poly::trigamma(ah);
  };
  const double tol = 1e-12 * (1.0 + std::fabs(p));
  return floored(solve_digamma_equation(g, dg, x0, tol));
}

double shape_middle(double p, double q, double alpha, double beta,
                    double h_prev, double h_next, double x0) {
  const double a0 = 1.0 - alpha * h_prev - p;
  const double lin = q + beta - alpha * std::log(beta * h_next);
  const auto g = [&](double h) {
    return a0 + (lin + alpha * poly::digamma(alpha * h)) * h;
  };
  const auto dg = [&](double h) {
    const double ah = alpha * h;
    return lin + alpha * poly::digamma(ah) +
           alpha * ah * poly::trigamma(ah);
  };
  const double tol = 1e-12 * (1.0 + std::fabs(a0));
  return floored(solve_digamma_equation(g, dg, x0, tol));
}

double shape_last(double p, double q, double alpha, double beta,
                  double h_prev) {
  const double num = p + alpha * h_prev - 1.0;
  if (num <= 0.0) return kActivationFloor;
  return floored(num / (q + beta));
}

double gap(double p, double q, double alpha, double beta) {
  const double num = p + alpha - 1.0;
  if (num <= 0.0) return 0.0;
  const double den = q + beta;
  if (!(den > 0.0)) {
    throw NumericalError("flat GaP prior on an unobserved coordinate");
  }
  return num / den;
}

double gap_exp(double p, double q, double alpha, double beta) {
  const double den = q + beta;
  if (p <= 0.0) {
    const double num = alpha - 1.0;
    if (num <= 0.0) return 0.0;
    if (!(den > 0.0)) {
      throw NumericalError("flat GaP prior on an unobserved coordinate");
    }
    return num / den;
  }
  if (!(den > 0.0)) {
    throw NumericalError("flat GaP prior on an unobserved coordinate");
  }
  return nonneg_quad_root(den, 1.0 - alpha, -p);
}

namespace {

// Pick the candidate with the lowest restricted objective; fall back to
// `fallback` when the root set is empty or lands outside the support.
double select_candidate(const std::vector<double>& candidates,
                        const std::function<double(double)>& f,
                        double fallback, BgarUpdateDiag* diag) {
  double best = 0.0;
  double best_f = kInf;
  for (double c : candidates) {
    const double v = f(c);
    if (v < best_f) {
      best_f = v;
      best = c;
    }
  }
  if (best_f == kInf) {
    if (diag != nullptr) ++diag->endpoint_fallbacks;
    return fallback;
  }
  return best;
}

double neg_log_or_inf(double positive_part) {
  return positive_part > 0.0 ? std::log(positive_part) : -kInf;
}

}  // namespace

double bgar_first(double p, double q, double alpha, double gamma, double beta,
                  double b2, double h2, BgarUpdateDiag* diag) {
  const double d1 = h2 / b2;
  const double big_a = q + beta * (1.0 - b2);
  const double w = p + alpha - 1.0;  // positive under admissibility
  const poly::Polynomial quad{
      {-big_a, w + big_a * d1 + (gamma - 1.0), -w * d1}};
  const auto f = [&](double h) {
    const double lh = neg_log_or_inf(h);
    const double ld = neg_log_or_inf(d1 - h);
    if (lh == -kInf || ld == -kInf) return kInf;
    return -w * lh + big_a * h - (gamma - 1.0) * ld;
  };
  const auto roots = poly::roots_in_interval(quad, {0.0, d1});
  return select_candidate(roots, f, 0.5 * d1, diag);
}

double bgar_middle(double p, double q, double gamma, double beta, double b_cur,
                   double h_prev, double b_next, double h_next,
                   BgarUpdateDiag* diag) {
  const double c = b_cur * h_prev;
  const double d = h_next / b_next;
  const double big_a = q + beta * (1.0 - b_next);
  const double gm1 = gamma - 1.0;
  const poly::Polynomial cubic{{-big_a,
                                p + 2.0 * gm1 + big_a * (c + d),
                                -p * (c + d) - gm1 * (c + d) - big_a * c * d,
                                p * c * d}};
  const auto f = [&](double h) {
    const double lc = neg_log_or_inf(h - c);
    const double ld = neg_log_or_inf(d - h);
    if (lc == -kInf || ld == -kInf) return kInf;
    double v = big_a * h - gm1 * (lc + ld);
    if (p > 0.0) {
      const double lh = neg_log_or_inf(h);
      if (lh == -kInf) return kInf;
      v -= p * lh;
    }
    return v;
  };
  const auto roots = poly::roots_in_interval(cubic, {c, d});
  return select_candidate(roots, f, c + 0.5 * (d - c), diag);
}

double bgar_last(double p, double q, double gamma, double beta, double b_cur,
                 double h_prev, BgarUpdateDiag* diag) {
  const double c = b_cur * h_prev;
  const double big_a = q + beta;
  const double gm1 = gamma - 1.0;
  const poly::Polynomial quad{
      {big_a, -p - big_a * c - gm1, p * c}};
  const auto f = [&](double h) {
    const double lc = neg_log_or_inf(h - c);
    if (lc == -kInf) return kInf;
    double v = big_a * h - gm1 * lc;
    if (p > 0.0) {
      const double lh = neg_log_or_inf(h);
      if (lh == -kInf) return kInf;
      v -= p * lh;
    }
    return v;
  };
  const auto roots = poly::roots_in_interval(quad, {c, kInf});
  return select_candidate(roots, f, c + (gm1 + p) / big_a, diag);
}

double bgar_b(double eta, double gamma, double beta, double h_prev,
              double h_cur) {
  const double x = h_cur / h_prev;
  const double ub = std::min(1.0, x);
  const double gm1 = gamma - 1.0;
  const double em1 = eta - 1.0;
  const double bh = beta * h_prev;
  const poly::Polynomial cubic{{-bh,
                                -2.0 * gm1 - em1 + bh * (x + 1.0),
                                gm1 * (x + 1.0) + em1 * (x + 1.0) - bh * x,
                                -em1 * x}};
  const auto f = [&](double b) {
    const double lb = neg_log_or_inf(b);
    const double l1 = neg_log_or_inf(1.0 - b);
    const double lx = neg_log_or_inf(x - b);
    if (lb == -kInf || l1 == -kInf || lx == -kInf) return kInf;
    return -em1 * lb - gm1 * l1 - gm1 * lx - bh * b;
  };
  const auto roots = poly::roots_in_interval(cubic, {0.0, ub});
  double best = 0.0;
  double best_f = kInf;
  for (double r : roots) {
    const double v = f(r);
    if (v < best_f) {
      best_f = v;
      best = r;
    }
  }
  if (best_f == kInf) return 0.5 * ub;
  return best;
}

double bgar_exp_first(double p, double q, double alpha, double gamma,
                      double beta, double b2, double h2,
                      BgarUpdateDiag* diag) {
  const double d1 = h2 / b2;
  const double big_a = q + beta * (1.0 - b2);
  const double am1 = alpha - 1.0;
  const double gm1 = gamma - 1.0;
  const poly::Polynomial cubic{{-big_a,
                                big_a * d1 + am1 + gm1,
                                p - am1 * d1,
                                -p * d1}};
  const auto f = [&](double h) {
    const double lh = neg_log_or_inf(h);
    const double ld = neg_log_or_inf(d1 - h);
    if (lh == -kInf || ld == -kInf) return kInf;
    return p / h + big_a * h - am1 * lh - gm1 * ld;
  };
  const auto roots = poly::roots_in_interval(cubic, {0.0, d1});
  return select_candidate(roots, f, 0.5 * d1, diag);
}

double bgar_exp_middle(double p, double q, double gamma, double beta,
                       double b_cur, double h_prev, double b_next,
                       double h_next, BgarUpdateDiag* diag) {
  const double c = b_cur * h_prev;
  const double d = h_next / b_next;
  const double big_a = q + beta * (1.0 - b_next);
  const double gm1 = gamma - 1.0;
  const poly::Polynomial quartic{{-big_a,
                                  big_a * (c + d) + 2.0 * gm1,
                                  p - big_a * c * d - gm1 * (c + d),
                                  -p * (c + d),
                                  p * c * d}};
  const auto f = [&](double h) {
    const double lc = neg_log_or_inf(h - c);
    const double ld = neg_log_or_inf(d - h);
    if (lc == -kInf || ld == -kInf || !(h > 0.0)) return kInf;
    return p / h + big_a * h - gm1 * (lc + ld);
  };
  const auto roots = poly::roots_in_interval(quartic, {c, d});
  return select_candidate(roots, f, c + 0.5 * (d - c), diag);
}

double bgar_exp_last(double p, double q, double gamma, double beta,
                     double b_cur, double h_prev, BgarUpdateDiag* diag) {
  const double c = b_cur * h_prev;
  const double big_a = q + beta;
  const double gm1 = gamma - 1.0;
  const poly::Polynomial cubic{{big_a,
                                -big_a * c - gm1,
                                -p,
                                p * c}};
  const auto f = [&](double h) {
    const double lc = neg_log_or_inf(h - c);
    if (lc == -kInf || !(h > 0.0)) return kInf;
    return p / h + big_a * h - gm1 * lc;
  };
  const auto roots = poly::roots_in_interval(cubic, {c, kInf});
  return select_candidate(roots, f, c + (gm1 + 1.0) / big_a, diag);
}

}  // namespace coord

// --- sweeps ---

namespace {

void check_stats_dims(const HStats& stats, const Matrix& H) {
  if (stats.P.rows() != H.rows() || stats.P.cols() != H.cols() ||
      stats.Q.rows() != H.rows() || stats.Q.cols() != H.cols()) {
    throw ConfigError("statistics dimensions do not match H");
  }
}

}  // namespace

void update_h_rate(const HStats& stats, Matrix& H, const RatePrior& prior,
                   int threads) {
  check_stats_dims(stats, H);
  const Index n_cols = H.cols();
  detail::parallel_for(H.rows(), threads, [&](Index k) {
    const double alpha = prior.alpha[k];
    const double beta = prior.beta[k];
    for (Index n = 0; n < n_cols; ++n) {
      const double p = stats.P(k, n);
      const double q = stats.Q(k, n);
      double h;
      if (n_cols == 1) {
        h = floored(bare_coordinate(p, q));
      } else if (n == 0) {
        h = coord::rate_first(p, q, alpha, beta, H(k, 1));
      } else if (n + 1 < n_cols) {
        h = coord::rate_middle(p, q, beta, H(k, n - 1), H(k, n + 1));
      } else {
        h = coord::rate_last(p, q, alpha, beta, H(k, n - 1));
      }
      H(k, n) = h;
    }
  });
}

void update_hier_rate(const HStats& stats, Matrix& H, Matrix& Z,
                      const HierRatePrior& prior, int threads) {
  check_stats_dims(stats, H);
  const Index n_cols = H.cols();
  if (n_cols > 1 && (Z.rows() != H.rows() || Z.cols() != n_cols)) {
    throw ConfigError("auxiliary Z dimensions do not match H");
  }
  detail::parallel_for(H.rows(), threads, [&](Index k) {
    const double az = prior.alpha_z[k];
    const double bz = prior.beta_z[k];
    const double ah = prior.alpha_h[k];
    const double bh = prior.beta_h[k];
    for (Index n = 1; n < n_cols; ++n) {
      Z(k, n) = coord::hier_z(az, bz, ah, bh, H(k, n - 1), H(k, n));
    }
    for (Index n = 0; n < n_cols; ++n) {
      const double p = stats.P(k, n);
      const double q = stats.Q(k, n);
      double h;
      if (n_cols == 1) {
        h = floored(bare_coordinate(p, q));
      } else if (n == 0) {
        h = coord::hier_first(p, q, az, bz, Z(k, 1));
      } else if (n + 1 < n_cols) {
        h = coord::hier_middle(p, q, az, bz, ah, bh, Z(k, n), Z(k, n + 1));
      } else {
        h = coord::hier_last(p, q, ah, bh, Z(k, n));
      }
      H(k, n) = h;
    }
  });
}

void update_h_shape(const HStats& stats, Matrix& H, const ShapePrior& prior,
                    int threads) {
  check_stats_dims(stats, H);
  const Index n_cols = H.cols();
  detail::parallel_for(H.rows(), threads, [&](Index k) {
    const double alpha = prior.alpha[k];
    const double beta = prior.beta[k];
    for (Index n = 0; n < n_cols; ++n) {
      const double p = stats.P(k, n);
      const double q = stats.Q(k, n);
      double h;
      try {
        if (n_cols == 1) {
          h = floored(bare_coordinate(p, q));
        } else if (n == 0) {
          h = coord::shape_first(p, q, alpha, beta, H(k, 1), H(k, 0));
        } else if (n + 1 < n_cols) {
          h = coord::shape_middle(p, q, alpha, beta, H(k, n - 1), H(k, n + 1),
                                  H(k, n));
        } else {
          h = coord::shape_last(p, q, alpha, beta, H(k, n - 1));
        }
      } catch (const NumericalError& err) {
        throw NumericalError("shape update failed at coordinate (" +
                             std::to_string(k) + ", " + std::to_string(n) +
                             "): " + err.what());
      }
      H(k, n) = h;
    }
  });
}

void update_h_gap(const HStats& stats, Matrix& H, const GapPrior& prior,
                  int threads) {
  check_stats_dims(stats, H);
  detail::parallel_for(H.rows(), threads, [&](Index k) {
    for (Index n = 0; n < H.cols(); ++n) {
      H(k, n) = coord::gap(stats.P(k, n), stats.Q(k, n), prior.alpha[k],
                           prior.beta[k]);
    }
  });
}

void update_h_gap_exp(const HStats& stats, Matrix& H, const GapPrior& prior,
                      int threads) {
  check_stats_dims(stats, H);
  detail::parallel_for(H.rows(), threads, [&](Index k) {
    for (Index n = 0; n < H.cols(); ++n) {
      H(k, n) = coord::gap_exp(stats.P(k, n), stats.Q(k, n), prior.alpha[k],
                               prior.beta[k]);
    }
  });
}

namespace {

template <typename First, typename Middle, typename Last>
void bgar_sweep(const HStats& stats, Matrix& H, Matrix& B,
                const BgarPrior& prior, BgarUpdateDiag* diag, int threads,
                First first, Middle middle, Last last) {
  const Index n_cols = H.cols();
  if (n_cols > 1 && (B.rows() != H.rows() || B.cols() != n_cols)) {
    throw ConfigError("auxiliary B dimensions do not match H");
  }
  std::vector<BgarUpdateDiag> local(static_cast<std::size_t>(H.rows()));
  detail::parallel_for(H.rows(), threads, [&](Index k) {
    BgarUpdateDiag* row_diag = &local[static_cast<std::size_t>(k)];
    const double alpha = prior.alpha[k];
    const double beta = prior.beta[k];
    const double rho = prior.rho[k];
    const double gamma = alpha * (1.0 - rho);
    const double eta = alpha * rho;
    for (Index n = 1; n < n_cols; ++n) {
      B(k, n) = coord::bgar_b(eta, gamma, beta, H(k, n - 1), H(k, n));
    }
    for (Index n = 0; n < n_cols; ++n) {
      const double p = stats.P(k, n);
      const double q = stats.Q(k, n);
      double h;
      if (n_cols == 1) {
        h = (p + alpha - 1.0) / (q + beta);
      } else if (n == 0) {
        h = first(p, q, alpha, gamma, beta, B(k, 1), H(k, 1), row_diag);
      } else if (n + 1 < n_cols) {
        h = middle(p, q, gamma, beta, B(k, n), H(k, n - 1), B(k, n + 1),
                   H(k, n + 1), row_diag);
      } else {
        h = last(p, q, gamma, beta, B(k, n), H(k, n - 1), row_diag);
      }
      H(k, n) = h;
    }
  });
  if (diag != nullptr) {
    for (const auto& d : local) diag->endpoint_fallbacks += d.endpoint_fallbacks;
  }
}

}  // namespace

void update_bgar(const HStats& stats, Matrix& H, Matrix& B,
                 const BgarPrior& prior, BgarUpdateDiag* diag, int threads) {
  check_stats_dims(stats, H);
  bgar_sweep(stats, H, B, prior, diag, threads, coord::bgar_first,
             coord::bgar_middle, coord::bgar_last);
}

void update_bgar_exp(const HStats& stats, Matrix& H, Matrix& B,
                     const BgarPrior& prior, BgarUpdateDiag* diag,
                     int threads) {
  check_stats_dims(stats, H);
  bgar_sweep(stats, H, B, prior, diag, threads, coord::bgar_exp_first,
             coord::bgar_exp_middle, coord::bgar_exp_last);
}

}  // namespace tnmf
