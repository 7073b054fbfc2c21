#include "tnmf/nmf.hpp"

#include <cmath>
#include <limits>
#include <thread>

#include "tnmf/polyroots.hpp"

namespace tnmf {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

std::string likelihood_name(Likelihood lik) {
  return lik == Likelihood::Poisson ? "poisson" : "exponential";
}

void CountMatrix::validate() const {
  if (values.rows() < 1 || values.cols() < 1) {
    throw DataError("count matrix must be non-empty");
  }
  for (Index n = 0; n < values.cols(); ++n) {
    for (Index f = 0; f < values.rows(); ++f) {
      const double v = values(f, n);
      if (!std::isfinite(v) || v < 0.0) {
        throw DataError("count matrix entries must be finite and >= 0");
      }
    }
  }
}

void Mask::validate() const {
  for (Index n = 0; n < m.cols(); ++n) {
    for (Index f = 0; f < m.rows(); ++f) {
      const double v = m(f, n);
      if (v != 0.0 && v != 1.0) {
        throw DataError("mask entries must be 0 or 1");
      }
    }
  }
}

Mask Mask::ones(Index rows, Index cols) {
  return Mask{Matrix::Ones(rows, cols)};
}

Mask Mask::with_hidden_columns(Index rows, Index cols,
                               const std::vector<Index>& hidden) {
  Mask mask = ones(rows, cols);
  for (Index n : hidden) {
    if (n < 0 || n >= cols) throw ConfigError("hidden column out of range");
    mask.m.col(n).setZero();
  }
  return mask;
}

// --- priors ---

namespace {

Vector const_vector(Index k, double v) {
  return Vector::Constant(k, v);
}

void require_all_positive(const Vector& v, const char* name) {
  for (Index i = 0; i < v.size(); ++i) {
    if (!(v[i] > 0.0) || !std::isfinite(v[i])) {
      throw ParameterError(std::string(name) + " entries must be positive");
    }
  }
}

}  // namespace

GapPrior GapPrior::constant(Index k, double alpha, double beta) {
  return GapPrior{const_vector(k, alpha), const_vector(k, beta)};
}
RatePrior RatePrior::constant(Index k, double alpha, double beta) {
  return RatePrior{const_vector(k, alpha), const_vector(k, beta)};
}
HierRatePrior HierRatePrior::constant(Index k, double alpha_z, double beta_z,
                                      double alpha_h, double beta_h) {
  return HierRatePrior{const_vector(k, alpha_z), const_vector(k, beta_z),
                       const_vector(k, alpha_h), const_vector(k, beta_h)};
}
ShapePrior ShapePrior::constant(Index k, double alpha, double beta) {
  return ShapePrior{const_vector(k, alpha), const_vector(k, beta)};
}
BgarPrior BgarPrior::constant(Index k, double alpha, double beta, double rho) {
  return BgarPrior{const_vector(k, alpha), const_vector(k, beta),
                   const_vector(k, rho)};
}

std::string prior_family_name(const PriorSpec& prior) {
  struct Visitor {
    std::string operator()(const GapPrior&) { return "gap"; }
    std::string operator()(const RatePrior&) { return "rate"; }
    std::string operator()(const HierRatePrior&) { return "hier"; }
    std::string operator()(const ShapePrior&) { return "shape"; }
    std::string operator()(const BgarPrior&) { return "bgar"; }
  };
  return std::visit(Visitor{}, prior);
}

Index prior_components(const PriorSpec& prior) {
  struct Visitor {
    Index operator()(const GapPrior& p) { return p.alpha.size(); }
    Index operator()(const RatePrior& p) { return p.alpha.size(); }
    Index operator()(const HierRatePrior& p) { return p.alpha_z.size(); }
    Index operator()(const ShapePrior& p) { return p.alpha.size(); }
    Index operator()(const BgarPrior& p) { return p.alpha.size(); }
  };
  return std::visit(Visitor{}, prior);
}

Admissibility validate_bgar_hyperparams(double alpha, double rho) {
  if (!(alpha > 0.0)) return {false, "alpha must be positive"};
  if (!(rho >= 0.0) || !(rho < 1.0)) return {false, "rho must be in [0, 1)"};
  const double gamma = alpha * (1.0 - rho);
  const double eta = alpha * rho;
  if (!(gamma > 1.0)) {
    return {false, "alpha (1 - rho) = " + std::to_string(gamma) +
                       " must exceed 1"};
  }
  if (!(eta > 1.0)) {
    return {false,
            "alpha rho = " + std::to_string(eta) + " must exceed 1"};
  }
  return {true, ""};
}

void validate_prior(const PriorSpec& prior, Index k) {
  if (prior_components(prior) != k) {
    throw ConfigError("prior hyperparameter vectors must have length K");
  }
  struct Visitor {
    void operator()(const GapPrior& p) {
      require_all_positive(p.alpha, "gap alpha");
      for (Index i = 0; i < p.beta.size(); ++i) {
        const double b = p.beta[i];
        if (!(b >= 0.0) || !std::isfinite(b)) {
          throw ParameterError("gap beta entries must be >= 0");
        }
        if (b == 0.0 && p.alpha[i] != 1.0) {
          throw ParameterError("gap beta = 0 requires alpha = 1 (flat prior)");
        }
      }
    }
    void operator()(const RatePrior& p) {
      require_all_positive(p.alpha, "rate alpha");
      require_all_positive(p.beta, "rate beta");
    }
    void operator()(const HierRatePrior& p) {
      require_all_positive(p.alpha_z, "hier alpha_z");
      require_all_positive(p.beta_z, "hier beta_z");
      require_all_positive(p.alpha_h, "hier alpha_h");
      require_all_positive(p.beta_h, "hier beta_h");
      for (Index i = 0; i < p.alpha_h.size(); ++i) {
        if (!(p.alpha_h[i] >= 1.0)) {
          throw ParameterError("hier alpha_h must be >= 1");
        }
      }
    }
    void operator()(const ShapePrior& p) {
      require_all_positive(p.alpha, "shape alpha");
      require_all_positive(p.beta, "shape beta");
    }
    void operator()(const BgarPrior& p) {
      require_all_positive(p.alpha, "bgar alpha");
      require_all_positive(p.beta, "bgar beta");
      for (Index i = 0; i < p.alpha.size(); ++i) {
        const Admissibility adm =
            validate_bgar_hyperparams(p.alpha[i], p.rho[i]);
        if (!adm.ok) {
          throw ParameterError("bgar hyperparameters inadmissible: " +
                               adm.reason);
        }
      }
    }
  };
  std::visit(Visitor{}, prior);
}

nlohmann::json prior_to_json(const PriorSpec& prior) {
  nlohmann::json j;
  j["family"] = prior_family_name(prior);
  struct Visitor {
    nlohmann::json& j;
    void operator()(const GapPrior& p) {
      j["alpha"] = std::vector<double>(p.alpha.begin(), p.alpha.end());
      j["beta"] = std::vector<double>(p.beta.begin(), p.beta.end());
    }
    void operator()(const RatePrior& p) {
      j["alpha"] = std::vector<double>(p.alpha.begin(), p.alpha.end());
      j["beta"] = std::vector<double>(p.beta.begin(), p.beta.end());
    }
    void operator()(const HierRatePrior& p) {
      j["alpha_z"] = std::vector<double>(p.alpha_z.begin(), p.alpha_z.end());
      j["beta_z"] = std::vector<double>(p.beta_z.begin(), p.beta_z.end());
      j["alpha_h"] = std::vector<double>(p.alpha_h.begin(), p.alpha_h.end());
      j["beta_h"] = std::vector<double>(p.beta_h.begin(), p.beta_h.end());
    }
    void operator()(const ShapePrior& p) {
      j["alpha"] = std::vector<double>(p.alpha.begin(), p.alpha.end());
      j["beta"] = std::vector<double>(p.beta.begin(), p.beta.end());
    }
    void operator()(const BgarPrior& p) {
      j["alpha"] = std::vector<double>(p.alpha.begin(), p.alpha.end());
      j["beta"] = std::vector<double>(p.beta.begin(), p.beta.end());
      j["rho"] = std::vector<double>(p.rho.begin(), p.rho.end());
    }
  };
  std::visit(Visitor{j}, prior);
  return j;
}

// --- majorizer statistics ---
//
// The loops below run in a fixed order so that an all-ones mask produces
// bit-identical statistics to the maskless path (multiplying by m = 1.0
// is exact).

namespace {

void check_dims(const Matrix& V, const Matrix& W, const Matrix& H,
                const Mask* mask) {
  if (W.rows() != V.rows() || H.cols() != V.cols() || W.cols() != H.rows()) {
    throw ConfigError("factor dimensions do not match the data");
  }
  if (mask != nullptr &&
      (mask->m.rows() != V.rows() || mask->m.cols() != V.cols())) {
    throw ConfigError("mask dimensions do not match the data");
  }
}

}  // namespace

HStats majorize_h_stats(const Matrix& V, const Matrix& W, const Matrix& Htilde,
                        const Mask* mask) {
  check_dims(V, W, Htilde, mask);
  const Index F = V.rows();
  const Index N = V.cols();
  const Index K = W.cols();
  const Matrix WH = W * Htilde;
  HStats stats;
  stats.P.resize(K, N);
  stats.Q.resize(K, N);
  for (Index n = 0; n < N; ++n) {
    for (Index k = 0; k < K; ++k) {
      double acc = 0.0;
      double qacc = 0.0;
      for (Index f = 0; f < F; ++f) {
        const double w = W(f, k);
        const double mv = mask ? mask->m(f, n) * V(f, n) : V(f, n);
        if (mv != 0.0) {
          const double den = WH(f, n);
          if (!(den > 0.0)) {
            throw NumericalError(
                "zero model intensity at an observed nonzero count");
          }
          acc += w * (mv / den);
        }
        qacc += mask ? mask->m(f, n) * w : w;
      }
      stats.P(k, n) = Htilde(k, n) * acc;
      stats.Q(k, n) = qacc;
    }
  }
  return stats;
}

Matrix majorize_w_stats(const Matrix& V, const Matrix& Wtilde, const Matrix& H,
                        const Mask* mask) {
  check_dims(V, Wtilde, H, mask);
  const Index F = V.rows();
  const Index N = V.cols();
  const Index K = Wtilde.cols();
  const Matrix WH = Wtilde * H;
  Matrix P(F, K);
  for (Index k = 0; k < K; ++k) {
    for (Index f = 0; f < F; ++f) {
      double acc = 0.0;
      for (Index n = 0; n < N; ++n) {
        const double mv = mask ? mask->m(f, n) * V(f, n) : V(f, n);
        if (mv != 0.0) {
          const double den = WH(f, n);
          if (!(den > 0.0)) {
            throw NumericalError(
                "zero model intensity at an observed nonzero count");
          }
          acc += H(k, n) * (mv / den);
        }
      }
      P(f, k) = Wtilde(f, k) * acc;
    }
  }
  return P;
}

HStats majorize_h_stats_exp(const Matrix& V, const Matrix& W,
                            const Matrix& Htilde, const Mask* mask) {
  check_dims(V, W, Htilde, mask);
  const Index F = V.rows();
  const Index N = V.cols();
  const Index K = W.cols();
  const Matrix WH = W * Htilde;
  HStats stats;
  stats.P.resize(K, N);
  stats.Q.resize(K, N);
  for (Index n = 0; n < N; ++n) {
    for (Index k = 0; k < K; ++k) {
      double pacc = 0.0;
      double qacc = 0.0;
      for (Index f = 0; f < F; ++f) {
        const double w = W(f, k);
        const double observed = mask ? mask->m(f, n) : 1.0;
        if (observed != 0.0) {
          const double den = WH(f, n);
          if (!(den > 0.0)) {
            throw NumericalError("zero model intensity at an observed entry");
          }
          const double mv = observed * V(f, n);
          if (mv != 0.0) pacc += w * (mv / (den * den));
          qacc += observed * (w / den);
        }
      }
      const double h = Htilde(k, n);
      stats.P(k, n) = h * h * pacc;
      stats.Q(k, n) = qacc;
    }
  }
  return stats;
}

WStatsExp majorize_w_stats_exp(const Matrix& V, const Matrix& Wtilde,
                               const Matrix& H, const Mask* mask) {
  check_dims(V, Wtilde, H, mask);
  const Index F = V.rows();
  const Index N = V.cols();
  const Index K = Wtilde.cols();
  const Matrix WH = Wtilde * H;
  WStatsExp stats;
  stats.P.resize(F, K);
  stats.Q.resize(F, K);
  for (Index k = 0; k < K; ++k) {
    for (Index f = 0; f < F; ++f) {
      double pacc = 0.0;
      double qacc = 0.0;
      for (Index n = 0; n < N; ++n) {
        const double observed = mask ? mask->m(f, n) : 1.0;
        if (observed != 0.0) {
          const double den = WH(f, n);
          if (!(den > 0.0)) {
            throw NumericalError("zero model intensity at an observed entry");
          }
          const double mv = observed * V(f, n);
          if (mv != 0.0) pacc += H(k, n) * (mv / (den * den));
          qacc += observed * (H(k, n) / den);
        }
      }
      const double w = Wtilde(f, k);
      stats.P(f, k) = w * w * pacc;
      stats.Q(f, k) = qacc;
    }
  }
  return stats;
}

// --- W updates ---

Matrix update_w(const Matrix& w_stats) {
  Matrix W = w_stats;
  for (Index k = 0; k < W.cols(); ++k) {
    double sum = 0.0;
    for (Index f = 0; f < W.rows(); ++f) {
      if (!(W(f, k) >= 0.0)) {
        throw NumericalError("negative W statistic");
      }
      sum += W(f, k);
    }
    if (!(sum > 0.0)) {
      throw NumericalError("dictionary component " + std::to_string(k) +
                           " collapsed (zero statistics column)");
    }
    W.col(k) /= sum;
  }
  return W;
}

Matrix update_w_exp(const WStatsExp& stats) {
  const Index F = stats.P.rows();
  const Index K = stats.P.cols();
  Matrix W(F, K);
  for (Index k = 0; k < K; ++k) {
    // minimize sum_f (p / w + q w) over the probability simplex:
    // w_f = sqrt(p_f / (q_f + lambda)) with lambda chosen so the column
    // sums to one.
    double min_q_support = kInf;
    double p_total = 0.0;
    for (Index f = 0; f < F; ++f) {
      const double p = stats.P(f, k);
      if (!(p >= 0.0)) throw NumericalError("negative W statistic");
      if (p > 0.0) min_q_support = std::min(min_q_support, stats.Q(f, k));
      p_total += p;
    }
    if (!(p_total > 0.0)) {
      throw NumericalError("dictionary component " + std::to_string(k) +
                           " collapsed (zero statistics column)");
    }
    const auto column_sum = [&](double lambda) {
      double s = 0.0;
      for (Index f = 0; f < F; ++f) {
        const double p = stats.P(f, k);
        if (p > 0.0) s += std::sqrt(p / (stats.Q(f, k) + lambda));
      }
      return s - 1.0;
    };
    double lo = -min_q_support + 1e-12 * (1.0 + std::fabs(min_q_support));
    while (!(column_sum(lo) > 0.0)) {
      // degenerate only when the support is a single coordinate
      lo = -min_q_support + 0.5 * (lo + min_q_support);
      if (lo <= -min_q_support) break;
    }
    double hi = std::max(1.0, -min_q_support + 1.0);
    while (column_sum(hi) > 0.0) hi *= 2.0;
    double a = lo;
    double b = hi;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (a + b);
      if (column_sum(mid) > 0.0) {
        a = mid;
      } else {
        b = mid;
      }
      if (b - a <= 1e-15 * std::max(1.0, std::fabs(b))) break;
    }
    const double lambda = 0.5 * (a + b);
    double sum = 0.0;
    for (Index f = 0; f < F; ++f) {
      const double p = stats.P(f, k);
      W(f, k) = p > 0.0 ? std::sqrt(p / (stats.Q(f, k) + lambda)) : 0.0;
      sum += W(f, k);
    }
    W.col(k) /= sum;  // absorb the residual mismatch of the root solve
  }
  return W;
}

// --- objective ---

namespace {

double likelihood_term(const Matrix& V, const Matrix& WH, const Mask* mask,
                       Likelihood lik) {
  double total = 0.0;
  for (Index n = 0; n < V.cols(); ++n) {
    for (Index f = 0; f < V.rows(); ++f) {
      const double m = mask ? mask->m(f, n) : 1.0;
      if (m == 0.0) continue;
      const double v = V(f, n);
      const double lambda = WH(f, n);
      if (lik == Likelihood::Poisson) {
        if (lambda == 0.0 && v == 0.0) continue;
        if (!(lambda > 0.0)) {
          throw NumericalError("zero Poisson intensity at observed entry (" +
                               std::to_string(f) + ", " + std::to_string(n) +
                               ")");
        }
        total += m * (lambda - v * std::log(lambda) + std::lgamma(v + 1.0));
      } else {
        if (!(lambda > 0.0)) {
          throw NumericalError("zero exponential mean at observed entry (" +
                               std::to_string(f) + ", " + std::to_string(n) +
                               ")");
        }
        total += m * (std::log(lambda) + v / lambda);
      }
    }
  }
  return total;
}

double neg_log_gamma_or_throw(double x, double shape, double rate, Index k,
                              Index n) {
  const double lp = random::log_pdf_gamma(x, {shape, rate, 0.0});
  if (lp == -kInf) {
    throw NumericalError("activation out of prior support at (" +
                         std::to_string(k) + ", " + std::to_string(n) + ")");
  }
  return -lp;
}

struct PriorTermVisitor {
  const Matrix& H;
  const AuxVars& aux;

  double operator()(const GapPrior& prior) const {
    double total = 0.0;
    for (Index k = 0; k < H.rows(); ++k) {
      const double alpha = prior.alpha[k];
      const double beta = prior.beta[k];
      if (beta == 0.0) continue;  // flat prior contributes nothing
      const double normalizer = std::lgamma(alpha) - alpha * std::log(beta);
      for (Index n = 0; n < H.cols(); ++n) {
        const double h = H(k, n);
        if (h < 0.0) {
          throw NumericalError("negative activation under the GaP prior");
        }
        double log_term = 0.0;
        if (h > 0.0) {
          log_term = (1.0 - alpha) * std::log(h);
        } else if (alpha > 1.0) {
          throw NumericalError("zero activation with alpha > 1");
        }
        // h == 0 with alpha <= 1: the log term is dropped by convention.
        total += normalizer + log_term + beta * h;
      }
    }
    return total;
  }

  double operator()(const RatePrior& prior) const {
    double total = 0.0;
    for (Index k = 0; k < H.rows(); ++k) {
      for (Index n = 1; n < H.cols(); ++n) {
        total += neg_log_gamma_or_throw(
            H(k, n), prior.alpha[k], prior.beta[k] / H(k, n - 1), k, n);
      }
    }
    return total;
  }

  double operator()(const HierRatePrior& prior) const {
    if (!aux.has_z() && H.cols() > 1) {
      throw ConfigError("hier prior objective needs auxiliary Z");
    }
    double total = 0.0;
    for (Index k = 0; k < H.rows(); ++k) {
      for (Index n = 1; n < H.cols(); ++n) {
        const double z = aux.Z(k, n);
        total += neg_log_gamma_or_throw(
            z, prior.alpha_z[k], prior.beta_z[k] * H(k, n - 1), k, n);
        total += neg_log_gamma_or_throw(H(k, n), prior.alpha_h[k],
                                        prior.beta_h[k] * z, k, n);
      }
    }
    return total;
  }

  double operator()(const ShapePrior& prior) const {
    double total = 0.0;
    for (Index k = 0; k < H.rows(); ++k) {
      for (Index n = 1; n < H.cols(); ++n) {
        total += neg_log_gamma_or_throw(
            H(k, n), prior.alpha[k] * H(k, n - 1), prior.beta[k], k, n);
      }
    }
    return total;
  }

  double operator()(const BgarPrior& prior) const {
    if (!aux.has_b() && H.cols() > 1) {
      throw ConfigError("bgar prior objective needs auxiliary B");
    }
    double total = 0.0;
    for (Index k = 0; k < H.rows(); ++k) {
      const double alpha = prior.alpha[k];
      const double beta = prior.beta[k];
      const double rho = prior.rho[k];
      const double gamma = alpha * (1.0 - rho);
      const double eta = alpha * rho;
      total += neg_log_gamma_or_throw(H(k, 0), alpha, beta, k, 0);
      for (Index n = 1; n < H.cols(); ++n) {
        const double b = aux.B(k, n);
        const double lb = random::log_pdf_beta(b, eta, gamma);
        if (lb == -kInf) {
          throw NumericalError("thinning variable out of support at (" +
                               std::to_string(k) + ", " + std::to_string(n) +
                               ")");
        }
        total -= lb;
        const double innovation = H(k, n) - b * H(k, n - 1);
        total += neg_log_gamma_or_throw(innovation, gamma, beta, k, n);
      }
    }
    return total;
  }
};

}  // namespace

double objective(const CountMatrix& V, const FactorPair& factors,
                 const AuxVars& aux, const PriorSpec& prior, const Mask* mask,
                 Likelihood likelihood) {
  check_dims(V.values, factors.W, factors.H, mask);
  const Matrix WH = factors.W * factors.H;
  const double lik = likelihood_term(V.values, WH, mask, likelihood);
  const double pri = std::visit(PriorTermVisitor{factors.H, aux}, prior);
  return lik + pri;
}

// --- deterministic parallel loop ---

namespace detail {

void parallel_for(Index count, int threads,
                  const std::function<void(Index)>& body) {
  if (threads <= 1 || count <= 1) {
    for (Index i = 0; i < count; ++i) body(i);
    return;
  }
  const int workers = static_cast<int>(
      std::min<Index>(count, static_cast<Index>(threads)));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (Index i = w; i < count; i += workers) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace detail

}  // namespace tnmf
