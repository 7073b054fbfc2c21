#include "tnmf/chains.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

namespace tnmf::chains {

using random::RandomStream;

namespace {

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ParameterError(std::string(name) + " must be positive and finite");
  }
}

void require_length(int n) {
  if (n < 1) throw ParameterError("chain length must be at least 1");
}

// Gamma draw that tolerates an exactly-zero shape (degenerate at 0),
// which arises once a shape-chained trajectory is absorbed.
double gamma_or_zero(double shape, double rate, RandomStream& rng) {
  if (shape == 0.0) return 0.0;
  return random::sample_gamma(shape, rate, rng);
}

}  // namespace

void RateChainParams::validate() const {
  require_positive(alpha, "alpha");
  require_positive(beta, "beta");
}

void HierRateChainParams::validate() const {
  require_positive(alpha_z, "alpha_z");
  require_positive(beta_z, "beta_z");
  require_positive(alpha_h, "alpha_h");
  require_positive(beta_h, "beta_h");
}

void ShapeChainParams::validate() const {
  require_positive(alpha, "alpha");
  require_positive(beta, "beta");
}

void HierShapeChainParams::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw ParameterError("alpha must be non-negative and finite");
  }
  require_positive(beta, "beta");
}

void BgarChainParams::validate() const {
  require_positive(alpha, "alpha");
  require_positive(beta, "beta");
  if (!(rho >= 0.0) || !(rho < 1.0)) {
    throw ParameterError("rho must lie in [0, 1)");
  }
}

ChainKind kind_of(const ChainParams& params) {
  struct Visitor {
    ChainKind operator()(const RateChainParams&) { return ChainKind::Rate; }
    ChainKind operator()(const HierRateChainParams&) { return ChainKind::HierRate; }
    ChainKind operator()(const ShapeChainParams&) { return ChainKind::Shape; }
    ChainKind operator()(const HierShapeChainParams&) { return ChainKind::HierShape; }
    ChainKind operator()(const BgarChainParams&) { return ChainKind::Bgar; }
  };
  return std::visit(Visitor{}, params);
}

ChainTrace simulate_rate_chain(double h1, double alpha, double beta, int n,
                               RandomStream& rng) {
  RateChainParams params{alpha, beta};
  params.validate();
  require_positive(h1, "h1");
  require_length(n);
  ChainTrace trace;
  trace.params = params;
  trace.h1 = h1;
  trace.h.reserve(static_cast<std::size_t>(n));
  trace.h.push_back(h1);
  for (int i = 1; i < n; ++i) {
    // multiplicative noise form: h_n = h_{n-1} * phi, phi ~ Gamma(alpha, beta)
    const double phi = random::sample_gamma(alpha, beta, rng);
    trace.h.push_back(trace.h.back() * phi);
  }
  return trace;
}

ChainTrace simulate_hier_rate_chain(double h1, double alpha_z, double beta_z,
                                    double alpha_h, double beta_h, int n,
                                    RandomStream& rng) {
  HierRateChainParams params{alpha_z, beta_z, alpha_h, beta_h};
  params.validate();
  require_positive(h1, "h1");
  require_length(n);
  ChainTrace trace;
  trace.params = params;
  trace.h1 = h1;
  trace.h.reserve(static_cast<std::size_t>(n));
  trace.aux.reserve(static_cast<std::size_t>(n > 0 ? n - 1 : 0));
  trace.h.push_back(h1);
  for (int i = 1; i < n; ++i) {
    const double prev = trace.h.back();
    const double z =
        prev > 0.0 ? random::sample_gamma(alpha_z, beta_z * prev, rng)
                   : std::numeric_limits<double>::infinity();
    const double h = z > 0.0 && std::isfinite(z)
                         ? random::sample_gamma(alpha_h, beta_h * z, rng)
                         : 0.0;
    trace.aux.push_back(z);
    trace.h.push_back(h);
  }
  return trace;
}

ChainTrace simulate_shape_chain(double h1, double alpha, double beta, int n,
                                RandomStream& rng) {
  ShapeChainParams params{alpha, beta};
  params.validate();
  require_positive(h1, "h1");
  require_length(n);
  ChainTrace trace;
  trace.params = params;
  trace.h1 = h1;
  trace.h.reserve(static_cast<std::size_t>(n));
  trace.h.push_back(h1);
  for (int i = 1; i < n; ++i) {
    trace.h.push_back(gamma_or_zero(alpha * trace.h.back(), beta, rng));
  }
  return trace;
}

ChainTrace simulate_hier_shape_chain(double h1, double alpha, double beta,
                                     int n, RandomStream& rng) {
  HierShapeChainParams params{alpha, beta};
  params.validate();
  if (!(h1 >= 0.0)) throw ParameterError("h1 must be non-negative");
  require_length(n);
  ChainTrace trace;
  trace.params = params;
  trace.h1 = h1;
  trace.h.reserve(static_cast<std::size_t>(n));
  trace.aux.reserve(static_cast<std::size_t>(n > 0 ? n - 1 : 0));
  trace.h.push_back(h1);
  for (int i = 1; i < n; ++i) {
    const long long z = random::sample_poisson(beta * trace.h.back(), rng);
    trace.aux.push_back(static_cast<double>(z));
    trace.h.push_back(gamma_or_zero(alpha + static_cast<double>(z), beta, rng));
  }
  return trace;
}

ChainTrace simulate_bgar(double alpha, double beta, double rho, int n,
                         RandomStream& rng) {
  BgarChainParams params{alpha, beta, rho};
  params.validate();
  require_length(n);
  ChainTrace trace;
  trace.params = params;
  trace.h.reserve(static_cast<std::size_t>(n));
  trace.aux.reserve(static_cast<std::size_t>(n > 0 ? n - 1 : 0));
  trace.h.push_back(random::sample_gamma(alpha, beta, rng));
  trace.h1 = trace.h.front();
  for (int i = 1; i < n; ++i) {
    double b, eps;
    if (rho == 0.0) {
      b = 0.0;  // Beta(0, alpha) is degenerate at 0: i.i.d. regime
      eps = random::sample_gamma(alpha, beta, rng);
    } else {
      b = random::sample_beta(alpha * rho, alpha * (1.0 - rho), rng);
      eps = random::sample_gamma(alpha * (1.0 - rho), beta, rng);
    }
    trace.aux.push_back(b);
    trace.h.push_back(b * trace.h.back() + eps);
  }
  return trace;
}

ChainTrace simulate(const ChainParams& params, double h1, int n,
                    RandomStream& rng) {
  struct Visitor {
    double h1;
    int n;
    RandomStream& rng;
    ChainTrace operator()(const RateChainParams& p) {
      return simulate_rate_chain(h1, p.alpha, p.beta, n, rng);
    }
    ChainTrace operator()(const HierRateChainParams& p) {
      return simulate_hier_rate_chain(h1, p.alpha_z, p.beta_z, p.alpha_h,
                                      p.beta_h, n, rng);
    }
    ChainTrace operator()(const ShapeChainParams& p) {
      return simulate_shape_chain(h1, p.alpha, p.beta, n, rng);
    }
    ChainTrace operator()(const HierShapeChainParams& p) {
      return simulate_hier_shape_chain(h1, p.alpha, p.beta, n, rng);
    }
    ChainTrace operator()(const BgarChainParams& p) {
      return simulate_bgar(p.alpha, p.beta, p.rho, n, rng);
    }
  };
  return std::visit(Visitor{h1, n, rng}, params);
}

std::vector<ChainTrace> simulate_replicas(const ChainParams& params, double h1,
                                          int n, int replicas,
                                          const random::RandomStream& base) {
  if (replicas < 0) throw ParameterError("replicas must be non-negative");
  std::vector<ChainTrace> traces;
  traces.reserve(static_cast<std::size_t>(replicas));
  for (int r = 0; r < replicas; ++r) {
    RandomStream rng = base.substream(static_cast<std::uint64_t>(r));
    traces.push_back(simulate(params, h1, n, rng));
  }
  return traces;
}

namespace {

double pow_int(double base, int exponent) {
  return std::pow(base, static_cast<double>(exponent));
}

}  // namespace

double analytic_mean(const ChainParams& params, double h1, int n) {
  if (n < 1) throw ParameterError("n must be at least 1");
  struct Visitor {
    double h1;
    int n;
    double operator()(const RateChainParams& p) {
      p.validate();
      return h1 * pow_int(p.alpha / p.beta, n - 1);
    }
    double operator()(const HierRateChainParams& p) {
      p.validate();
      if (!(p.alpha_z > 1.0)) {
        throw DomainError("hier-rate marginal mean requires alpha_z > 1");
      }
      const double ratio = (p.beta_z / p.beta_h) * p.alpha_h / (p.alpha_z - 1.0);
      return h1 * pow_int(ratio, n - 1);
    }
    double operator()(const ShapeChainParams& p) {
      p.validate();
      return h1 * pow_int(p.alpha / p.beta, n - 1);
    }
    double operator()(const HierShapeChainParams& p) {
      p.validate();
      return h1 + (n - 1) * p.alpha / p.beta;
    }
    double operator()(const BgarChainParams& p) {
      p.validate();
      return p.alpha / p.beta;
    }
  };
  return std::visit(Visitor{h1, n}, params);
}

double analytic_variance(const ChainParams& params, double h1, int n) {
  if (n < 1) throw ParameterError("n must be at least 1");
  struct Visitor {
    double h1;
    int n;
    double operator()(const RateChainParams& p) {
      p.validate();
      const double b2 = p.beta * p.beta;
      const double m2 = (p.alpha * p.alpha + p.alpha) / b2;
      const double m1sq = p.alpha * p.alpha / b2;
      return h1 * h1 * (pow_int(m2, n - 1) - pow_int(m1sq, n - 1));
    }
    double operator()(const HierRateChainParams& p) {
      p.validate();
      if (!(p.alpha_z > 2.0)) {
        throw DomainError("hier-rate marginal variance requires alpha_z > 2");
      }
      const double bt = p.beta_z / p.beta_h;
      const double az = p.alpha_z;
      const double ah = p.alpha_h;
      const double mean_sq = ah * ah / ((az - 1.0) * (az - 1.0));
      const double var_term =
          ah * (ah + az - 1.0) / ((az - 1.0) * (az - 1.0) * (az - 2.0));
      return h1 * h1 * pow_int(bt * bt, n - 1) *
             (pow_int(mean_sq + var_term, n - 1) - pow_int(mean_sq, n - 1));
    }
    double operator()(const ShapeChainParams& p) {
      p.validate();
      if (n == 1) return 0.0;
      const double r = p.alpha / p.beta;
      double geometric = 0.0;
      if (r == 1.0) {
        geometric = n - 1;
      } else {
        geometric = (pow_int(r, n - 1) - 1.0) / (r - 1.0);
      }
      return h1 * (1.0 / p.beta) * pow_int(r, n - 1) * geometric;
    }
    double operator()(const HierShapeChainParams& p) {
      p.validate();
      const double steps = n - 1;
      return steps * (2.0 / p.beta) * h1 +
             steps * steps * p.alpha / (p.beta * p.beta);
    }
    double operator()(const BgarChainParams& p) {
      p.validate();
      return p.alpha / (p.beta * p.beta);
    }
  };
  return std::visit(Visitor{h1, n}, params);
}

Moments analytic_moments(const ChainParams& params, double h1, int n) {
  return Moments{analytic_mean(params, h1, n),
                 analytic_variance(params, h1, n)};
}

RateRegime classify_rate_regime(double alpha, double beta) {
  RateChainParams{alpha, beta}.validate();
  const double threshold = std::sqrt(alpha * (alpha + 1.0));
  if (beta > threshold) return RateRegime::BothToZero;
  if (beta == threshold) return RateRegime::VarToOneMeanToZero;
  if (beta > alpha) return RateRegime::VarToInfMeanToZero;
  if (beta == alpha) return RateRegime::MeanOneVarToInf;
  return RateRegime::BothToInf;
}

const char* rate_regime_name(RateRegime regime) {
  switch (regime) {
    case RateRegime::BothToZero: return "mean->0, var->0";
    case RateRegime::VarToOneMeanToZero: return "mean->0, var->1";
    case RateRegime::VarToInfMeanToZero: return "mean->0, var->inf";
    case RateRegime::MeanOneVarToInf: return "mean=1, var->inf";
    case RateRegime::BothToInf: return "mean->inf, var->inf";
  }
  return "unknown";
}

double bgar_autocorrelation(double rho, int lag) {
  if (!(rho >= 0.0) || !(rho < 1.0)) throw ParameterError("rho must be in [0, 1)");
  if (lag < 1) throw ParameterError("lag must be at least 1");
  return pow_int(rho, lag);
}

void write_traces_csv(std::ostream& os, const std::vector<ChainTrace>& traces) {
  const bool has_aux = !traces.empty() && !traces.front().aux.empty();
  os << (has_aux ? "replica,n,h,aux\n" : "replica,n,h\n");
  char buf[64];
  for (std::size_t r = 0; r < traces.size(); ++r) {
    const ChainTrace& t = traces[r];
    for (std::size_t i = 0; i < t.h.size(); ++i) {
      os << (r + 1) << ',' << (i + 1) << ',';
      std::snprintf(buf, sizeof(buf), "%.17g", t.h[i]);
      os << buf;
      if (has_aux) {
        os << ',';
        if (i >= 1 && i - 1 < t.aux.size()) {
          std::snprintf(buf, sizeof(buf), "%.17g", t.aux[i - 1]);
          os << buf;
        }
      }
      os << '\n';
    }
  }
}

}  // namespace tnmf::chains
