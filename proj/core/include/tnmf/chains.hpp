#pragma once

#include <iosfwd>
#include <variant>
#include <vector>

#include "tnmf/errors.hpp"
#include "tnmf/random.hpp"

namespace tnmf::chains {

enum class ChainKind { Rate, HierRate, Shape, HierShape, Bgar };

/// h_n | h_{n-1} ~ Gamma(alpha, beta / h_{n-1})
struct RateChainParams {
  double alpha = 1.0;
  double beta = 1.0;
  void validate() const;
};

/// z_n | h_{n-1} ~ Gamma(alpha_z, beta_z h_{n-1}),
/// h_n | z_n     ~ Gamma(alpha_h, beta_h z_n)
struct HierRateChainParams {
  double alpha_z = 1.0;
  double beta_z = 1.0;
  double alpha_h = 1.0;
  double beta_h = 1.0;
  void validate() const;
};

/// h_n | h_{n-1} ~ Gamma(alpha h_{n-1}, beta)
struct ShapeChainParams {
  double alpha = 1.0;
  double beta = 1.0;
  void validate() const;
};

/// z_n | h_{n-1} ~ Poisson(beta h_{n-1}), h_n | z_n ~ Gamma(alpha + z_n, beta).
/// alpha = 0 is allowed; the chain is absorbed at 0 once z_n = 0.
struct HierShapeChainParams {
  double alpha = 1.0;
  double beta = 1.0;
  void validate() const;
};

/// h_1 ~ Gamma(alpha, beta), h_n = b_n h_{n-1} + eps_n with
/// b_n ~ Beta(alpha rho, alpha (1 - rho)), eps_n ~ Gamma(alpha (1 - rho), beta).
struct BgarChainParams {
  double alpha = 1.0;
  double beta = 1.0;
  double rho = 0.0;  // in [0, 1)
  void validate() const;
};

using ChainParams = std::variant<RateChainParams, HierRateChainParams,
                                 ShapeChainParams, HierShapeChainParams,
                                 BgarChainParams>;

ChainKind kind_of(const ChainParams& params);

/// A simulated trajectory. h is stored 0-based (h[0] is the paper's h_1);
/// aux holds z_2..z_N or b_2..b_N when the chain has auxiliary draws, so
/// aux.size() == h.size() - 1 for those chains and 0 otherwise.
struct ChainTrace {
  std::vector<double> h;
  std::vector<double> aux;
  ChainParams params;
  double h1 = 0.0;
};

ChainTrace simulate_rate_chain(double h1, double alpha, double beta, int n,
                               random::RandomStream& rng);
ChainTrace simulate_hier_rate_chain(double h1, double alpha_z, double beta_z,
                                    double alpha_h, double beta_h, int n,
                                    random::RandomStream& rng);
ChainTrace simulate_shape_chain(double h1, double alpha, double beta, int n,
                                random::RandomStream& rng);
ChainTrace simulate_hier_shape_chain(double h1, double alpha, double beta,
                                     int n, random::RandomStream& rng);
/// BGAR draws its own h_1; the h1 argument of simulate() is ignored for it.
ChainTrace simulate_bgar(double alpha, double beta, double rho, int n,
                         random::RandomStream& rng);

/// Dispatch on the parameter family.
ChainTrace simulate(const ChainParams& params, double h1, int n,
                    random::RandomStream& rng);

/// Independent replicas from substreams of `base`; replica r uses
/// base.substream(r), so the set is reproducible and order-free.
std::vector<ChainTrace> simulate_replicas(const ChainParams& params, double h1,
                                          int n, int replicas,
                                          const random::RandomStream& base);

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Closed-form marginal mean of h_n (1-based n, matching the papers'
/// indexing convention). Throws DomainError where the formula is undefined
/// (hierarchical rate chain with alpha_z <= 1).
double analytic_mean(const ChainParams& params, double h1, int n);

/// Closed-form marginal variance of h_n; DomainError for the hierarchical
/// rate chain with alpha_z <= 2, where the formula does not exist.
double analytic_variance(const ChainParams& params, double h1, int n);

Moments analytic_moments(const ChainParams& params, double h1, int n);

/// Long-run regimes of the rate chain, classified by comparing beta to
/// alpha and sqrt(alpha (alpha + 1)).
enum class RateRegime {
  BothToZero,          // beta > sqrt(alpha (alpha + 1))
  VarToOneMeanToZero,  // beta = sqrt(alpha (alpha + 1))
  VarToInfMeanToZero,  // alpha < beta < sqrt(alpha (alpha + 1))
  MeanOneVarToInf,     // beta = alpha
  BothToInf,           // beta < alpha
};

RateRegime classify_rate_regime(double alpha, double beta);
const char* rate_regime_name(RateRegime regime);

/// corr(h_n, h_{n+r}) = rho^r for the BGAR process.
double bgar_autocorrelation(double rho, int lag);

/// CSV export, header "replica,n,h" (plus ",aux" when the traces carry
/// auxiliary draws). n is 1-based; the aux cell is empty at n = 1.
void write_traces_csv(std::ostream& os, const std::vector<ChainTrace>& traces);

}  // namespace tnmf::chains
