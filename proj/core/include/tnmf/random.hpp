#pragma once

#include <cstdint>

#include "tnmf/errors.hpp"

namespace tnmf::random {

/// Deterministic pseudo-random stream (xoshiro256++ seeded via splitmix64).
///
/// Equal seeds and equal call sequences produce identical draws on every
/// platform. There is no global state: every sampler takes a stream by
/// reference. Independent parallel work should use substream(), which
/// derives a statistically independent stream from the parent seed.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed = 0);

  /// Stream derived from (seed, index); independent for distinct indices.
  RandomStream substream(std::uint64_t index) const;

  std::uint64_t next_u64();
  double uniform();      ///< in [0, 1)
  double uniform_pos();  ///< in (0, 1)
  double normal();       ///< standard normal, Marsaglia polar method

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t s_[4];
  std::uint64_t seed_;
};

/// Shape-rate Gamma, optionally shifted by a location parameter.
struct GammaParams {
  double shape = 1.0;
  double rate = 1.0;
  double loc = 0.0;

  void validate() const;
};

/// Four-parameter Beta-Prime distribution on [0, +inf).
struct BetaPrimeParams {
  double alpha = 1.0;
  double beta = 1.0;
  double p = 1.0;
  double q = 1.0;

  void validate() const;
};

double sample_gamma(const GammaParams& params, RandomStream& rng);
double sample_gamma(double shape, double rate, RandomStream& rng);

/// log of a Gamma(shape, 1) draw; numerically meaningful even for shapes
/// far below one, where the draw itself would underflow.
double log_sample_gamma(double shape, RandomStream& rng);

/// Beta draw in the open interval (0, 1).
double sample_beta(double a, double b, RandomStream& rng);

/// Exact Poisson sampling for any mean >= 0 (inversion below 10,
/// transformed rejection above; no normal approximation).
long long sample_poisson(double mean, RandomStream& rng);

/// Exact log density, including the log Gamma(shape) normalizer.
/// Returns -inf for x <= loc.
double log_pdf_gamma(double x, const GammaParams& params);

/// Beta(a, b) log density on (0, 1); -inf outside.
double log_pdf_beta(double x, double a, double b);

/// Poisson log mass with the conventions 0 log 0 = 0; -inf when
/// mean == 0 and k > 0. Accepts real-valued k >= 0 (generalized counts).
double log_pmf_poisson(double k, double mean);

double beta_prime_log_pdf(double x, const BetaPrimeParams& params);
double beta_prime_pdf(double x, const BetaPrimeParams& params);

double log_beta_function(double a, double b);

}  // namespace tnmf::random
