#include "tnmf/random.hpp"

#include <cmath>
#include <limits>

namespace tnmf::random {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

RandomStream::RandomStream(std::uint64_t seed) : seed_(seed) {
  std::uint64_t x = seed;
  for (auto& s : s_) s = splitmix64(x);
}

RandomStream RandomStream::substream(std::uint64_t index) const {
  std::uint64_t x = seed_ ^ 0x5851f42d4c957f2dULL;
  std::uint64_t mixed = splitmix64(x) ^ (index + 0x9e3779b97f4a7c15ULL);
  return RandomStream(splitmix64(mixed));
}

std::uint64_t RandomStream::next_u64() {
  const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double RandomStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::uniform_pos() {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RandomStream::normal() {
  for (;;) {
    const double u = 2.0 * uniform() - 1.0;
    const double v = 2.0 * uniform() - 1.0;
    const double s = u * u + v * v;
    if (s > 0.0 && s < 1.0) {
      return u * std::sqrt(-2.0 * std::log(s) / s);
    }
  }
}

void GammaParams::validate() const {
  if (!(shape > 0.0) || !std::isfinite(shape)) {
    throw ParameterError("gamma shape must be positive and finite");
  }
  if (!(rate > 0.0) || !std::isfinite(rate)) {
    throw ParameterError("gamma rate must be positive and finite");
  }
  if (!(loc >= 0.0) || !std::isfinite(loc)) {
    throw ParameterError("gamma loc must be non-negative and finite");
  }
}

void BetaPrimeParams::validate() const {
  if (!(alpha > 0.0) || !(beta > 0.0) || !(p > 0.0) || !(q > 0.0)) {
    throw ParameterError("beta-prime parameters must all be positive");
  }
}

namespace {

// Marsaglia-Tsang squeeze method; exact for shape >= 1.
double gamma_unit_rate_shape_ge1(double shape, RandomStream& rng) {
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform_pos();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

}  // namespace

double log_sample_gamma(double shape, RandomStream& rng) {
  if (!(shape > 0.0)) throw ParameterError("gamma shape must be positive");
  if (shape >= 1.0) {
    return std::log(gamma_unit_rate_shape_ge1(shape, rng));
  }
  // Boost trick: G(a) = G(a + 1) * U^{1/a}, applied in log space.
  const double g = gamma_unit_rate_shape_ge1(shape + 1.0, rng);
  return std::log(g) + std::log(rng.uniform_pos()) / shape;
}

double sample_gamma(const GammaParams& params, RandomStream& rng) {
  params.validate();
  double g;
  if (params.shape >= 1.0) {
    g = gamma_unit_rate_shape_ge1(params.shape, rng);
  } else {
    g = std::exp(log_sample_gamma(params.shape, rng));
  }
  return params.loc + g / params.rate;
}

double sample_gamma(double shape, double rate, RandomStream& rng) {
  return sample_gamma(GammaParams{shape, rate, 0.0}, rng);
}

double sample_beta(double a, double b, RandomStream& rng) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw ParameterError("beta parameters must be positive");
  }
  // Ratio of log-space Gamma draws; stable for tiny shapes where the
  // draws themselves underflow.
  const double lx = log_sample_gamma(a, rng);
  const double ly = log_sample_gamma(b, rng);
  const double r = 1.0 / (1.0 + std::exp(ly - lx));
  const double lo = std::numeric_limits<double>::min();
  const double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  return std::fmin(std::fmax(r, lo), hi);
}

long long sample_poisson(double mean, RandomStream& rng) {
  if (!(mean >= 0.0) || !std::isfinite(mean)) {
    throw ParameterError("poisson mean must be non-negative and finite");
  }
  if (mean == 0.0) return 0;
  if (mean < 10.0) {
    // Knuth inversion by sequential search.
    const double l = std::exp(-mean);
    long long k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= rng.uniform_pos();
    } while (p > l);
    return k - 1;
  }
  // Hoermann's PTRS transformed rejection; exact for mean >= 10.
  const double b = 0.931 + 2.53 * std::sqrt(mean);
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double v_r = 0.9277 - 3.6224 / (b - 2.0);
  const double log_mean = std::log(mean);
  for (;;) {
    double u = rng.uniform_pos() - 0.5;
    const double v = rng.uniform_pos();
    const double us = 0.5 - std::fabs(u);
    const double kf = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= v_r) return static_cast<long long>(kf);
    if (kf < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
        kf * log_mean - mean - std::lgamma(kf + 1.0)) {
      return static_cast<long long>(kf);
    }
  }
}

double log_pdf_gamma(double x, const GammaParams& params) {
  params.validate();
  const double y = x - params.loc;
  if (!(y > 0.0)) return -kInf;
  return params.shape * std::log(params.rate) - std::lgamma(params.shape) +
         (params.shape - 1.0) * std::log(y) - params.rate * y;
}

double log_beta_function(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

double log_pdf_beta(double x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw ParameterError("beta parameters must be positive");
  }
  if (!(x > 0.0) || !(x < 1.0)) return -kInf;
  return (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) -
         log_beta_function(a, b);
}

double log_pmf_poisson(double k, double mean) {
  if (!(k >= 0.0) || !(mean >= 0.0)) {
    throw ParameterError("poisson log-pmf needs k >= 0 and mean >= 0");
  }
  if (mean == 0.0) return k == 0.0 ? 0.0 : -kInf;
  return k * std::log(mean) - mean - std::lgamma(k + 1.0);
}

double beta_prime_log_pdf(double x, const BetaPrimeParams& params) {
  params.validate();
  if (x < 0.0) return -kInf;
  const double lead =
      std::log(params.p) - std::log(params.q) -
      log_beta_function(params.alpha, params.beta);
  const double ap = params.alpha * params.p;
  if (x == 0.0) {
    if (ap > 1.0) return -kInf;  // density vanishes at the origin
    if (ap == 1.0) return lead;
    return kInf;  // density diverges for alpha * p < 1
  }
  const double t = params.p * (std::log(x) - std::log(params.q));
  // log(1 + e^t) without overflow for large t
  const double log1pe = t > 36.0 ? t : std::log1p(std::exp(t));
  return lead + (ap - 1.0) * (std::log(x) - std::log(params.q)) -
         (params.alpha + params.beta) * log1pe;
}

double beta_prime_pdf(double x, const BetaPrimeParams& params) {
  return std::exp(beta_prime_log_pdf(x, params));
}

}  // namespace tnmf::random
