#include <cmath>
#include <limits>

#include "tnmf/nmf.hpp"

namespace tnmf {

namespace {

std::vector<double> row_major(const Matrix& m) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  }
  return out;
}

FactorPair init_factors(Index F, Index N, Index K, random::RandomStream& rng) {
  FactorPair factors;
  factors.W.resize(F, K);
  for (Index k = 0; k < K; ++k) {
    for (Index f = 0; f < F; ++f) {
      factors.W(f, k) = random::sample_gamma(1.0, 1.0, rng);
    }
  }
  for (Index k = 0; k < K; ++k) {
    factors.W.col(k) /= factors.W.col(k).sum();
  }
  factors.H.resize(K, N);
  for (Index k = 0; k < K; ++k) {
    for (Index n = 0; n < N; ++n) {
      factors.H(k, n) = random::sample_gamma(1.0, 1.0, rng);
    }
  }
  return factors;
}

AuxVars init_aux(const PriorSpec& prior, const Matrix& H) {
  AuxVars aux;
  const Index K = H.rows();
  const Index N = H.cols();
  if (N < 2) return aux;
  if (const auto* hier = std::get_if<HierRatePrior>(&prior)) {
    aux.Z = Matrix::Zero(K, N);
    for (Index k = 0; k < K; ++k) {
      for (Index n = 1; n < N; ++n) {
        aux.Z(k, n) =
            coord::hier_z(hier->alpha_z[k], hier->beta_z[k], hier->alpha_h[k],
                          hier->beta_h[k], H(k, n - 1), H(k, n));
      }
    }
  } else if (std::holds_alternative<BgarPrior>(prior)) {
    aux.B = Matrix::Zero(K, N);
    for (Index k = 0; k < K; ++k) {
      for (Index n = 1; n < N; ++n) {
        aux.B(k, n) = std::min(0.5, 0.5 * H(k, n) / H(k, n - 1));
      }
    }
  }
  return aux;
}

}  // namespace

FitResult fit(const CountMatrix& V, const PriorSpec& prior,
              const FitConfig& config, const Mask* mask) {
  V.validate();
  if (mask != nullptr) {
    if (mask->m.rows() != V.rows() || mask->m.cols() != V.cols()) {
      throw ConfigError("mask dimensions do not match the data");
    }
    mask->validate();
  }
  if (config.k < 1) throw ConfigError("K must be at least 1");
  if (!(config.tol > 0.0)) throw ConfigError("tol must be positive");
  if (config.max_iters < 0) throw ConfigError("max_iters must be >= 0");
  validate_prior(prior, config.k);

  const bool exponential = config.likelihood == Likelihood::Exponential;
  const bool is_gap = std::holds_alternative<GapPrior>(prior);
  const bool is_bgar = std::holds_alternative<BgarPrior>(prior);
  if (exponential && !is_gap && !is_bgar) {
    throw ConfigError(
        "the exponential likelihood is supported with the gap and bgar "
        "priors only");
  }

  random::RandomStream rng(config.seed);
  FitResult result;
  result.factors = init_factors(V.rows(), V.cols(), config.k, rng);
  result.aux = init_aux(prior, result.factors.H);

  result.objective_trace.push_back(objective(
      V, result.factors, result.aux, prior, mask, config.likelihood));

  const int threads = std::max(1, config.threads);
  for (int it = 1; it <= config.max_iters; ++it) {
    Matrix& W = result.factors.W;
    Matrix& H = result.factors.H;

    const HStats stats = exponential
                             ? majorize_h_stats_exp(V.values, W, H, mask)
                             : majorize_h_stats(V.values, W, H, mask);
    BgarUpdateDiag sweep_diag;
    std::visit(
        [&](const auto& p) {
          using P = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<P, GapPrior>) {
            if (exponential) {
              update_h_gap_exp(stats, H, p, threads);
            } else {
              update_h_gap(stats, H, p, threads);
            }
          } else if constexpr (std::is_same_v<P, RatePrior>) {
            update_h_rate(stats, H, p, threads);
          } else if constexpr (std::is_same_v<P, HierRatePrior>) {
            update_hier_rate(stats, H, result.aux.Z, p, threads);
          } else if constexpr (std::is_same_v<P, ShapePrior>) {
            update_h_shape(stats, H, p, threads);
          } else {
            if (exponential) {
              update_bgar_exp(stats, H, result.aux.B, p, &sweep_diag, threads);
            } else {
              update_bgar(stats, H, result.aux.B, p, &sweep_diag, threads);
            }
          }
        },
        prior);
    result.diagnostics.bgar_endpoint_fallbacks += sweep_diag.endpoint_fallbacks;

    if (exponential) {
      W = update_w_exp(majorize_w_stats_exp(V.values, W, H, mask));
    } else {
      W = update_w(majorize_w_stats(V.values, W, H, mask));
    }

    const double value = objective(V, result.factors, result.aux, prior, mask,
                                   config.likelihood);
    if (!std::isfinite(value)) {
      throw NumericalError("objective became non-finite at iteration " +
                           std::to_string(it) + " (" +
                           prior_family_name(prior) + " prior, " +
                           likelihood_name(config.likelihood) +
                           " likelihood)");
    }
    const double prev = result.objective_trace.back();
    result.objective_trace.push_back(value);
    result.iterations = it;
    if (config.on_iteration) {
      config.on_iteration(it, result.factors, result.aux);
    }
    const double rel =
        (prev - value) / std::max(std::fabs(prev), 1e-300);
    if (rel < config.tol) {
      result.converged = true;
      break;
    }
  }
  return result;
}

nlohmann::json fit_result_to_json(const FitResult& result,
                                  const PriorSpec& prior,
                                  Likelihood likelihood) {
  nlohmann::json j;
  j["f"] = result.factors.W.rows();
  j["n"] = result.factors.H.cols();
  j["k"] = result.factors.W.cols();
  j["likelihood"] = likelihood_name(likelihood);
  j["prior"] = prior_to_json(prior);
  j["objective_trace"] = result.objective_trace;
  j["iterations"] = result.iterations;
  j["converged"] = result.converged;
  j["w"] = row_major(result.factors.W);
  j["h"] = row_major(result.factors.H);
  if (result.aux.has_z()) j["aux"]["z"] = row_major(result.aux.Z);
  if (result.aux.has_b()) j["aux"]["b"] = row_major(result.aux.B);
  j["diagnostics"] = {
      {"bgar_endpoint_fallbacks", result.diagnostics.bgar_endpoint_fallbacks}};
  return j;
}

}  // namespace tnmf
