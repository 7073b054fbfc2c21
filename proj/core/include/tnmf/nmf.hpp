#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <nlohmann/json.hpp>
#include <string>
#include <variant>
#include <vector>

#include "tnmf/errors.hpp"
#include "tnmf/random.hpp"

namespace tnmf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class Likelihood { Poisson, Exponential };

std::string likelihood_name(Likelihood lik);

/// F x N non-negative observation matrix (columns are time steps).
struct CountMatrix {
  Matrix values;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }
  void validate() const;  // finite, entrywise >= 0, non-empty
};

/// Entry mask: 1 = observed, 0 = hidden. Absent masks mean all-observed.
struct Mask {
  Matrix m;

  void validate() const;  // entries in {0, 1}
  static Mask ones(Index rows, Index cols);
  static Mask with_hidden_columns(Index rows, Index cols,
                                  const std::vector<Index>& hidden);
};

/// Dictionary W (F x K, columns l1-normalized after every W update) and
/// activations H (K x N, strictly positive except under the GaP prior).
struct FactorPair {
  Matrix W;
  Matrix H;
};

// --- priors on H (one hyperparameter per component k) ---

struct GapPrior {
  Vector alpha, beta;  // beta = 0 with alpha = 1 gives the flat KL-NMF prior
  static GapPrior constant(Index k, double alpha, double beta);
};

struct RatePrior {
  Vector alpha, beta;
  static RatePrior constant(Index k, double alpha, double beta);
};

struct HierRatePrior {
  Vector alpha_z, beta_z, alpha_h, beta_h;  // alpha_h >= 1 required
  static HierRatePrior constant(Index k, double alpha_z, double beta_z,
                                double alpha_h, double beta_h);
};

struct ShapePrior {
  Vector alpha, beta;
  static ShapePrior constant(Index k, double alpha, double beta);
};

struct BgarPrior {
  Vector alpha, beta, rho;  // admissible: alpha(1-rho) > 1 and alpha rho > 1
  static BgarPrior constant(Index k, double alpha, double beta, double rho);
};

using PriorSpec =
    std::variant<GapPrior, RatePrior, HierRatePrior, ShapePrior, BgarPrior>;

std::string prior_family_name(const PriorSpec& prior);
Index prior_components(const PriorSpec& prior);
void validate_prior(const PriorSpec& prior, Index k);
nlohmann::json prior_to_json(const PriorSpec& prior);

struct Admissibility {
  bool ok = false;
  std::string reason;
};

/// Existence condition for the BGAR coordinate minimizers:
/// alpha (1 - rho) > 1 and alpha rho > 1, both strict.
Admissibility validate_bgar_hyperparams(double alpha, double rho);

/// Auxiliary variables: Z (hierarchical rate chain) or B (BGAR thinning),
/// K x N with columns 2..N meaningful. Empty matrices when unused.
struct AuxVars {
  Matrix Z;
  Matrix B;

  bool has_z() const { return Z.size() > 0; }
  bool has_b() const { return B.size() > 0; }
};

// --- majorizer statistics ---

/// P and Q are K x N. Without a mask, Q's columns are all equal to the
/// dictionary column sums.
struct HStats {
  Matrix P;
  Matrix Q;
};

struct WStatsExp {
  Matrix P;  // F x K
  Matrix Q;  // F x K
};

/// Poisson-likelihood statistics for the H majorizer at H = Htilde:
/// p_kn = h_kn sum_f w_fk m_fn v_fn / [W Htilde]_fn, q_kn = sum_f m_fn w_fk.
/// Throws NumericalError when a zero denominator meets a nonzero
/// observed count.
HStats majorize_h_stats(const Matrix& V, const Matrix& W, const Matrix& Htilde,
                        const Mask* mask);

/// Poisson-likelihood statistics for the W majorizer at W = Wtilde (F x K).
Matrix majorize_w_stats(const Matrix& V, const Matrix& Wtilde, const Matrix& H,
                        const Mask* mask);

/// Exponential-likelihood statistics:
/// p_kn = h_kn^2 sum_f w_fk m_fn v_fn / [W Htilde]_fn^2,
/// q_kn = sum_f m_fn w_fk / [W Htilde]_fn.
HStats majorize_h_stats_exp(const Matrix& V, const Matrix& W,
                            const Matrix& Htilde, const Mask* mask);

WStatsExp majorize_w_stats_exp(const Matrix& V, const Matrix& Wtilde,
                               const Matrix& H, const Mask* mask);

// --- block updates ---

/// Simplex-constrained minimizer of the Poisson W majorizer:
/// w_fk = p'_fk / sum_f p'_fk. Throws NumericalError on a zero column.
Matrix update_w(const Matrix& w_stats);

/// Simplex-constrained minimizer of the exponential W majorizer
/// (per-column Lagrange root solve).
Matrix update_w_exp(const WStatsExp& stats);

struct BgarUpdateDiag {
  long endpoint_fallbacks = 0;
};

/// One Gauss-Seidel sweep over H (n ascending within each row, rows
/// independent); `threads` rows may run in parallel with bit-identical
/// results. Floors at `floor` apply to priors that require H > 0.
void update_h_rate(const HStats& stats, Matrix& H, const RatePrior& prior,
                   int threads = 1);
void update_hier_rate(const HStats& stats, Matrix& H, Matrix& Z,
                      const HierRatePrior& prior, int threads = 1);
void update_h_shape(const HStats& stats, Matrix& H, const ShapePrior& prior,
                    int threads = 1);
void update_bgar(const HStats& stats, Matrix& H, Matrix& B,
                 const BgarPrior& prior, BgarUpdateDiag* diag = nullptr,
                 int threads = 1);
void update_h_gap(const HStats& stats, Matrix& H, const GapPrior& prior,
                  int threads = 1);

/// Exponential-likelihood variants (quartic coordinate solves for BGAR,
/// a quadratic for GaP).
void update_bgar_exp(const HStats& stats, Matrix& H, Matrix& B,
                     const BgarPrior& prior, BgarUpdateDiag* diag = nullptr,
                     int threads = 1);
void update_h_gap_exp(const HStats& stats, Matrix& H, const GapPrior& prior,
                      int threads = 1);

/// Strictly positive floor used by priors that need H > 0.
inline constexpr double kActivationFloor = 1e-12;

// Scalar coordinate kernels behind the sweeps, exposed for direct
// verification against independent one-dimensional minimizers.
namespace coord {

double rate_first(double p, double q, double alpha, double beta, double h2);
double rate_middle(double p, double q, double beta, double h_prev,
                   double h_next);
double rate_last(double p, double q, double alpha, double beta, double h_prev);

double hier_z(double alpha_z, double beta_z, double alpha_h, double beta_h,
              double h_prev, double h_cur);
double hier_first(double p, double q, double alpha_z, double beta_z, double z2);
double hier_middle(double p, double q, double alpha_z, double beta_z,
                   double alpha_h, double beta_h, double z_cur, double z_next);
double hier_last(double p, double q, double alpha_h, double beta_h,
                 double z_last);

double shape_first(double p, double q, double alpha, double beta, double h2,
                   double x0);
double shape_middle(double p, double q, double alpha, double beta,
                    double h_prev, double h_next, double x0);
double shape_last(double p, double q, double alpha, double beta,
                  double h_prev);

double gap(double p, double q, double alpha, double beta);
double gap_exp(double p, double q, double alpha, double beta);

double bgar_first(double p, double q, double alpha, double gamma, double beta,
                  double b2, double h2, BgarUpdateDiag* diag);
double bgar_middle(double p, double q, double gamma, double beta, double b_cur,
                   double h_prev, double b_next, double h_next,
                   BgarUpdateDiag* diag);
double bgar_last(double p, double q, double gamma, double beta, double b_cur,
                 double h_prev, BgarUpdateDiag* diag);
double bgar_b(double eta, double gamma, double beta, double h_prev,
              double h_cur);

double bgar_exp_first(double p, double q, double alpha, double gamma,
                      double beta, double b2, double h2, BgarUpdateDiag* diag);
double bgar_exp_middle(double p, double q, double gamma, double beta,
                       double b_cur, double h_prev, double b_next,
                       double h_next, BgarUpdateDiag* diag);
double bgar_exp_last(double p, double q, double gamma, double beta,
                     double b_cur, double h_prev, BgarUpdateDiag* diag);

}  // namespace coord

/// Exact negative log joint -log p(V, H, aux; W), all normalizing
/// constants included so traces are comparable across hyperparameters.
/// Conventions: a GaP coordinate at h = 0 contributes only its linear
/// term (the log term is dropped), and the flat GaP prior
/// (alpha = 1, beta = 0) contributes exactly 0.
/// Throws NumericalError when a variable leaves its support.
double objective(const CountMatrix& V, const FactorPair& factors,
                 const AuxVars& aux, const PriorSpec& prior, const Mask* mask,
                 Likelihood likelihood);

struct FitConfig {
  Index k = 1;
  double tol = 1e-5;  // stop when the relative objective decrease drops below
  int max_iters = 1000;
  std::uint64_t seed = 0;
  Likelihood likelihood = Likelihood::Poisson;
  int threads = 1;
  /// Optional observer called after every outer iteration.
  std::function<void(int, const FactorPair&, const AuxVars&)> on_iteration;
};

struct FitDiagnostics {
  long bgar_endpoint_fallbacks = 0;
};

struct FitResult {
  FactorPair factors;
  AuxVars aux;
  std::vector<double> objective_trace;  // objective_trace[0] is at init
  int iterations = 0;
  bool converged = false;
  FitDiagnostics diagnostics;
};

/// Block MM descent: per outer iteration, auxiliary update (if any),
/// one H sweep, then the W update; stops on the relative-decrease rule
/// or max_iters. The objective trace is non-increasing up to floating
/// point slack. The exponential likelihood is supported with the GaP
/// and BGAR priors only.
FitResult fit(const CountMatrix& V, const PriorSpec& prior,
              const FitConfig& config, const Mask* mask = nullptr);

nlohmann::json fit_result_to_json(const FitResult& result,
                                  const PriorSpec& prior, Likelihood likelihood);

namespace detail {
/// Deterministic parallel map over [0, count): identical results for any
/// thread count (workers write disjoint indices, no shared reductions).
void parallel_for(Index count, int threads,
                  const std::function<void(Index)>& body);
}  // namespace detail

}  // namespace tnmf
