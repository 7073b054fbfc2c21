#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tnmf/nmf.hpp"

namespace tnmf::harness {

enum class DataFormat { DenseCsv, SparseTriplet };

/// Dense CSV: comma-separated rows, no header unless `header` is set.
/// Sparse triplet: first line "# F N", then "f n value" with 0-based
/// indices; missing entries are zeros. Negative values are rejected.
CountMatrix load_count_matrix(const std::string& path, DataFormat format,
                              bool header = false);

/// Column split of the prediction protocol: hidden (validation + test)
/// columns are pairwise non-adjacent, never include the first column,
/// and the last column always belongs to the test set.
struct SplitSpec {
  std::vector<Index> train_cols;
  std::vector<Index> val_cols;
  std::vector<Index> test_cols;
  std::uint64_t seed = 0;

  std::vector<Index> hidden_cols() const;  // val + test, sorted
  void validate(Index n_total) const;
};

std::vector<SplitSpec> make_splits(Index n, int n_splits, std::uint64_t seed);

/// Generalized Kullback-Leibler error sum v log(v / vhat) - v + vhat over
/// an entry set, with 0 log 0 = 0. Throws NumericalError when v > 0 meets
/// vhat = 0.
double kle(const Matrix& v, const Matrix& vhat,
           std::span<const std::pair<Index, Index>> entries);
double kle_columns(const Matrix& v, const Matrix& vhat,
                   std::span<const Index> cols);

/// Rank selection with flat KL-NMF (GaP, alpha = 1, beta = 0) under
/// Bernoulli(0.8) entry masks; returns the grid value with the lowest
/// average held-out KLE, ties broken towards smaller K.
Index select_rank(const CountMatrix& data, const std::vector<Index>& k_grid,
                  int n_trials, std::uint64_t seed);

/// Neighbor interpolation for activation columns the GaP model cannot
/// estimate: interior hidden columns get the neighbor average, the last
/// column copies its predecessor.
Matrix gap_baseline_fill(Matrix h, std::span<const Index> missing_cols);

enum class Method { Gap, Rate, Hier, Shape, Bgar };

std::string method_name(Method method);
std::optional<Method> parse_method(const std::string& name);
const std::vector<Method>& all_methods();

/// Default hyperparameter grids (constant across components).
std::vector<PriorSpec> default_grid(Method method, Index k);

struct FitOptions {
  double tol = 1e-5;
  int max_iters = 1000;
  int threads = 1;
};

struct GridSearchResult {
  PriorSpec best_prior;
  FitResult fit;
  double val_kle = 0.0;
  std::vector<double> grid_val_kles;  // one per grid entry, +inf on failure
};

/// Fits every grid entry from the same seeded initialization with the
/// split's validation and test columns masked, and keeps the entry with
/// the lowest validation-column KLE. GaP predictions run through
/// gap_baseline_fill before evaluation.
GridSearchResult grid_search(const CountMatrix& data, const SplitSpec& split,
                             std::uint64_t init_seed, Method method,
                             const std::vector<PriorSpec>& grid, Index k,
                             const FitOptions& options);

struct RunRecord {
  Method method = Method::Gap;
  int split_index = 0;
  int init_index = 0;
  bool ok = false;
  std::string error;
  double kle_s = 0.0;
  double kle_f = 0.0;
  double val_kle = 0.0;
  double control_kle_s = 0.0;  // column-shuffled prediction control
  nlohmann::json hyperparams;
  double seconds = 0.0;
};

struct MethodAggregate {
  Method method = Method::Gap;
  double kle_s_mean = 0.0, kle_s_std = 0.0;
  double kle_f_mean = 0.0, kle_f_std = 0.0;
  int n_runs = 0;
};

struct ExperimentConfig {
  int n_splits = 5;
  int n_inits = 5;
  std::vector<Method> methods;
  Index k = 1;
  std::uint64_t seed = 0;
  FitOptions fit;
  int threads = 1;          // parallel (split, init, method) runs
  std::string out_dir;      // when set, per-run fit.json files are written
};

struct ExperimentReport {
  std::vector<RunRecord> runs;
  std::vector<MethodAggregate> aggregates;
};

/// Full prediction experiment: per (split, init) pair every method is
/// grid-searched from the same initialization, then scored on the test
/// columns; KLE-S covers the hidden interior columns, KLE-F the final
/// column. Failed runs are recorded and excluded from the aggregates.
ExperimentReport run_experiment(const CountMatrix& data,
                                const ExperimentConfig& config);

/// Rows "method,metric,mean,std" in the aggregate layout.
void write_report_csv(std::ostream& os, const ExperimentReport& report);
nlohmann::json report_to_json(const ExperimentReport& report,
                              const ExperimentConfig& config);

}  // namespace tnmf::harness
