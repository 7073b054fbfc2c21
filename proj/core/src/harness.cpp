#include "tnmf/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>
#include <thread>

namespace tnmf::harness {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t mix_seed(std::uint64_t master, std::uint64_t tag,
                       std::uint64_t index) {
  return random::RandomStream(master)
      .substream(tag * 0x10001ULL + index)
      .seed();
}

}  // namespace

CountMatrix load_count_matrix(const std::string& path, DataFormat format,
                              bool header) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file: " + path);
  std::string line;
  long line_no = 0;

  const auto fail = [&](const std::string& what) {
    throw DataError(path + ":" + std::to_string(line_no) + ": " + what);
  };

  CountMatrix data;
  if (format == DataFormat::DenseCsv) {
    std::vector<std::vector<double>> rows;
    bool skipped_header = !header;
    while (std::getline(in, line)) {
      ++line_no;
      if (!skipped_header) {
        skipped_header = true;
        continue;
      }
      if (line.empty()) continue;
      std::vector<double> row;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) {
        try {
          std::size_t pos = 0;
          const double v = std::stod(cell, &pos);
          while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
          if (pos != cell.size()) fail("trailing characters in '" + cell + "'");
          row.push_back(v);
        } catch (const std::invalid_argument&) {
          fail("cannot parse value '" + cell + "'");
        } catch (const std::out_of_range&) {
          fail("value out of range: '" + cell + "'");
        }
      }
      if (!rows.empty() && row.size() != rows.front().size()) {
        fail("inconsistent number of columns");
      }
      rows.push_back(std::move(row));
    }
    if (rows.empty() || rows.front().empty()) {
      line_no = 0;
      fail("no data rows");
    }
    data.values.resize(static_cast<Index>(rows.size()),
                       static_cast<Index>(rows.front().size()));
    for (std::size_t f = 0; f < rows.size(); ++f) {
      for (std::size_t n = 0; n < rows[f].size(); ++n) {
        data.values(static_cast<Index>(f), static_cast<Index>(n)) = rows[f][n];
      }
    }
  } else {
    // sparse triplet with a "# F N" shape line first
    Index F = 0, N = 0;
    bool have_shape = false;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      std::stringstream ss(line);
      if (!have_shape) {
        std::string hash;
        ss >> hash;
        long long fr = 0, nc = 0;
        if (hash != "#" || !(ss >> fr >> nc) || fr < 1 || nc < 1) {
          fail("expected shape line '# F N'");
        }
        F = static_cast<Index>(fr);
        N = static_cast<Index>(nc);
        data.values = Matrix::Zero(F, N);
        have_shape = true;
        continue;
      }
      long long f = 0, n = 0;
      double v = 0.0;
      if (!(ss >> f >> n >> v)) fail("expected 'f n value'");
      std::string rest;
      if (ss >> rest) fail("trailing characters '" + rest + "'");
      if (f < 0 || f >= F || n < 0 || n >= N) fail("index out of range");
      data.values(static_cast<Index>(f), static_cast<Index>(n)) = v;
    }
    if (!have_shape) {
      line_no = 0;
      fail("missing shape line '# F N'");
    }
  }
  try {
    data.validate();
  } catch (const DataError& err) {
    throw DataError(path + ": " + err.what());
  }
  return data;
}

std::vector<Index> SplitSpec::hidden_cols() const {
  std::vector<Index> hidden = val_cols;
  hidden.insert(hidden.end(), test_cols.begin(), test_cols.end());
  std::sort(hidden.begin(), hidden.end());
  return hidden;
}

void SplitSpec::validate(Index n_total) const {
  const std::vector<Index> hidden = hidden_cols();
  if (hidden.empty()) throw ConfigError("split has no hidden columns");
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    if (hidden[i] < 0 || hidden[i] >= n_total) {
      throw ConfigError("hidden column out of range");
    }
    if (hidden[i] == 0) {
      throw ConfigError("the first column must never be hidden");
    }
    if (i > 0 && hidden[i] - hidden[i - 1] < 2) {
      throw ConfigError("hidden columns must be pairwise non-adjacent");
    }
  }
  if (std::find(test_cols.begin(), test_cols.end(), n_total - 1) ==
      test_cols.end()) {
    throw ConfigError("the last column must belong to the test set");
  }
  if (train_cols.size() + hidden.size() != static_cast<std::size_t>(n_total)) {
    throw ConfigError("train set must be the complement of the hidden set");
  }
}

std::vector<SplitSpec> make_splits(Index n, int n_splits, std::uint64_t seed) {
  if (n_splits < 1) throw ConfigError("n_splits must be at least 1");
  const Index hidden_target =
      std::max<Index>(2, static_cast<Index>(std::lround(0.2 * static_cast<double>(n))));
  // candidate columns are 1..n-1 (0-based); the largest pairwise
  // non-adjacent subset of that path has ceil((n-1)/2) elements
  if (n < 4 || hidden_target > (n - 1 + 1) / 2) {
    throw ConfigError("matrix has too few columns for the split protocol");
  }

  const random::RandomStream base(seed);
  std::vector<SplitSpec> splits;
  splits.reserve(static_cast<std::size_t>(n_splits));
  for (int s = 0; s < n_splits; ++s) {
    random::RandomStream rng = base.substream(static_cast<std::uint64_t>(s));
    std::vector<Index> chosen;
    for (int attempt = 0; attempt < 10000; ++attempt) {
      chosen.assign(1, n - 1);
      std::vector<Index> avail;
      for (Index c = 1; c + 2 <= n - 1; ++c) avail.push_back(c);
      while (static_cast<Index>(chosen.size()) < hidden_target &&
             !avail.empty()) {
        const std::size_t pick = std::min<std::size_t>(
            static_cast<std::size_t>(rng.uniform() * avail.size()),
            avail.size() - 1);
        const Index c = avail[pick];
        chosen.push_back(c);
        std::erase_if(avail,
                      [c](Index other) { return std::llabs(other - c) <= 1; });
      }
      if (static_cast<Index>(chosen.size()) == hidden_target) break;
    }
    if (static_cast<Index>(chosen.size()) != hidden_target) {
      throw ConfigError("could not place non-adjacent hidden columns");
    }

    // half to validation (rounded down), the rest plus the last column
    // to test
    std::vector<Index> others(chosen.begin() + 1, chosen.end());
    for (std::size_t i = others.size(); i > 1; --i) {
      const std::size_t j = std::min<std::size_t>(
          static_cast<std::size_t>(rng.uniform() * i), i - 1);
      std::swap(others[i - 1], others[j]);
    }
    SplitSpec split;
    split.seed = seed;
    const std::size_t n_val = others.size() / 2 + (others.size() % 2);
    split.val_cols.assign(others.begin(),
                          others.begin() + static_cast<std::ptrdiff_t>(n_val));
    split.test_cols.assign(others.begin() + static_cast<std::ptrdiff_t>(n_val),
                           others.end());
    split.test_cols.push_back(n - 1);
    std::sort(split.val_cols.begin(), split.val_cols.end());
    std::sort(split.test_cols.begin(), split.test_cols.end());
    std::vector<bool> hidden(static_cast<std::size_t>(n), false);
    for (Index c : split.val_cols) hidden[static_cast<std::size_t>(c)] = true;
    for (Index c : split.test_cols) hidden[static_cast<std::size_t>(c)] = true;
    for (Index c = 0; c < n; ++c) {
      if (!hidden[static_cast<std::size_t>(c)]) split.train_cols.push_back(c);
    }
    split.validate(n);
    splits.push_back(std::move(split));
  }
  return splits;
}

namespace {

double kle_entry(double v, double vhat) {
  if (v < 0.0 || vhat < 0.0) throw NumericalError("negative value in KLE");
  if (v == 0.0) return vhat;
  if (!(vhat > 0.0)) {
    throw NumericalError("infinite divergence: positive count predicted as 0");
  }
  return v * std::log(v / vhat) - v + vhat;
}

}  // namespace

double kle(const Matrix& v, const Matrix& vhat,
           std::span<const std::pair<Index, Index>> entries) {
  double total = 0.0;
  for (const auto& [f, n] : entries) total += kle_entry(v(f, n), vhat(f, n));
  return total;
}

double kle_columns(const Matrix& v, const Matrix& vhat,
                   std::span<const Index> cols) {
  double total = 0.0;
  for (Index n : cols) {
    for (Index f = 0; f < v.rows(); ++f) {
      total += kle_entry(v(f, n), vhat(f, n));
    }
  }
  return total;
}

Index select_rank(const CountMatrix& data, const std::vector<Index>& k_grid,
                  int n_trials, std::uint64_t seed) {
  if (k_grid.empty()) throw ConfigError("rank grid must be non-empty");
  if (n_trials < 1) throw ConfigError("n_trials must be at least 1");
  std::vector<Index> grid = k_grid;
  std::sort(grid.begin(), grid.end());

  const Index F = data.rows();
  const Index N = data.cols();
  std::vector<double> avg(grid.size(), 0.0);
  for (int t = 0; t < n_trials; ++t) {
    random::RandomStream mask_rng =
        random::RandomStream(seed).substream(0x8000ULL + static_cast<std::uint64_t>(t));
    Mask mask = Mask::ones(F, N);
    std::vector<std::pair<Index, Index>> heldout;
    for (Index n = 0; n < N; ++n) {
      for (Index f = 0; f < F; ++f) {
        if (mask_rng.uniform() >= 0.8) {
          mask.m(f, n) = 0.0;
          heldout.emplace_back(f, n);
        }
      }
    }
    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
      FitConfig config;
      config.k = grid[gi];
      config.tol = 1e-5;
      config.max_iters = 300;
      config.seed = mix_seed(seed, 3,
                             static_cast<std::uint64_t>(t) * 1024 +
                                 static_cast<std::uint64_t>(grid[gi]));
      double err = kInf;
      try {
        const PriorSpec flat = GapPrior::constant(grid[gi], 1.0, 0.0);
        const FitResult result = fit(data, flat, config, &mask);
        const Matrix vhat = result.factors.W * result.factors.H;
        err = kle(data.values, vhat, heldout);
      } catch (const NumericalError&) {
        err = kInf;
      }
      avg[gi] += err;
    }
  }
  std::size_t best = 0;
  for (std::size_t gi = 1; gi < grid.size(); ++gi) {
    if (avg[gi] < avg[best]) best = gi;  // ties keep the smaller K
  }
  return grid[best];
}

Matrix gap_baseline_fill(Matrix h, std::span<const Index> missing_cols) {
  const Index N = h.cols();
  std::vector<Index> missing(missing_cols.begin(), missing_cols.end());
  std::sort(missing.begin(), missing.end());
  for (std::size_t i = 0; i < missing.size(); ++i) {
    const Index n = missing[i];
    if (n <= 0 || n >= N) {
      throw ConfigError("missing column out of the fillable range");
    }
    if (i > 0 && n - missing[i - 1] < 2) {
      throw ConfigError("adjacent missing columns violate the protocol");
    }
  }
  for (Index n : missing) {
    if (n == N - 1) {
      h.col(n) = h.col(n - 1);
    } else {
      h.col(n) = 0.5 * (h.col(n - 1) + h.col(n + 1));
    }
  }
  return h;
}

std::string method_name(Method method) {
  switch (method) {
    case Method::Gap: return "gap";
    case Method::Rate: return "rate";
    case Method::Hier: return "hier";
    case Method::Shape: return "shape";
    case Method::Bgar: return "bgar";
  }
  return "unknown";
}

std::optional<Method> parse_method(const std::string& name) {
  for (Method m : all_methods()) {
    if (method_name(m) == name) return m;
  }
  return std::nullopt;
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> methods = {
      Method::Gap, Method::Rate, Method::Hier, Method::Shape, Method::Bgar};
  return methods;
}

std::vector<PriorSpec> default_grid(Method method, Index k) {
  std::vector<PriorSpec> grid;
  switch (method) {
    case Method::Gap:
      for (double alpha : {0.1, 1.0, 10.0}) {
        for (double beta : {0.1, 1.0, 10.0}) {
          grid.push_back(GapPrior::constant(k, alpha, beta));
        }
      }
      break;
    case Method::Rate:
      for (double v : {1.5, 10.0, 100.0}) {
        grid.push_back(RatePrior::constant(k, v, v));
      }
      break;
    case Method::Hier:
      for (double ah : {1.5, 10.0, 100.0}) {
        for (double az : {1.5, 10.0, 100.0}) {
          grid.push_back(HierRatePrior::constant(k, az, az, ah, ah));
        }
      }
      break;
    case Method::Shape:
      for (double v : {0.1, 1.0, 10.0}) {
        grid.push_back(ShapePrior::constant(k, v, v));
      }
      break;
    case Method::Bgar:
      for (double alpha : {11.0, 110.0, 1100.0}) {
        for (double beta : {0.1, 1.0, 10.0}) {
          grid.push_back(BgarPrior::constant(k, alpha, beta, 0.9));
        }
      }
      break;
  }
  return grid;
}

namespace {

Matrix predicted_values(const FitResult& result, Method method,
                        const std::vector<Index>& hidden) {
  if (method == Method::Gap) {
    const Matrix filled = gap_baseline_fill(result.factors.H, hidden);
    return result.factors.W * filled;
  }
  return result.factors.W * result.factors.H;
}

}  // namespace

GridSearchResult grid_search(const CountMatrix& data, const SplitSpec& split,
                             std::uint64_t init_seed, Method method,
                             const std::vector<PriorSpec>& grid, Index k,
                             const FitOptions& options) {
  if (grid.empty()) throw ConfigError("hyperparameter grid must be non-empty");
  split.validate(data.cols());
  for (const PriorSpec& prior : grid) validate_prior(prior, k);

  const std::vector<Index> hidden = split.hidden_cols();
  const Mask mask = Mask::with_hidden_columns(data.rows(), data.cols(), hidden);

  GridSearchResult best;
  best.val_kle = kInf;
  bool have_best = false;
  for (const PriorSpec& prior : grid) {
    FitConfig config;
    config.k = k;
    config.tol = options.tol;
    config.max_iters = options.max_iters;
    config.threads = options.threads;
    config.seed = init_seed;
    double err = kInf;
    FitResult result;
    try {
      result = fit(data, prior, config, &mask);
      const Matrix vhat = predicted_values(result, method, hidden);
      err = kle_columns(data.values, vhat, split.val_cols);
    } catch (const NumericalError&) {
      err = kInf;
    }
    best.grid_val_kles.push_back(err);
    if (err < best.val_kle) {
      best.val_kle = err;
      best.best_prior = prior;
      best.fit = std::move(result);
      have_best = true;
    }
  }
  if (!have_best) {
    throw NumericalError("every " + method_name(method) +
                         " grid entry failed or diverged");
  }
  return best;
}

namespace {

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;
};

Aggregate aggregate(const std::vector<double>& xs) {
  Aggregate a;
  if (xs.empty()) return a;
  for (double x : xs) a.mean += x;
  a.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - a.mean) * (x - a.mean);
    a.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return a;
}

}  // namespace

ExperimentReport run_experiment(const CountMatrix& data,
                                const ExperimentConfig& config) {
  data.validate();
  if (config.methods.empty()) throw ConfigError("no methods selected");
  if (config.n_splits < 1 || config.n_inits < 1) {
    throw ConfigError("n_splits and n_inits must be at least 1");
  }
  if (config.k < 1) throw ConfigError("K must be at least 1");

  const std::vector<SplitSpec> splits =
      make_splits(data.cols(), config.n_splits, mix_seed(config.seed, 1, 0));

  // Shared across methods within a (split, init) pair: the initialization
  // seed and the control column shuffle.
  std::vector<std::uint64_t> init_seeds;
  for (int i = 0; i < config.n_inits; ++i) {
    init_seeds.push_back(mix_seed(config.seed, 2, static_cast<std::uint64_t>(i)));
  }
  std::vector<std::vector<Index>> control_cols(
      static_cast<std::size_t>(config.n_splits * config.n_inits));
  for (int s = 0; s < config.n_splits; ++s) {
    const SplitSpec& split = splits[static_cast<std::size_t>(s)];
    std::vector<Index> smoothing;
    for (Index c : split.test_cols) {
      if (c != data.cols() - 1) smoothing.push_back(c);
    }
    for (int i = 0; i < config.n_inits; ++i) {
      random::RandomStream rng(
          mix_seed(config.seed, 4,
                   static_cast<std::uint64_t>(s) * 4096 +
                       static_cast<std::uint64_t>(i)));
      std::vector<Index>& cols =
          control_cols[static_cast<std::size_t>(s * config.n_inits + i)];
      for (std::size_t j = 0; j < smoothing.size(); ++j) {
        const std::size_t pick = std::min<std::size_t>(
            static_cast<std::size_t>(rng.uniform() * split.train_cols.size()),
            split.train_cols.size() - 1);
        cols.push_back(split.train_cols[pick]);
      }
    }
  }

  struct Job {
    int split_index;
    int init_index;
    Method method;
  };
  std::vector<Job> jobs;
  for (int s = 0; s < config.n_splits; ++s) {
    for (int i = 0; i < config.n_inits; ++i) {
      for (Method m : config.methods) jobs.push_back({s, i, m});
    }
  }

  ExperimentReport report;
  report.runs.resize(jobs.size());

  const auto run_job = [&](std::size_t idx) {
    const Job& job = jobs[idx];
    const SplitSpec& split = splits[static_cast<std::size_t>(job.split_index)];
    RunRecord record;
    record.method = job.method;
    record.split_index = job.split_index;
    record.init_index = job.init_index;
    const auto start = std::chrono::steady_clock::now();
    try {
      const GridSearchResult search = grid_search(
          data, split, init_seeds[static_cast<std::size_t>(job.init_index)],
          job.method, default_grid(job.method, config.k), config.k, config.fit);
      const std::vector<Index> hidden = split.hidden_cols();
      const Matrix vhat = predicted_values(search.fit, job.method, hidden);
      std::vector<Index> smoothing;
      for (Index c : split.test_cols) {
        if (c != data.cols() - 1) smoothing.push_back(c);
      }
      const std::vector<Index> forecast = {data.cols() - 1};
      record.kle_s = kle_columns(data.values, vhat, smoothing);
      record.kle_f = kle_columns(data.values, vhat, forecast);
      record.val_kle = search.val_kle;
      record.hyperparams = prior_to_json(search.best_prior);

      const std::vector<Index>& ctrl = control_cols[static_cast<std::size_t>(
          job.split_index * config.n_inits + job.init_index)];
      double control = 0.0;
      for (std::size_t j = 0; j < smoothing.size(); ++j) {
        for (Index f = 0; f < data.rows(); ++f) {
          control += kle_entry(data.values(f, smoothing[j]), vhat(f, ctrl[j]));
        }
      }
      record.control_kle_s = control;

      if (!config.out_dir.empty()) {
        const std::filesystem::path dir(config.out_dir);
        std::filesystem::create_directories(dir);
        const std::string name = "fit_" + method_name(job.method) + "_s" +
                                 std::to_string(job.split_index) + "_i" +
                                 std::to_string(job.init_index) + ".json";
        std::ofstream out(dir / name);
        nlohmann::json j = fit_result_to_json(search.fit, search.best_prior,
                                              Likelihood::Poisson);
        j["val_kle"] = search.val_kle;
        j["grid_val_kles"] = search.grid_val_kles;
        out << j.dump(2) << '\n';
      }
      record.ok = true;
    } catch (const std::exception& err) {
      record.ok = false;
      record.error = err.what();
    }
    record.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    report.runs[idx] = std::move(record);
  };

  if (config.threads <= 1) {
    for (std::size_t idx = 0; idx < jobs.size(); ++idx) run_job(idx);
  } else {
    std::atomic<std::size_t> next{0};
    const int workers =
        std::min<int>(config.threads, static_cast<int>(jobs.size()));
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t idx = next.fetch_add(1);
          if (idx >= jobs.size()) return;
          run_job(idx);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  for (Method m : config.methods) {
    std::vector<double> s_values, f_values;
    for (const RunRecord& r : report.runs) {
      if (r.method == m && r.ok) {
        s_values.push_back(r.kle_s);
        f_values.push_back(r.kle_f);
      }
    }
    MethodAggregate agg;
    agg.method = m;
    agg.n_runs = static_cast<int>(s_values.size());
    const Aggregate s = aggregate(s_values);
    const Aggregate f = aggregate(f_values);
    agg.kle_s_mean = s.mean;
    agg.kle_s_std = s.stddev;
    agg.kle_f_mean = f.mean;
    agg.kle_f_std = f.stddev;
    report.aggregates.push_back(agg);
  }
  return report;
}

void write_report_csv(std::ostream& os, const ExperimentReport& report) {
  os << "method,metric,mean,std\n";
  char buf[64];
  const auto emit = [&](const std::string& method, const char* metric,
                        double mean, double stddev) {
    os << method << ',' << metric << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", mean);
    os << buf << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", stddev);
    os << buf << '\n';
  };
  for (const MethodAggregate& a : report.aggregates) {
    emit(method_name(a.method), "KLE-S", a.kle_s_mean, a.kle_s_std);
    emit(method_name(a.method), "KLE-F", a.kle_f_mean, a.kle_f_std);
  }
}

nlohmann::json report_to_json(const ExperimentReport& report,
                              const ExperimentConfig& config) {
  nlohmann::json j;
  j["config"] = {
      {"n_splits", config.n_splits}, {"n_inits", config.n_inits},
      {"k", config.k},               {"seed", config.seed},
      {"tol", config.fit.tol},       {"max_iters", config.fit.max_iters},
  };
  std::vector<std::string> names;
  for (Method m : config.methods) names.push_back(method_name(m));
  j["config"]["methods"] = names;

  j["aggregates"] = nlohmann::json::array();
  for (const MethodAggregate& a : report.aggregates) {
    j["aggregates"].push_back({{"method", method_name(a.method)},
                               {"kle_s_mean", a.kle_s_mean},
                               {"kle_s_std", a.kle_s_std},
                               {"kle_f_mean", a.kle_f_mean},
                               {"kle_f_std", a.kle_f_std},
                               {"n_runs", a.n_runs}});
  }
  j["runs"] = nlohmann::json::array();
  for (const RunRecord& r : report.runs) {
    j["runs"].push_back({{"method", method_name(r.method)},
                         {"split", r.split_index},
                         {"init", r.init_index},
                         {"ok", r.ok},
                         {"error", r.error},
                         {"kle_s", r.kle_s},
                         {"kle_f", r.kle_f},
                         {"val_kle", r.val_kle},
                         {"control_kle_s", r.control_kle_s},
                         {"hyperparams", r.hyperparams},
                         {"seconds", r.seconds}});
  }
  return j;
}

}  // namespace tnmf::harness
