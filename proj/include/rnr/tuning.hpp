#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "rnr/lasso.hpp"
#include "rnr/robust_fit.hpp"
#include "rnr/types.hpp"

namespace rnr {

/// G_mu smoothing levels, log-spaced and increasing, each paired with its own lambda grid.
struct TuningGrid {
  Vector mu_values;
  Index g_lambda = 0;
  double epsilon_ratio = 1e-4;
  /// Filled by grid_search, one path per mu value.
  std::vector<RobustificationPath<double>> paths;

  Index g_mu() const { return mu_values.size(); }
};

TuningGrid build_grid(double mu_min, double mu_max, Index g_mu, Index g_lambda, double epsilon_ratio);

/// How the retained squared residuals of a cell are normalized.
enum class VarianceDenominator {
  retained,       // divide by N - N_o: an actual sample variance
  outlier_count,  // divide by N_o, the literal alternative
};

struct CellStatistic {
  double variance = 0.0;
  Index outlier_count = 0;
  bool valid = false;
};

CellStatistic cell_statistic(const Vector& residuals, const Vector& outliers,
                             VarianceDenominator denominator = VarianceDenominator::retained);

struct VarianceSurface {
  Matrix variance;                                             // G_mu x G_lambda
  Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic> outlier_counts;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> valid;

  VarianceSurface() = default;
  VarianceSurface(Index g_mu, Index g_lambda);
  void set(Index i, Index j, const CellStatistic& cell);
};

VarianceSurface variance_surface(const std::vector<std::vector<RobustFit>>& fits,
                                 VarianceDenominator denominator = VarianceDenominator::retained);

struct GridCell {
  Index mu_index = 0;
  Index lambda_index = 0;
  friend bool operator==(const GridCell&, const GridCell&) = default;
};

/// argmin over valid cells of |variance - sigma_sq|; ties go to the larger lambda, then the larger mu.
GridCell select_avd(const VarianceSurface& surface, double sigma_sq);

/// 1.4826 * median_i |r_i - median_j r_j|
double mad_scale(const Vector& residuals);

double median(std::vector<double> values);

/// Contiguous fold boundaries: fold f holds positions [bounds[f], bounds[f+1]).
std::vector<Index> fold_bounds(Index count, Index folds);

struct KnownCountSelection {
  GridCell cell;
  double cv_error = 0.0;
};

/// Restricts every path to lambdas whose support has exactly n_outliers entries, drops the
/// flagged points, and picks the candidate with the lowest K-fold prediction error. Among the
/// lambdas of one path sharing a support, the smallest lambda is reported.
KnownCountSelection select_known_count(const TuningGrid& grid, const Vector& y, Index n_outliers, Index folds,
                                       const SmootherFamily& smoother, std::uint64_t seed = 0);

struct GridSearchOptions {
  LassoOptions<double> lasso;
  VarianceDenominator denominator = VarianceDenominator::retained;
  int threads = 1;
};

/// Computes one robustification path per mu (in parallel when threads > 1; the result does
/// not depend on the thread count) and the variance surface of all cells.
VarianceSurface grid_search(const SmootherFamily& smoother, const Vector& y, TuningGrid& grid,
                            const GridSearchOptions& options = {});

/// Recomputes the variance surface from paths already stored in the grid (no lasso solves).
VarianceSurface surface_from_paths(const SmootherFamily& smoother, const Vector& y, const TuningGrid& grid,
                                   VarianceDenominator denominator = VarianceDenominator::retained,
                                   int threads = 1);

/// Path file: "# g_mu=..,g_lambda=..,epsilon=..,n=.." then rows
/// mu_index,lambda_index,mu,lambda,coordinate,o_value with round-trip precision. Sparse files
/// keep only the nonzero entries.
void write_path_csv(const TuningGrid& grid, Index n, std::ostream& out, bool sparse = false);
TuningGrid read_path_csv(std::istream& in);

/// Settings shared by every AVD-driven robust fit: the grid, the lasso, and the refinement.
struct PipelineOptions {
  Index g_mu = 100;
  Index g_lambda = 200;
  double mu_min = 1e-3;
  double mu_max = 10.0;
  double epsilon = 1e-4;
  int refine_iters = 4;
  double delta = 1e-5;
  int threads = 1;
  double outlier_threshold = 1e-8;
  VarianceDenominator denominator = VarianceDenominator::retained;
  LassoOptions<double> lasso;
};

struct PipelineResult {
  TuningGrid grid;
  VarianceSurface surface;
  GridCell cell;
  double mu = 0.0;
  double lambda = 0.0;
  RobustFit l1_fit;
  RobustFit refined;  // equals l1_fit when refine_iters == 0
};

/// Robustification paths over the grid, AVD selection against sigma_sq, then reweighted
/// refinement from the selected outlier vector with lambda0 = lambda*.
PipelineResult avd_pipeline(const SmootherFamily& smoother, const Vector& y, double sigma_sq,
                            const PipelineOptions& options);

/// Runs body(i) for i in [0, count) on up to `threads` workers.
template <typename Body>
void parallel_for(Index count, int threads, Body&& body);

}  // namespace rnr

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace rnr {

template <typename Body>
void parallel_for(Index count, int threads, Body&& body) {
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(count)));
  if (workers == 1) {
    for (Index i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<Index> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (Index i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = count;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace rnr
