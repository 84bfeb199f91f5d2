#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "rnr/tuning.hpp"
#include "rnr/types.hpp"

namespace rnr {

using CleanFunction = std::function<double(const Vector&)>;

/// y_i = f_o(x_i) + o_i + eps_i with known outlier positions.
struct SyntheticDataset {
  std::string kind;
  PointMatrix inputs;
  Vector responses;
  std::vector<Index> outlier_indices;  // ascending, 0-based
  CleanFunction clean_function;
  double noise_variance = 0.0;
  std::uint64_t seed = 0;

  Index size() const { return responses.size(); }
  Vector clean_values() const;
  bool is_outlier(Index i) const;
};

/// Equal-weight sum of the two bivariate normal densities used for the thin-plate experiment.
double gaussian_mixture_function(const Eigen::Vector2d& x);

/// sin(pi x) / (pi x), with sinc(0) = 1.
double sinc(double x);

/// Inputs uniform on [0, 3]^2; the first n_outliers responses are uniform on [-4, 4].
SyntheticDataset gen_gaussian_mixture(std::uint64_t seed, Index n, Index n_outliers, double noise_variance);

/// Inputs uniform on [-5, 5]; the first n_outliers responses are uniform on [-5, 5].
SyntheticDataset gen_sinc(std::uint64_t seed, Index n, Index n_outliers, double noise_variance);

struct LoadCurveShape {
  double baseline = 5.0;           // kWh overnight
  double weekday_amplitude = 6.0;  // daytime rise on days 0-4 of each week
  double weekend_amplitude = 2.0;  // days 5 and 6
  double noise_sigma = 0.5;
};

/// Hourly base load. Each day is a raised-cosine bump (plus its second harmonic) that vanishes
/// with zero slope at midnight, so switching the amplitude between days keeps the curve smooth.
/// Periodic with period 168 hours.
double load_curve_base(double hour, const LoadCurveShape& shape = {});

/// n hourly samples of the base load plus Gaussian noise, with spike_count additive spikes of
/// magnitude spike_scale * noise_sigma and random sign at distinct seeded positions.
SyntheticDataset gen_load_curve(std::uint64_t seed, Index n, Index spike_count, double spike_scale,
                                const LoadCurveShape& shape = {});

/// Mean squared residual over the points that are not planted outliers.
double training_error(const Vector& fitted_values, const SyntheticDataset& data);

/// 31 x 31 uniform grid over [0, 3]^2 (rows are points).
PointMatrix mixture_test_grid(Index per_axis = 31);

/// 101 uniform points over [-5, 5].
PointMatrix sinc_test_grid(Index count = 101);

/// Mean squared error of predictions against f_o + fresh N(0, noise_variance) noise on the grid.
double generalization_error(const std::function<Vector(const PointMatrix&)>& predict, const PointMatrix& grid,
                            const CleanFunction& clean, double noise_variance, std::uint64_t seed);

/// Thin-plate mixture setup: 200 x 200 grid over mu in [1e-9, 1], epsilon 1e-4, one
/// refinement iteration with delta 1e-5.
PipelineOptions mixture_pipeline_defaults();

struct MixtureRun {
  SyntheticDataset data;
  PipelineResult result;
  std::vector<Index> l1_support;
  std::vector<Index> refined_support;
  double training_error_l1 = 0.0;
  double training_error_refined = 0.0;
  double generalization_error_l1 = 0.0;
  double generalization_error_refined = 0.0;

  bool exact_support() const { return l1_support == data.outlier_indices; }
};

/// Generates the mixture data, runs the AVD pipeline against the true noise variance and scores
/// both fits. The test set noise is drawn with test_seed.
MixtureRun run_mixture_experiment(std::uint64_t seed, Index n, Index n_outliers, double noise_variance,
                                  const PipelineOptions& options = mixture_pipeline_defaults(),
                                  std::uint64_t test_seed = 7);

/// Sinc setup: the mixture grid with mu_min = 1e-5, Gaussian kernel of width 0.1, two
/// refinement iterations.
PipelineOptions sinc_pipeline_defaults();

struct SincRun {
  SyntheticDataset data;
  double mu = 0.0;
  double lambda = 0.0;
  double nonrobust_mu = 0.0;
  std::vector<Index> l1_support;
  std::vector<Index> refined_support;
  double generalization_error_nonrobust = 0.0;
  double generalization_error_l1 = 0.0;
  double generalization_error_refined = 0.0;
};

/// With the outlier count known, (mu, lambda) come from select_known_count over the grid; the
/// nonrobust baseline is kernel ridge regression with mu chosen by the same cross-validation
/// restricted to the empty support.
SincRun run_sinc_experiment(std::uint64_t seed, Index n, Index n_outliers, double noise_variance,
                            const PipelineOptions& options = sinc_pipeline_defaults(), double kernel_width = 0.1,
                            Index folds = 5, std::uint64_t test_seed = 7);

/// Writes "x,y", "x1,x2,y" or, for load curves, "timestamp,kwh" with integer hour stamps.
void write_dataset_csv(const SyntheticDataset& data, std::ostream& out);

}  // namespace rnr
