#include "rnr/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>

#include "rnr/error.hpp"
#include "rnr/kernels.hpp"
#include "rnr/splines.hpp"

namespace rnr {

namespace {

double bivariate_normal(const Eigen::Vector2d& x, const Eigen::Vector2d& mean, const Eigen::Matrix2d& cov) {
  const Eigen::Vector2d d = x - mean;
  return std::exp(-0.5 * d.dot(cov.inverse() * d)) / (2.0 * std::numbers::pi * std::sqrt(cov.determinant()));
}

void check_counts(Index n, Index n_outliers, const char* what) {
  if (n < 1) throw InputError(std::string(what) + ": need at least one sample");
  if (n_outliers < 0 || n_outliers > n) throw InputError(std::string(what) + ": outlier count must lie in [0, n]");
}

void check_variance(double v, const char* what) {
  if (!(v >= 0.0) || !std::isfinite(v)) throw InputError(std::string(what) + ": noise variance must be nonnegative");
}

std::vector<Index> leading(Index count) {
  std::vector<Index> out(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = i;
  return out;
}

}  // namespace

Vector SyntheticDataset::clean_values() const {
  Vector out(size());
  for (Index i = 0; i < size(); ++i) out(i) = clean_function(inputs.row(i).transpose());
  return out;
}

bool SyntheticDataset::is_outlier(Index i) const {
  return std::binary_search(outlier_indices.begin(), outlier_indices.end(), i);
}

double gaussian_mixture_function(const Eigen::Vector2d& x) {
  Eigen::Matrix2d s1;
  s1 << 2.2431, 0.4577, 0.4577, 1.0037;
  Eigen::Matrix2d s2;
  s2 << 2.9069, 0.5236, 0.5236, 1.7299;
  return bivariate_normal(x, Eigen::Vector2d(0.2295, 0.4996), s1) +
         bivariate_normal(x, Eigen::Vector2d(2.4566, 2.9461), s2);
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

SyntheticDataset gen_gaussian_mixture(std::uint64_t seed, Index n, Index n_outliers, double noise_variance) {
  check_counts(n, n_outliers, "gaussian mixture");
  check_variance(noise_variance, "gaussian mixture");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> box(0.0, 3.0);
  std::uniform_real_distribution<double> gross(-4.0, 4.0);
  std::normal_distribution<double> noise(0.0, std::sqrt(noise_variance));
  SyntheticDataset d;
  d.kind = "gaussian-mixture";
  d.seed = seed;
  d.noise_variance = noise_variance;
  d.clean_function = [](const Vector& x) { return gaussian_mixture_function(Eigen::Vector2d(x(0), x(1))); };
  d.inputs.resize(n, 2);
  for (Index i = 0; i < n; ++i) {
    d.inputs(i, 0) = box(rng);
    d.inputs(i, 1) = box(rng);
  }
  d.responses.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double f = gaussian_mixture_function(d.inputs.row(i).transpose());
    d.responses(i) = i < n_outliers ? gross(rng) : f + (noise_variance > 0.0 ? noise(rng) : 0.0);
  }
  d.outlier_indices = leading(n_outliers);
  return d;
}

SyntheticDataset gen_sinc(std::uint64_t seed, Index n, Index n_outliers, double noise_variance) {
  check_counts(n, n_outliers, "sinc");
  check_variance(noise_variance, "sinc");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> range(-5.0, 5.0);
  std::normal_distribution<double> noise(0.0, std::sqrt(noise_variance));
  SyntheticDataset d;
  d.kind = "sinc";
  d.seed = seed;
  d.noise_variance = noise_variance;
  d.clean_function = [](const Vector& x) { return sinc(x(0)); };
  d.inputs.resize(n, 1);
  for (Index i = 0; i < n; ++i) d.inputs(i, 0) = range(rng);
  d.responses.resize(n);
  for (Index i = 0; i < n; ++i)
    d.responses(i) = i < n_outliers ? range(rng) : sinc(d.inputs(i, 0)) + (noise_variance > 0.0 ? noise(rng) : 0.0);
  d.outlier_indices = leading(n_outliers);
  return d;
}

double load_curve_base(double hour, const LoadCurveShape& shape) {
  const double week_hour = std::fmod(std::fmod(hour, 168.0) + 168.0, 168.0);
  const int day = static_cast<int>(week_hour / 24.0);
  const double phase = 2.0 * std::numbers::pi * (week_hour - 24.0 * day) / 24.0;
  const double amp = day < 5 ? shape.weekday_amplitude : shape.weekend_amplitude;
  return shape.baseline + amp * (0.5 * (1.0 - std::cos(phase)) + 0.15 * (1.0 - std::cos(2.0 * phase)));
}

SyntheticDataset gen_load_curve(std::uint64_t seed, Index n, Index spike_count, double spike_scale,
                                const LoadCurveShape& shape) {
  if (n < 48) throw InputError("load curve: need at least 48 hourly samples");
  if (spike_count < 0 || spike_count > n) throw InputError("load curve: spike count must lie in [0, n]");
  if (!(spike_scale >= 0.0)) throw InputError("load curve: spike scale must be nonnegative");
  if (!(shape.noise_sigma >= 0.0)) throw InputError("load curve: noise sigma must be nonnegative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, shape.noise_sigma);
  SyntheticDataset d;
  d.kind = "load-curve";
  d.seed = seed;
  d.noise_variance = shape.noise_sigma * shape.noise_sigma;
  d.clean_function = [shape](const Vector& x) { return load_curve_base(x(0), shape); };
  d.inputs.resize(n, 1);
  d.responses.resize(n);
  for (Index i = 0; i < n; ++i) {
    d.inputs(i, 0) = static_cast<double>(i);
    d.responses(i) = load_curve_base(static_cast<double>(i), shape) + (shape.noise_sigma > 0.0 ? noise(rng) : 0.0);
  }
  std::vector<Index> positions = leading(n);
  std::shuffle(positions.begin(), positions.end(), rng);
  positions.resize(static_cast<std::size_t>(spike_count));
  std::sort(positions.begin(), positions.end());
  std::bernoulli_distribution sign(0.5);
  for (Index p : positions) d.responses(p) += (sign(rng) ? 1.0 : -1.0) * spike_scale * shape.noise_sigma;
  d.outlier_indices = positions;
  return d;
}

double training_error(const Vector& fitted_values, const SyntheticDataset& data) {
  if (fitted_values.size() != data.size()) throw InputError("training error: length mismatch");
  double sum = 0.0;
  Index count = 0;
  for (Index i = 0; i < data.size(); ++i) {
    if (data.is_outlier(i)) continue;
    const double r = data.responses(i) - fitted_values(i);
    sum += r * r;
    ++count;
  }
  if (count == 0) throw InputError("training error: every point is an outlier");
  return sum / static_cast<double>(count);
}

PointMatrix mixture_test_grid(Index per_axis) {
  if (per_axis < 2) throw InputError("test grid: need at least 2 points per axis");
  PointMatrix grid(per_axis * per_axis, 2);
  for (Index a = 0; a < per_axis; ++a)
    for (Index b = 0; b < per_axis; ++b) {
      grid(a * per_axis + b, 0) = 3.0 * static_cast<double>(a) / static_cast<double>(per_axis - 1);
      grid(a * per_axis + b, 1) = 3.0 * static_cast<double>(b) / static_cast<double>(per_axis - 1);
    }
  return grid;
}

PointMatrix sinc_test_grid(Index count) {
  if (count < 2) throw InputError("test grid: need at least 2 points");
  PointMatrix grid(count, 1);
  grid.col(0) = Vector::LinSpaced(count, -5.0, 5.0);
  return grid;
}

double generalization_error(const std::function<Vector(const PointMatrix&)>& predict, const PointMatrix& grid,
                            const CleanFunction& clean, double noise_variance, std::uint64_t seed) {
  if (grid.rows() == 0) throw InputError("generalization error: empty test grid");
  check_variance(noise_variance, "generalization error");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, std::sqrt(noise_variance));
  const Vector pred = predict(grid);
  double sum = 0.0;
  for (Index i = 0; i < grid.rows(); ++i) {
    const double y = clean(grid.row(i).transpose()) + (noise_variance > 0.0 ? noise(rng) : 0.0);
    sum += (y - pred(i)) * (y - pred(i));
  }
  return sum / static_cast<double>(grid.rows());
}

void write_dataset_csv(const SyntheticDataset& data, std::ostream& out) {
  out.precision(17);
  if (data.kind == "load-curve") {
    out << "timestamp,kwh\n";
    for (Index i = 0; i < data.size(); ++i)
      out << static_cast<long long>(std::llround(data.inputs(i, 0))) << ',' << data.responses(i) << '\n';
    return;
  }
  if (data.inputs.cols() == 1) {
    out << "x,y\n";
  } else {
    for (Index d = 0; d < data.inputs.cols(); ++d) out << 'x' << d + 1 << ',';
    out << "y\n";
  }
  for (Index i = 0; i < data.size(); ++i) {
    for (Index d = 0; d < data.inputs.cols(); ++d) out << data.inputs(i, d) << ',';
    out << data.responses(i) << '\n';
  }
}

PipelineOptions mixture_pipeline_defaults() {
  PipelineOptions o;
  o.g_mu = 200;
  o.g_lambda = 200;
  o.mu_min = 1e-9;
  o.mu_max = 1.0;
  o.epsilon = 1e-4;
  o.refine_iters = 1;
  o.delta = 1e-5;
  return o;
}

MixtureRun run_mixture_experiment(std::uint64_t seed, Index n, Index n_outliers, double noise_variance,
                                  const PipelineOptions& options, std::uint64_t test_seed) {
  MixtureRun run;
  run.data = gen_gaussian_mixture(seed, n, n_outliers, noise_variance);
  const ThinPlateSmoother smoother(run.data.inputs);
  run.result = avd_pipeline(smoother, run.data.responses, noise_variance, options);
  run.l1_support = run.result.l1_fit.outlier_support(options.outlier_threshold);
  run.refined_support = run.result.refined.outlier_support(options.outlier_threshold);
  run.training_error_l1 = training_error(run.result.l1_fit.fitted_values, run.data);
  run.training_error_refined = training_error(run.result.refined.fitted_values, run.data);
  const PointMatrix grid = mixture_test_grid();
  auto score = [&](const RobustFit& fit) {
    return generalization_error([&](const PointMatrix& q) { return smoother.evaluate(fit, q); }, grid,
                                run.data.clean_function, noise_variance, test_seed);
  };
  run.generalization_error_l1 = score(run.result.l1_fit);
  run.generalization_error_refined = score(run.result.refined);
  return run;
}

PipelineOptions sinc_pipeline_defaults() {
  PipelineOptions o = mixture_pipeline_defaults();
  o.mu_min = 1e-5;
  o.refine_iters = 2;
  return o;
}

SincRun run_sinc_experiment(std::uint64_t seed, Index n, Index n_outliers, double noise_variance,
                            const PipelineOptions& options, double kernel_width, Index folds,
                            std::uint64_t test_seed) {
  SincRun run;
  run.data = gen_sinc(seed, n, n_outliers, noise_variance);
  const Vector& y = run.data.responses;
  const KernelSmoother smoother(gram_matrix(KernelSpec::gaussian(kernel_width), run.data.inputs));
  TuningGrid grid = build_grid(options.mu_min, options.mu_max, options.g_mu, options.g_lambda, options.epsilon);
  GridSearchOptions search;
  search.lasso = options.lasso;
  search.denominator = options.denominator;
  search.threads = options.threads;
  grid_search(smoother, y, grid, search);

  const KnownCountSelection robust = select_known_count(grid, y, n_outliers, folds, smoother, seed);
  const KnownCountSelection plain = select_known_count(grid, y, 0, folds, smoother, seed);
  const auto& path = grid.paths[static_cast<std::size_t>(robust.cell.mu_index)];
  run.mu = grid.mu_values(robust.cell.mu_index);
  run.lambda = path.lambda_grid(robust.cell.lambda_index);
  run.nonrobust_mu = grid.mu_values(plain.cell.mu_index);

  const DesignOperator design = smoother.design(run.mu);
  const Vector o = path.solutions.row(robust.cell.lambda_index).transpose();
  const RobustFit l1 = fit_from_outliers(design, y, o, run.lambda);
  const RobustFit refined = options.refine_iters > 0
                                ? reweighted_refine(design, y, run.lambda, options.delta, o, options.refine_iters,
                                                    options.lasso)
                                : l1;
  const RobustFit ridge = fit_from_outliers(smoother.design(run.nonrobust_mu), y, Vector::Zero(y.size()), 0.0);
  run.l1_support = l1.outlier_support(options.outlier_threshold);
  run.refined_support = refined.outlier_support(options.outlier_threshold);

  const PointMatrix test = sinc_test_grid();
  auto score = [&](const RobustFit& fit) {
    return generalization_error([&](const PointMatrix& q) { return smoother.evaluate(fit, q); }, test,
                                run.data.clean_function, noise_variance, test_seed);
  };
  run.generalization_error_nonrobust = score(ridge);
  run.generalization_error_l1 = score(l1);
  run.generalization_error_refined = score(refined);
  return run;
}

}  // namespace rnr
