#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "rnr/error.hpp"
#include "rnr/experiments.hpp"

using namespace rnr;

TEST(Mixture, NoOutliersNoNoiseIsExact) {
  const SyntheticDataset d = gen_gaussian_mixture(3, 40, 0, 0.0);
  EXPECT_TRUE(d.outlier_indices.empty());
  EXPECT_EQ(d.responses, d.clean_values());
  EXPECT_EQ(d.inputs.cols(), 2);
  EXPECT_GE(d.inputs.minCoeff(), 0.0);
  EXPECT_LE(d.inputs.maxCoeff(), 3.0);
}

TEST(Mixture, PeakDominatesCorner) {
  EXPECT_GT(gaussian_mixture_function({0.2295, 0.4996}), gaussian_mixture_function({3.0, 0.0}));
}

TEST(Mixture, DensityValueAtFirstMean) {
  // first component at its own mean is 1 / (2 pi sqrt(det S1)); add the second by hand
  const double det1 = 2.2431 * 1.0037 - 0.4577 * 0.4577;
  const double det2 = 2.9069 * 1.7299 - 0.5236 * 0.5236;
  const double dx = 0.2295 - 2.4566;
  const double dy = 0.4996 - 2.9461;
  const double q = (1.7299 * dx * dx - 2.0 * 0.5236 * dx * dy + 2.9069 * dy * dy) / det2;
  const double expected = 1.0 / (2.0 * M_PI * std::sqrt(det1)) + std::exp(-0.5 * q) / (2.0 * M_PI * std::sqrt(det2));
  EXPECT_NEAR(gaussian_mixture_function({0.2295, 0.4996}), expected, 1e-14);
}

TEST(Mixture, LeadingOutliersInRange) {
  const SyntheticDataset d = gen_gaussian_mixture(1, 200, 20, 1e-3);
  ASSERT_EQ(d.outlier_indices.size(), 20u);
  for (Index i = 0; i < 20; ++i) {
    EXPECT_EQ(d.outlier_indices[static_cast<std::size_t>(i)], i);
    EXPECT_GE(d.responses(i), -4.0);
    EXPECT_LE(d.responses(i), 4.0);
  }
  EXPECT_FALSE(d.is_outlier(20));
  EXPECT_TRUE(d.is_outlier(19));
}

TEST(Mixture, OutlierMagnitudeSanity) {
  const double sigma = std::sqrt(1e-3);
  Index large = 0;
  Index total = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const SyntheticDataset d = gen_gaussian_mixture(seed, 60, 6, 1e-3);
    const Vector clean = d.clean_values();
    for (Index i : d.outlier_indices) {
      large += std::abs(d.responses(i) - clean(i)) > 3.0 * sigma;
      ++total;
    }
  }
  EXPECT_GE(static_cast<double>(large) / static_cast<double>(total), 0.95);
}

TEST(Generators, DeterministicGivenSeed) {
  const SyntheticDataset a = gen_gaussian_mixture(9, 50, 5, 1e-3);
  const SyntheticDataset b = gen_gaussian_mixture(9, 50, 5, 1e-3);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.responses, b.responses);
  EXPECT_NE(a.responses, gen_gaussian_mixture(10, 50, 5, 1e-3).responses);
  EXPECT_EQ(gen_sinc(4, 50, 3, 1e-2).responses, gen_sinc(4, 50, 3, 1e-2).responses);
  EXPECT_EQ(gen_load_curve(4, 100, 5, 8.0).responses, gen_load_curve(4, 100, 5, 8.0).responses);
}

TEST(Generators, RejectInvalidCounts) {
  EXPECT_THROW(gen_gaussian_mixture(1, 10, 11, 1e-3), InputError);
  EXPECT_THROW(gen_gaussian_mixture(1, 10, -1, 1e-3), InputError);
  EXPECT_THROW(gen_sinc(1, 0, 0, 1e-3), InputError);
  EXPECT_THROW(gen_sinc(1, 10, 2, -1.0), InputError);
  EXPECT_THROW(gen_load_curve(1, 47, 0, 8.0), InputError);
  EXPECT_THROW(gen_load_curve(1, 100, 101, 8.0), InputError);
}

TEST(Sinc, Values) {
  EXPECT_EQ(sinc(0.0), 1.0);
  EXPECT_NEAR(sinc(1.0), 0.0, 1e-16);
  EXPECT_NEAR(sinc(0.5), 2.0 / M_PI, 1e-15);
  EXPECT_EQ(sinc(-0.3), sinc(0.3));
}

TEST(Sinc, StandardConfiguration) {
  const SyntheticDataset d = gen_sinc(7, 50, 3, 1e-4);
  EXPECT_EQ(d.size(), 50);
  EXPECT_EQ(d.outlier_indices, (std::vector<Index>{0, 1, 2}));
  EXPECT_GE(d.inputs.minCoeff(), -5.0);
  EXPECT_LE(d.inputs.maxCoeff(), 5.0);
  for (Index i = 0; i < 3; ++i) EXPECT_LE(std::abs(d.responses(i)), 5.0);
}

TEST(LoadCurve, NoSpikes) {
  const SyntheticDataset d = gen_load_curve(2, 200, 0, 8.0);
  EXPECT_TRUE(d.outlier_indices.empty());
  EXPECT_EQ(d.noise_variance, 0.25);
}

TEST(LoadCurve, WeeklyPeriod) {
  for (double h = 0.0; h < 400.0; h += 0.25) EXPECT_EQ(load_curve_base(h), load_curve_base(h + 168.0)) << h;
  LoadCurveShape flat;
  flat.weekday_amplitude = 0.0;
  flat.weekend_amplitude = 0.0;
  EXPECT_EQ(load_curve_base(37.0, flat), flat.baseline);
  // weekday midday rises above the weekend one
  EXPECT_GT(load_curve_base(12.0), load_curve_base(5 * 24 + 12.0));
  EXPECT_EQ(load_curve_base(0.0), LoadCurveShape{}.baseline);
}

TEST(LoadCurve, SpikesStandOutFromNoise) {
  const double sigma = LoadCurveShape{}.noise_sigma;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SyntheticDataset d = gen_load_curve(seed, 500, 10, 8.0);
    ASSERT_EQ(d.outlier_indices.size(), 10u);
    EXPECT_TRUE(std::is_sorted(d.outlier_indices.begin(), d.outlier_indices.end()));
    const Vector base = d.clean_values();
    for (Index i : d.outlier_indices) EXPECT_GT(std::abs(d.responses(i) - base(i)), 5.0 * sigma) << seed;
  }
}

TEST(TrainingError, Examples) {
  const SyntheticDataset d = gen_gaussian_mixture(5, 30, 4, 1e-3);
  EXPECT_EQ(training_error(d.responses, d), 0.0);
  Vector shifted = d.responses;
  for (Index i = 0; i < d.size(); ++i) shifted(i) += d.is_outlier(i) ? 100.0 : 0.3;
  EXPECT_NEAR(training_error(shifted, d), 0.09, 1e-12);
  EXPECT_THROW(training_error(Vector::Zero(3), d), InputError);
  EXPECT_THROW(training_error(d.responses, gen_sinc(1, 3, 3, 0.0)), InputError);
}

TEST(TestGrids, Shapes) {
  const PointMatrix g = mixture_test_grid();
  EXPECT_EQ(g.rows(), 961);
  EXPECT_EQ(g.row(0), Eigen::RowVector2d(0.0, 0.0));
  EXPECT_EQ(g.row(960), Eigen::RowVector2d(3.0, 3.0));
  const PointMatrix s = sinc_test_grid();
  EXPECT_EQ(s.rows(), 101);
  EXPECT_EQ(s(0, 0), -5.0);
  EXPECT_EQ(s(100, 0), 5.0);
  EXPECT_NEAR(s(50, 0), 0.0, 1e-15);
}

TEST(GeneralizationError, ExactModel) {
  const CleanFunction clean = [](const Vector& x) { return sinc(x(0)); };
  auto exact = [&](const PointMatrix& q) {
    Vector v(q.rows());
    for (Index i = 0; i < q.rows(); ++i) v(i) = sinc(q(i, 0));
    return v;
  };
  EXPECT_EQ(generalization_error(exact, sinc_test_grid(), clean, 0.0, 1), 0.0);
  auto offset = [&](const PointMatrix& q) -> Vector { return exact(q).array() + 0.1; };
  EXPECT_NEAR(generalization_error(offset, sinc_test_grid(), clean, 0.0, 1), 0.01, 1e-14);
  // with test noise the error of the exact model estimates the noise variance
  auto zero = [](const PointMatrix& q) -> Vector { return Vector::Zero(q.rows()); };
  const CleanFunction flat = [](const Vector&) { return 0.0; };
  const double e = generalization_error(zero, mixture_test_grid(), flat, 0.04, 3);
  EXPECT_NEAR(e, 0.04, 3.0 * 0.04 * std::sqrt(2.0 / 961.0));
  EXPECT_EQ(e, generalization_error(zero, mixture_test_grid(), flat, 0.04, 3));
  EXPECT_THROW(generalization_error(exact, PointMatrix(0, 1), clean, 0.0, 1), InputError);
}

TEST(DatasetCsv, Formats) {
  std::ostringstream a;
  write_dataset_csv(gen_sinc(1, 3, 0, 0.0), a);
  EXPECT_EQ(a.str().substr(0, 4), "x,y\n");
  std::ostringstream b;
  write_dataset_csv(gen_gaussian_mixture(1, 3, 0, 0.0), b);
  EXPECT_EQ(b.str().substr(0, 8), "x1,x2,y\n");
  std::ostringstream c;
  write_dataset_csv(gen_load_curve(1, 48, 0, 8.0), c);
  std::istringstream lines(c.str());
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "timestamp,kwh");
  std::getline(lines, line);
  EXPECT_EQ(line.substr(0, 2), "0,");
  Index rows = 1;
  while (std::getline(lines, line)) ++rows;
  EXPECT_EQ(rows, 48);
}

TEST(MixtureExperiment, SmallGridRuns) {
  PipelineOptions opts = mixture_pipeline_defaults();
  EXPECT_EQ(opts.g_mu, 200);
  EXPECT_EQ(opts.mu_min, 1e-9);
  EXPECT_EQ(opts.refine_iters, 1);
  opts.g_mu = 6;
  opts.g_lambda = 20;
  const MixtureRun run = run_mixture_experiment(1, 60, 6, 1e-3, opts);
  EXPECT_EQ(run.data.size(), 60);
  EXPECT_GT(run.training_error_l1, 0.0);
  EXPECT_GT(run.generalization_error_refined, 0.0);
  EXPECT_EQ(run.l1_support, run.result.l1_fit.outlier_support(opts.outlier_threshold));
}

TEST(SincExperiment, SmallGridRuns) {
  PipelineOptions opts = sinc_pipeline_defaults();
  EXPECT_EQ(opts.mu_min, 1e-5);
  EXPECT_EQ(opts.refine_iters, 2);
  opts.g_mu = 5;
  opts.g_lambda = 30;
  const SincRun run = run_sinc_experiment(2, 50, 3, 1e-3, opts, 0.5);
  EXPECT_EQ(run.l1_support.size(), 3u);
  EXPECT_GT(run.generalization_error_nonrobust, run.generalization_error_l1);
}
