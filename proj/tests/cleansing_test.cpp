#include <cmath>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "rnr/cleansing.hpp"
#include "rnr/error.hpp"
#include "rnr/experiments.hpp"
#include "rnr/splines.hpp"

using namespace rnr;

namespace {

LoadCurve parse(const std::string& text) {
  std::istringstream in(text);
  return parse_load_csv(in, "test.csv");
}

std::string message_of(const std::string& text) {
  try {
    parse(text);
  } catch (const InputError& e) {
    return e.what();
  }
  return "";
}

LoadCurve curve_from(const SyntheticDataset& d) {
  std::stringstream csv;
  write_dataset_csv(d, csv);
  return parse_load_csv(csv, d.kind);
}

// Coarse grid so a full cleanse stays well under a second.
CleanseConfig small_config() {
  CleanseConfig c;
  c.pipeline.g_mu = 8;
  c.pipeline.g_lambda = 60;
  return c;
}

}  // namespace

TEST(LoadCsv, TwoRows) {
  const LoadCurve c = parse("timestamp,kwh\n0,1.5\n1,2.5\n");
  ASSERT_EQ(c.size(), 2);
  EXPECT_EQ(c.hours(1), 1.0);
  EXPECT_EQ(c.kwh(0), 1.5);
  EXPECT_FALSE(c.has_warnings());
}

TEST(LoadCsv, DuplicateTimestampNamesLine) {
  const std::string m = message_of("timestamp,kwh\n0,1\n1,2\n1,3\n");
  EXPECT_NE(m.find("line 4"), std::string::npos) << m;
  EXPECT_NE(m.find("duplicate"), std::string::npos) << m;
  EXPECT_NE(message_of("timestamp,kwh\n0,1\n2,2\n1,3\n").find("line 4"), std::string::npos);
}

TEST(LoadCsv, HeaderOnlyIsEmptyCurve) {
  EXPECT_NE(message_of("timestamp,kwh\n").find("no measurements"), std::string::npos);
  EXPECT_NE(message_of("").find("empty file"), std::string::npos);
}

TEST(LoadCsv, MalformedRows) {
  EXPECT_NE(message_of("time,kwh\n0,1\n").find("line 1"), std::string::npos);
  EXPECT_NE(message_of("timestamp,kwh\n0,1\n1,abc\n").find("line 3"), std::string::npos);
  EXPECT_NE(message_of("timestamp,kwh\n0,1,2\n").find("line 2"), std::string::npos);
  EXPECT_NE(message_of("timestamp,kwh\n0,1\nyesterday,2\n").find("line 3"), std::string::npos);
}

TEST(LoadCsv, IsoTimestamps) {
  const LoadCurve c = parse("\xEF\xBB\xBF Timestamp , kWh\n2013-03-04T00:00:00Z,1\n2013-03-04 00:15,2\n"
                            "2013-03-04T01:30:00+01:00,3\n2013-03-05T00:00:00.5,4\n");
  ASSERT_EQ(c.size(), 4);
  EXPECT_EQ(c.hours(1) - c.hours(0), 0.25);
  // 01:30 at +01:00 is 00:30 UTC
  EXPECT_EQ(c.hours(2) - c.hours(0), 0.5);
  EXPECT_NEAR(c.hours(3) - c.hours(0), 24.0 + 0.5 / 3600.0, 1e-9);
  EXPECT_EQ(c.stamps[1], "2013-03-04 00:15");
}

TEST(LoadCsv, NegativeReadingsFlaggedAndKept) {
  const LoadCurve c = parse("timestamp,kwh\n0,1\n1,-0.5\n2,3\n");
  EXPECT_EQ(c.size(), 3);
  EXPECT_EQ(c.kwh(1), -0.5);
  EXPECT_EQ(c.negative_rows, (std::vector<Index>{1}));
}

TEST(LoadCsv, MissingFileNamesPath) {
  try {
    load_csv("/nonexistent/curve.csv");
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/curve.csv"), std::string::npos);
  }
}

TEST(Downsample, Examples) {
  const LoadCurve c = parse("timestamp,kwh\n0,0\n1,1\n2,2\n3,3\n4,4\n5,5\n6,6\n7,7\n");
  const LoadCurve same = downsample(c, 1);
  EXPECT_EQ(same.hours, c.hours);
  EXPECT_EQ(same.kwh, c.kwh);
  const LoadCurve four = downsample(c, 4);
  ASSERT_EQ(four.size(), 2);
  EXPECT_EQ(four.kwh, Eigen::Vector2d(0.0, 4.0));
  EXPECT_THROW(downsample(c, 0), InputError);
}

TEST(Downsample, QuarterHourToHourly) {
  std::string text = "timestamp,kwh\n";
  for (int k = 0; k < 96; ++k) {
    char stamp[32];
    std::snprintf(stamp, sizeof stamp, "2013-03-04T%02d:%02d:00", k / 4, 15 * (k % 4));
    text += std::string(stamp) + "," + std::to_string(k) + "\n";
  }
  const LoadCurve hourly = downsample(parse(text), 4);
  ASSERT_EQ(hourly.size(), 24);
  for (Index k = 1; k < 24; ++k) EXPECT_EQ(hourly.hours(k) - hourly.hours(k - 1), 1.0);
}

TEST(NoiseEstimate, RecoversPlantedVariance) {
  const SyntheticDataset d = gen_load_curve(3, 2000, 0, 8.0);
  const Vector t = d.inputs.col(0);
  const NoiseEstimate est = spline_noise_estimate(t, d.responses, build_grid(1e-3, 10.0, 20, 2, 1e-4).mu_values);
  EXPECT_EQ(est.subset_size, 500);
  // residuals are (I - H) eps, so their variance is sigma^2 times the mean squared row norm of I - H
  const CubicSplineSmoother prefit(Vector(t.head(500)));
  const DesignOperator design = prefit.design(est.mu);
  const double shrink = design.residual_operator.rowwise().squaredNorm().mean();
  EXPECT_LT(shrink, 1.0);
  EXPECT_NEAR(est.sigma_sq, 0.25 * shrink, 0.25 * shrink * 0.15);
}

TEST(NoiseEstimate, PrefixIsCeilOfFraction) {
  const SyntheticDataset d = gen_load_curve(1, 501, 0, 8.0);
  const NoiseEstimate est = spline_noise_estimate(d.inputs.col(0), d.responses, Vector::Constant(1, 1.0));
  EXPECT_EQ(est.subset_size, 126);
  EXPECT_EQ(est.mu, 1.0);
  EXPECT_THROW(spline_noise_estimate(d.inputs.col(0), d.responses, Vector::Constant(1, 1.0), 0.0), InputError);
  EXPECT_THROW(spline_noise_estimate(d.inputs.col(0), d.responses, Vector(), 0.5), InputError);
}

TEST(Cleanse, SpikeFreeCurveFlagsAlmostNothing) {
  const SyntheticDataset d = gen_load_curve(4, 200, 0, 8.0);
  const CleanseReport r = cleanse(curve_from(d), small_config());
  EXPECT_LE(static_cast<double>(r.outlier_indices.size()), 0.02 * 200.0);
}

TEST(Cleanse, RecoversPlantedSpikes) {
  const SyntheticDataset d = gen_load_curve(2, 200, 5, 8.0);
  const CleanseReport r = cleanse(curve_from(d), small_config());
  Index hits = 0;
  for (Index i : d.outlier_indices)
    hits += std::find(r.outlier_indices.begin(), r.outlier_indices.end(), i) != r.outlier_indices.end();
  EXPECT_GE(hits, 4);
  const Vector base = d.clean_values();
  const double sigma_hat = std::sqrt(r.sigma_hat_sq);
  for (Index i : d.outlier_indices) EXPECT_LE(std::abs(r.cleansed(i) - base(i)), 3.0 * sigma_hat) << i;
}

TEST(Cleanse, TracksDataBetterThanNonrobustFit) {
  const SyntheticDataset d = gen_load_curve(5, 200, 5, 8.0);
  const CleanseReport r = cleanse(curve_from(d), small_config());
  const CubicSplineSmoother smoother(d.inputs.col(0));
  const DesignOperator design = smoother.design(r.chosen_mu);
  const RobustFit plain = fit_from_outliers(design, d.responses, Vector::Zero(d.size()), 0.0);
  double robust = 0.0, nonrobust = 0.0;
  for (Index i = 0; i < d.size(); ++i) {
    if (d.is_outlier(i)) continue;
    robust += std::pow(r.cleansed(i) - d.responses(i), 2);
    nonrobust += std::pow(plain.fitted_values(i) - d.responses(i), 2);
  }
  EXPECT_LE(robust, nonrobust);
}

TEST(Cleanse, ReportConsistency) {
  const SyntheticDataset d = gen_load_curve(6, 150, 4, 8.0);
  const CleanseConfig config = small_config();
  const CleanseReport r = cleanse(curve_from(d), config);
  const TuningGrid grid = build_grid(1e-3, 10.0, 8, 60, 1e-4);
  EXPECT_EQ(r.mu_grid, grid.mu_values);
  EXPECT_EQ(r.chosen_mu, grid.mu_values(r.cell.mu_index));
  EXPECT_EQ(r.chosen_lambda, r.lambda_grid(r.cell.lambda_index));
  EXPECT_EQ(r.lambda_grid.size(), 60);
  EXPECT_EQ(r.outlier_indices, r.refined.outlier_support(1e-8));
  ASSERT_EQ(r.outlier_magnitudes.size(), static_cast<Index>(r.outlier_indices.size()));
  for (std::size_t k = 0; k < r.outlier_indices.size(); ++k)
    EXPECT_EQ(r.outlier_magnitudes(static_cast<Index>(k)), r.refined.outliers(r.outlier_indices[k]));
  EXPECT_EQ(r.pre_refinement_count, static_cast<Index>(r.l1_fit.outlier_support(1e-8).size()));
  EXPECT_EQ(r.cleansed, r.refined.fitted_values);
  EXPECT_EQ(r.prefit_size, 38);
  EXPECT_GT(r.sigma_hat_sq, 0.0);
}

TEST(Cleanse, DeterministicAndThreadIndependent) {
  const LoadCurve c = curve_from(gen_load_curve(7, 120, 3, 8.0));
  CleanseConfig config = small_config();
  const CleanseReport a = cleanse(c, config);
  config.pipeline.threads = 3;
  const CleanseReport b = cleanse(c, config);
  EXPECT_EQ(a.cleansed, b.cleansed);
  EXPECT_EQ(a.outlier_indices, b.outlier_indices);
  EXPECT_EQ(report_json(c, a, config), report_json(c, b, config));
}

TEST(Cleanse, GivenNoiseVarianceSkipsPrefit) {
  const LoadCurve c = curve_from(gen_load_curve(8, 100, 2, 8.0));
  CleanseConfig config = small_config();
  config.sigma_sq = 0.25;
  const CleanseReport r = cleanse(c, config);
  EXPECT_EQ(r.sigma_hat_sq, 0.25);
  EXPECT_EQ(r.prefit_size, 0);
  config.sigma_sq = -1.0;
  EXPECT_THROW(cleanse(c, config), InputError);
}

TEST(Cleanse, DegenerateInputs) {
  EXPECT_THROW(cleanse(parse("timestamp,kwh\n0,1\n1,2\n2,3\n")), InputError);
  // an exactly linear curve has zero residual scale
  std::string text = "timestamp,kwh\n";
  for (int k = 0; k < 40; ++k) text += std::to_string(k) + "," + std::to_string(2 * k + 1) + "\n";
  try {
    cleanse(parse(text), small_config());
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("cleanse [noise scale]"), std::string::npos) << e.what();
  }
}

TEST(Cleanse, ReportJsonShape) {
  const SyntheticDataset d = gen_load_curve(9, 100, 3, 8.0);
  const LoadCurve c = curve_from(d);
  const CleanseConfig config = small_config();
  const CleanseReport r = cleanse(c, config);
  const auto j = nlohmann::json::parse(report_json(c, r, config));
  ASSERT_EQ(j.at("cleansed").size(), 100u);
  EXPECT_EQ(j["cleansed"][5]["value"].get<double>(), r.cleansed(5));
  EXPECT_TRUE(j["cleansed"][5].contains("t"));
  ASSERT_EQ(j.at("outliers").size(), r.outlier_indices.size());
  for (const auto& o : j["outliers"]) {
    const Index i = o.at("index").get<Index>();
    EXPECT_EQ(o.at("y").get<double>(), d.responses(i));
    EXPECT_EQ(o.at("o_hat").get<double>(), r.refined.outliers(i));
  }
  const auto& sel = j.at("selection");
  EXPECT_EQ(sel.at("mu").get<double>(), r.chosen_mu);
  EXPECT_EQ(sel.at("lambda").get<double>(), r.chosen_lambda);
  EXPECT_EQ(sel.at("sigma_hat_sq").get<double>(), r.sigma_hat_sq);
  EXPECT_EQ(sel.at("grid_spec").at("g_mu").get<Index>(), 8);
  EXPECT_EQ(j.at("counts").at("pre_refinement").get<Index>(), r.pre_refinement_count);
  EXPECT_EQ(j.at("counts").at("post_refinement").get<std::size_t>(), r.outlier_indices.size());
}

TEST(Cleanse, PlotCsv) {
  const SyntheticDataset d = gen_load_curve(10, 60, 2, 8.0);
  const LoadCurve c = curve_from(d);
  const CleanseReport r = cleanse(c, small_config());
  std::ostringstream out;
  write_plot_csv(c, r, out);
  std::istringstream lines(out.str());
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "t,y_raw,y_cleansed,is_outlier");
  Index rows = 0, flagged = 0;
  while (std::getline(lines, line)) {
    ++rows;
    flagged += line.back() == '1';
  }
  EXPECT_EQ(rows, 60);
  EXPECT_EQ(flagged, static_cast<Index>(r.outlier_indices.size()));
}
