#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rnr/robust_fit.hpp"
#include "rnr/tuning.hpp"
#include "rnr/types.hpp"

namespace rnr {

struct LoadCurve {
  std::vector<std::string> stamps;  // timestamps as written in the source
  Vector hours;                     // strictly increasing, in hours
  Vector kwh;
  std::string source;
  std::vector<Index> negative_rows;  // readings below zero; kept, only flagged

  Index size() const { return kwh.size(); }
  bool has_warnings() const { return !negative_rows.empty(); }
};

/// Header "timestamp,kwh"; timestamps are ISO-8601 date-times (YYYY-MM-DDTHH:MM[:SS][Z|+HH:MM])
/// or plain numbers of hours. Errors name the offending line.
LoadCurve parse_load_csv(std::istream& in, const std::string& source = "<stream>");
LoadCurve load_csv(const std::string& path);

/// Keeps samples 0, factor, 2 factor, ...
LoadCurve downsample(const LoadCurve& curve, Index factor);

/// Nonrobust noise scale: a smoothing spline on the first ceil(N * fraction) samples with mu
/// chosen by exact leave-one-out over mu_values, then MAD of its residuals, squared.
struct NoiseEstimate {
  double sigma_sq = 0.0;
  double mu = 0.0;
  Index subset_size = 0;
};
NoiseEstimate spline_noise_estimate(const Vector& t, const Vector& y, const Vector& mu_values, double fraction = 0.25);

struct CleanseConfig {
  PipelineOptions pipeline;
  double subset_fraction = 0.25;
  std::optional<double> sigma_sq;  // known noise variance; skips the MAD stage
};

struct CleanseReport {
  Vector hours;
  Vector cleansed;
  std::vector<Index> outlier_indices;
  Vector outlier_magnitudes;
  double chosen_mu = 0.0;
  double chosen_lambda = 0.0;
  GridCell cell;
  double sigma_hat_sq = 0.0;
  double prefit_mu = 0.0;
  Index prefit_size = 0;
  Index pre_refinement_count = 0;
  Vector lambda_grid;  // the selected mu's lambda grid
  Vector mu_grid;
  RobustFit l1_fit;
  RobustFit refined;
};

CleanseReport cleanse(const LoadCurve& curve, const CleanseConfig& config = {});

/// JSON report with keys cleansed, outliers, selection and counts.
std::string report_json(const LoadCurve& curve, const CleanseReport& report, const CleanseConfig& config);

/// Plot data: t,y_raw,y_cleansed,is_outlier
void write_plot_csv(const LoadCurve& curve, const CleanseReport& report, std::ostream& out);

}  // namespace rnr
