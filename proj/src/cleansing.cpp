#include "rnr/cleansing.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rnr/error.hpp"
#include "rnr/splines.hpp"

namespace rnr {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::optional<double> parse_number(const std::string& s) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

int digits(const std::string& s, std::size_t pos, std::size_t count) {
  if (pos + count > s.size()) return -1;
  int v = 0;
  for (std::size_t i = pos; i < pos + count; ++i) {
    if (s[i] < '0' || s[i] > '9') return -1;
    v = v * 10 + (s[i] - '0');
  }
  return v;
}

// Hours since 1970-01-01T00:00Z, or nullopt when the text is not a date-time we accept.
std::optional<double> parse_iso8601(const std::string& s) {
  const int year = digits(s, 0, 4);
  const int month = digits(s, 5, 2);
  const int day = digits(s, 8, 2);
  if (year < 0 || month < 0 || day < 0 || s[4] != '-' || s[7] != '-') return std::nullopt;
  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                           std::chrono::day{static_cast<unsigned>(day)}};
  if (!ymd.ok()) return std::nullopt;
  double hours = 24.0 * static_cast<double>(sys_days{ymd}.time_since_epoch().count());
  std::size_t pos = 10;
  if (pos == s.size()) return hours;
  if (s[pos] != 'T' && s[pos] != ' ') return std::nullopt;
  const int hh = digits(s, pos + 1, 2);
  const int mm = digits(s, pos + 4, 2);
  if (hh < 0 || mm < 0 || s[pos + 3] != ':' || hh > 23 || mm > 59) return std::nullopt;
  hours += hh + mm / 60.0;
  pos += 6;
  if (pos < s.size() && s[pos] == ':') {
    const int ss = digits(s, pos + 1, 2);
    if (ss < 0 || ss > 60) return std::nullopt;
    hours += ss / 3600.0;
    pos += 3;
    if (pos < s.size() && s[pos] == '.') {
      std::size_t end = pos + 1;
      while (end < s.size() && s[end] >= '0' && s[end] <= '9') ++end;
      if (end == pos + 1) return std::nullopt;
      hours += std::stod("0" + s.substr(pos, end - pos)) / 3600.0;
      pos = end;
    }
  }
  if (pos == s.size()) return hours;
  if (s[pos] == 'Z' && pos + 1 == s.size()) return hours;
  if ((s[pos] == '+' || s[pos] == '-') && s.size() == pos + 6 && s[pos + 3] == ':') {
    const int oh = digits(s, pos + 1, 2);
    const int om = digits(s, pos + 4, 2);
    if (oh < 0 || om < 0) return std::nullopt;
    const double offset = oh + om / 60.0;
    return s[pos] == '+' ? hours - offset : hours + offset;
  }
  return std::nullopt;
}

std::string line_error(long line, const std::string& message) {
  return "line " + std::to_string(line) + ": " + message;
}

template <typename F>
auto stage(const char* name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const InputError& e) {
    throw InputError(std::string("cleanse [") + name + "]: " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("cleanse [") + name + "]: " + e.what());
  }
}

}  // namespace

LoadCurve parse_load_csv(std::istream& in, const std::string& source) {
  LoadCurve curve;
  curve.source = source;
  std::string line;
  long line_no = 0;
  bool header_seen = false;
  std::vector<double> hours;
  std::vector<double> kwh;
  std::optional<bool> iso;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    line = trim(line);
    if (line.empty()) continue;
    if (!header_seen) {
      std::string lower = line;
      std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
      lower.erase(std::remove(lower.begin(), lower.end(), ' '), lower.end());
      if (lower != "timestamp,kwh") throw InputError(line_error(line_no, "expected header 'timestamp,kwh'"));
      header_seen = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
      throw InputError(line_error(line_no, "expected two comma-separated fields"));
    const std::string stamp = trim(line.substr(0, comma));
    const std::string value = trim(line.substr(comma + 1));

    std::optional<double> t;
    if (!iso.has_value()) iso = !parse_number(stamp).has_value();
    t = *iso ? parse_iso8601(stamp) : parse_number(stamp);
    if (!t) throw InputError(line_error(line_no, "unparsable timestamp '" + stamp + "'"));
    const auto v = parse_number(value);
    if (!v) throw InputError(line_error(line_no, "unparsable kWh value '" + value + "'"));
    if (!hours.empty()) {
      if (*t == hours.back()) throw InputError(line_error(line_no, "duplicate timestamp '" + stamp + "'"));
      if (*t < hours.back()) throw InputError(line_error(line_no, "timestamp '" + stamp + "' is earlier than the previous row"));
    }
    if (*v < 0.0) curve.negative_rows.push_back(static_cast<Index>(kwh.size()));
    curve.stamps.push_back(stamp);
    hours.push_back(*t);
    kwh.push_back(*v);
  }
  if (!header_seen) throw InputError(source + ": empty file, expected header 'timestamp,kwh'");
  if (kwh.empty()) throw InputError(source + ": load curve has no measurements");
  curve.hours = Eigen::Map<const Vector>(hours.data(), static_cast<Index>(hours.size()));
  curve.kwh = Eigen::Map<const Vector>(kwh.data(), static_cast<Index>(kwh.size()));
  return curve;
}

LoadCurve load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  try {
    return parse_load_csv(in, path);
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
}

LoadCurve downsample(const LoadCurve& curve, Index factor) {
  if (factor < 1) throw InputError("downsample: factor must be at least 1");
  LoadCurve out;
  out.source = curve.source;
  const Index n = (curve.size() + factor - 1) / factor;
  out.hours.resize(n);
  out.kwh.resize(n);
  for (Index k = 0; k < n; ++k) {
    out.hours(k) = curve.hours(k * factor);
    out.kwh(k) = curve.kwh(k * factor);
    out.stamps.push_back(curve.stamps.empty() ? std::string() : curve.stamps[static_cast<std::size_t>(k * factor)]);
  }
  for (Index r : curve.negative_rows)
    if (r % factor == 0) out.negative_rows.push_back(r / factor);
  return out;
}

NoiseEstimate spline_noise_estimate(const Vector& t, const Vector& y, const Vector& mu_values, double fraction) {
  if (t.size() != y.size()) throw InputError("noise estimate: length mismatch");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw InputError("noise estimate: subset fraction must lie in (0, 1]");
  if (mu_values.size() == 0) throw InputError("noise estimate: empty mu grid");
  NoiseEstimate est;
  est.subset_size = static_cast<Index>(std::ceil(fraction * static_cast<double>(t.size())));
  if (est.subset_size < 4) throw InputError("noise estimate: subset needs at least 4 samples");
  const CubicSplineSmoother smoother(Vector(t.head(est.subset_size)));
  const Vector ys = y.head(est.subset_size);
  double best = INFINITY;
  Vector best_residuals;
  for (Index i = 0; i < mu_values.size(); ++i) {
    const DesignOperator d = smoother.design(mu_values(i));
    const Vector r = d.residual_operator * ys;
    // leave-one-out residual of a linear smoother: r_i / (1 - H_ii) = r_i / (I - H)_ii
    const double loo = (r.array() / d.residual_operator.diagonal().array()).square().mean();
    if (loo < best) {
      best = loo;
      best_residuals = r;
      est.mu = mu_values(i);
    }
  }
  const double scale = mad_scale(best_residuals);
  est.sigma_sq = scale * scale;
  return est;
}

CleanseReport cleanse(const LoadCurve& curve, const CleanseConfig& config) {
  if (curve.size() < 10) throw InputError("cleanse: need at least 10 measurements");
  CleanseReport report;
  report.hours = (curve.hours.array() - curve.hours(0)).matrix();
  const Vector& y = curve.kwh;

  const TuningGrid grid_spec = build_grid(config.pipeline.mu_min, config.pipeline.mu_max, config.pipeline.g_mu,
                                          config.pipeline.g_lambda, config.pipeline.epsilon);
  if (config.sigma_sq) {
    if (!(*config.sigma_sq > 0.0)) throw InputError("cleanse: noise variance must be positive");
    report.sigma_hat_sq = *config.sigma_sq;
  } else {
    const NoiseEstimate est = stage("noise scale", [&] {
      return spline_noise_estimate(report.hours, y, grid_spec.mu_values, config.subset_fraction);
    });
    report.sigma_hat_sq = est.sigma_sq;
    report.prefit_mu = est.mu;
    report.prefit_size = est.subset_size;
    // roundoff-level residuals mean the prefit reproduced the data (affine or interpolated curve)
    const double scale = std::max(1.0, y.cwiseAbs().maxCoeff());
    if (!(std::sqrt(report.sigma_hat_sq) > 1e-9 * scale))
      throw NumericalError("cleanse [noise scale]: robust noise estimate is negligible; the prefit reproduces the data");
  }

  const CubicSplineSmoother smoother(report.hours);
  const PipelineResult result =
      stage("robust fit", [&] { return avd_pipeline(smoother, y, report.sigma_hat_sq, config.pipeline); });
  report.cell = result.cell;
  report.chosen_mu = result.mu;
  report.chosen_lambda = result.lambda;
  report.mu_grid = result.grid.mu_values;
  report.lambda_grid = result.grid.paths[static_cast<std::size_t>(result.cell.mu_index)].lambda_grid;
  report.l1_fit = result.l1_fit;
  report.refined = result.refined;
  report.pre_refinement_count =
      static_cast<Index>(result.l1_fit.outlier_support(config.pipeline.outlier_threshold).size());
  report.cleansed = result.refined.fitted_values;
  report.outlier_indices = result.refined.outlier_support(config.pipeline.outlier_threshold);
  report.outlier_magnitudes.resize(static_cast<Index>(report.outlier_indices.size()));
  for (std::size_t a = 0; a < report.outlier_indices.size(); ++a)
    report.outlier_magnitudes(static_cast<Index>(a)) = result.refined.outliers(report.outlier_indices[a]);
  return report;
}

std::string report_json(const LoadCurve& curve, const CleanseReport& report, const CleanseConfig& config) {
  using nlohmann::json;
  json cleansed = json::array();
  for (Index i = 0; i < curve.size(); ++i)
    cleansed.push_back({{"t", curve.stamps[static_cast<std::size_t>(i)]}, {"hour", report.hours(i)},
                        {"value", report.cleansed(i)}});
  json outliers = json::array();
  for (std::size_t a = 0; a < report.outlier_indices.size(); ++a) {
    const Index i = report.outlier_indices[a];
    outliers.push_back({{"index", i},
                        {"t", curve.stamps[static_cast<std::size_t>(i)]},
                        {"y", curve.kwh(i)},
                        {"o_hat", report.outlier_magnitudes(static_cast<Index>(a))}});
  }
  const PipelineOptions& p = config.pipeline;
  json grid_spec = {{"g_mu", p.g_mu},       {"g_lambda", p.g_lambda}, {"mu_min", p.mu_min},
                    {"mu_max", p.mu_max},   {"epsilon", p.epsilon},   {"refine_iters", p.refine_iters},
                    {"delta", p.delta},
                    {"denominator", p.denominator == VarianceDenominator::retained ? "retained" : "outlier-count"}};
  json selection = {{"mu", report.chosen_mu},
                    {"lambda", report.chosen_lambda},
                    {"mu_index", report.cell.mu_index},
                    {"lambda_index", report.cell.lambda_index},
                    {"sigma_hat_sq", report.sigma_hat_sq},
                    {"sigma_source", config.sigma_sq ? "given" : "mad"},
                    {"grid_spec", grid_spec}};
  if (!config.sigma_sq) {
    selection["prefit_mu"] = report.prefit_mu;
    selection["prefit_size"] = report.prefit_size;
  }
  json doc = {{"source", curve.source},
              {"cleansed", cleansed},
              {"outliers", outliers},
              {"selection", selection},
              {"counts",
               {{"samples", curve.size()},
                {"pre_refinement", report.pre_refinement_count},
                {"post_refinement", static_cast<Index>(report.outlier_indices.size())}}},
              {"warnings", json::array()}};
  for (Index r : curve.negative_rows)
    doc["warnings"].push_back("negative reading at row " + std::to_string(r) + " (" +
                              curve.stamps[static_cast<std::size_t>(r)] + ")");
  return doc.dump(2);
}

void write_plot_csv(const LoadCurve& curve, const CleanseReport& report, std::ostream& out) {
  out.precision(17);
  out << "t,y_raw,y_cleansed,is_outlier\n";
  std::size_t next = 0;
  for (Index i = 0; i < curve.size(); ++i) {
    bool flagged = next < report.outlier_indices.size() && report.outlier_indices[next] == i;
    if (flagged) ++next;
    out << report.hours(i) << ',' << curve.kwh(i) << ',' << report.cleansed(i) << ',' << (flagged ? 1 : 0) << '\n';
  }
}

}  // namespace rnr
