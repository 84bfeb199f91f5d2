#include "rnr/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rnr/cleansing.hpp"
#include "rnr/error.hpp"
#include "rnr/experiments.hpp"
#include "rnr/kernels.hpp"
#include "rnr/robust_fit.hpp"
#include "rnr/splines.hpp"
#include "rnr/tuning.hpp"

namespace rnr {
namespace {

using json = nlohmann::ordered_json;

// Nested JSON objects map to subcommands; keys may use '_' where the flag uses '-'.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    json j = json::object();
    for (const CLI::Option* opt : app->get_options()) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const std::string& name = opt->get_lnames().front();
      if (opt->count() > 0)
        j[name] = opt->results().size() == 1 ? json(opt->results().front()) : json(opt->results());
      else if (default_also && !opt->get_default_str().empty())
        j[name] = opt->get_default_str();
    }
    return j.dump(2) + "\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw CLI::ConfigError(std::string("config file: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConfigError("config file: top level must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    flatten(j, {}, items);
    return items;
  }

 private:
  static std::string flag_name(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return key;
  }

  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_object() || v.is_array()) throw CLI::ConfigError("config file: nested arrays are not supported");
    return v.dump();
  }

  static void flatten(const json& j, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        auto nested = parents;
        nested.push_back(flag_name(key));
        flatten(value, nested, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = flag_name(key);
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    }
  }
};

std::string exact(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json one_based(const std::vector<Index>& indices) {
  json rows = json::array();
  for (Index i : indices) rows.push_back(i + 1);
  return rows;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  out.precision(17);
  return out;
}

void finish_output(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw InputError("write to '" + path + "' failed");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out = open_output(path);
  out << text;
  finish_output(out, path);
}

// ---- data files ------------------------------------------------------------

struct Table {
  PointMatrix inputs;
  Vector responses;
  bool timestamps = false;
};

Table read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::string header;
  std::getline(in, header);
  if (header.rfind("\xEF\xBB\xBF", 0) == 0) header.erase(0, 3);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  std::string lowered = header;
  std::transform(lowered.begin(), lowered.end(), lowered.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lowered.rfind("timestamp", 0) == 0) {
    const LoadCurve curve = load_csv(path);
    Table t;
    t.timestamps = true;
    t.inputs = (curve.hours.array() - curve.hours(0)).matrix();
    t.responses = curve.kwh;
    return t;
  }
  auto fail = [&](long line, const std::string& what) {
    return InputError(path + ": line " + std::to_string(line) + ": " + what);
  };
  const auto columns = static_cast<Index>(std::count(header.begin(), header.end(), ',') + 1);
  if (header.empty() || columns < 2) throw fail(1, "expected a header with input columns and a response column");
  std::vector<std::vector<double>> rows;
  std::string line;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream fields(line);
    std::string field;
    while (std::getline(fields, field, ',')) {
      double v = 0.0;
      const char* first = field.data();
      const char* last = field.data() + field.size();
      while (first < last && *first == ' ') ++first;
      while (last > first && last[-1] == ' ') --last;
      const auto res = std::from_chars(first, last, v);
      if (res.ec != std::errc() || res.ptr != last) throw fail(line_no, "'" + field + "' is not a number");
      if (!std::isfinite(v)) throw fail(line_no, "non-finite value");
      row.push_back(v);
    }
    if (static_cast<Index>(row.size()) != columns)
      throw fail(line_no, "expected " + std::to_string(columns) + " fields, found " + std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InputError(path + ": no data rows");
  Table t;
  const auto n = static_cast<Index>(rows.size());
  t.inputs.resize(n, columns - 1);
  t.responses.resize(n);
  for (Index i = 0; i < n; ++i) {
    for (Index c = 0; c + 1 < columns; ++c) t.inputs(i, c) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
    t.responses(i) = rows[static_cast<std::size_t>(i)].back();
  }
  return t;
}

struct ModelArgs {
  std::string model = "auto";
  double width = 0.1;
};

void add_model_options(CLI::App* cmd, ModelArgs& m) {
  cmd->add_option("--model", m.model,
                  "auto | gaussian | linear | thin-plate | cubic-spline (auto: thin-plate for 2-D inputs, "
                  "cubic-spline for timestamped data, gaussian otherwise)")
      ->check(CLI::IsMember({"auto", "gaussian", "linear", "thin-plate", "cubic-spline"}))
      ->capture_default_str();
  cmd->add_option("--width", m.width, "gaussian kernel width")->check(CLI::PositiveNumber)->capture_default_str();
}

std::string resolve_model(const ModelArgs& m, const Table& t) {
  if (m.model != "auto") return m.model;
  if (t.inputs.cols() == 2) return "thin-plate";
  return t.timestamps ? "cubic-spline" : "gaussian";
}

std::unique_ptr<SmootherFamily> make_smoother(const std::string& model, double width, const Table& t) {
  if (model == "gaussian")
    return std::make_unique<KernelSmoother>(gram_matrix(KernelSpec::gaussian(width, t.inputs.cols()), t.inputs));
  if (model == "linear")
    return std::make_unique<KernelSmoother>(gram_matrix(KernelSpec::linear(t.inputs.cols()), t.inputs));
  if (model == "thin-plate") {
    if (t.inputs.cols() != 2) throw InputError("thin-plate model needs two input columns");
    return std::make_unique<ThinPlateSmoother>(t.inputs);
  }
  if (t.inputs.cols() != 1) throw InputError("cubic-spline model needs one input column");
  return std::make_unique<CubicSplineSmoother>(t.inputs.col(0));
}

LassoOptions<double> lasso_options(double tol, long max_iter) {
  LassoOptions<double> o;
  o.tol = tol;
  o.max_iter = max_iter;
  return o;
}

VarianceDenominator parse_denominator(const std::string& name) {
  return name == "outlier-count" ? VarianceDenominator::outlier_count : VarianceDenominator::retained;
}

template <typename F>
auto annotate(const std::string& where, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const InputError& e) {
    throw InputError(where + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(where + ": " + e.what());
  }
}

// ---- simulate --------------------------------------------------------------

struct SimulateArgs {
  std::string kind;
  std::optional<Index> n;
  std::optional<Index> outliers;
  std::optional<double> noise;
  double spike_scale = 8.0;
  std::uint64_t seed = 0;
  std::string out;
  std::string truth;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  SyntheticDataset data;
  if (a.kind == "gaussian-mixture") {
    data = gen_gaussian_mixture(a.seed, a.n.value_or(200), a.outliers.value_or(20), a.noise.value_or(1e-3));
  } else if (a.kind == "sinc") {
    data = gen_sinc(a.seed, a.n.value_or(50), a.outliers.value_or(3), a.noise.value_or(1e-4));
  } else {
    LoadCurveShape shape;
    if (a.noise) shape.noise_sigma = std::sqrt(*a.noise);
    data = gen_load_curve(a.seed, a.n.value_or(500), a.outliers.value_or(10), a.spike_scale, shape);
  }
  const std::string csv_path = a.out.empty() ? a.kind + "_seed" + std::to_string(a.seed) + ".csv" : a.out;
  std::string truth_path = a.truth;
  if (truth_path.empty()) {
    const auto dot = csv_path.rfind('.');
    const auto slash = csv_path.find_last_of('/');
    const bool has_ext = dot != std::string::npos && (slash == std::string::npos || dot > slash);
    truth_path = (has_ext ? csv_path.substr(0, dot) : csv_path) + ".truth.json";
  }

  std::ofstream csv = open_output(csv_path);
  write_dataset_csv(data, csv);
  finish_output(csv, csv_path);

  json truth{{"kind", data.kind},
             {"seed", data.seed},
             {"n", data.size()},
             {"noise_variance", data.noise_variance},
             {"outlier_indices", data.outlier_indices},
             {"outlier_rows", one_based(data.outlier_indices)},
             {"clean_values", to_json(data.clean_values())}};
  if (a.kind == "load-curve") truth["spike_scale"] = a.spike_scale;
  write_text(truth_path, truth.dump(2) + "\n");

  const Vector& y = data.responses;
  const double mean = y.mean();
  const double sd = std::sqrt((y.array() - mean).square().sum() / static_cast<double>(y.size()));
  out << "simulated " << data.kind << ": seed=" << data.seed << " n=" << data.size()
      << " outliers=" << data.outlier_indices.size() << " noise_variance=" << data.noise_variance << '\n'
      << "responses: mean=" << mean << " sd=" << sd << " min=" << y.minCoeff() << " max=" << y.maxCoeff() << '\n'
      << "wrote " << csv_path << " and " << truth_path << '\n';
  return 0;
}

// ---- fit -------------------------------------------------------------------

struct FitArgs {
  std::string data;
  ModelArgs model;
  double mu = 0.0;
  double lambda = 0.0;
  int refine_iters = 0;
  double delta = 1e-5;
  double tol = 1e-8;
  long max_iter = 10000;
  double threshold = 1e-8;
  std::string out;
  std::string eval_grid;
  Index eval_points = 0;
  std::string truth;
  std::uint64_t test_seed = 7;
};

json fit_json(const RobustFit& fit, double threshold) {
  const std::vector<Index> support = fit.outlier_support(threshold);
  json values = json::array();
  for (Index i : support) values.push_back(fit.outliers(i));
  return {{"beta", to_json(fit.beta)},
          {"alpha", to_json(fit.alpha)},
          {"outlier_indices", support},
          {"outlier_rows", one_based(support)},
          {"outlier_values", values},
          {"objective", fit.objective},
          {"iterations", fit.iterations},
          {"fitted_values", to_json(fit.fitted_values)},
          {"residuals", to_json(fit.residuals)}};
}

PointMatrix evaluation_grid(const PointMatrix& x, Index points) {
  if (x.cols() == 1) {
    const Index m = points > 0 ? points : 201;
    return Vector::LinSpaced(m, x.minCoeff(), x.maxCoeff());
  }
  if (x.cols() != 2) throw InputError("--eval-grid supports one or two input columns");
  const Index m = points > 0 ? points : 31;
  const Vector a = Vector::LinSpaced(m, x.col(0).minCoeff(), x.col(0).maxCoeff());
  const Vector b = Vector::LinSpaced(m, x.col(1).minCoeff(), x.col(1).maxCoeff());
  PointMatrix g(m * m, 2);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < m; ++j) g.row(i * m + j) << a(i), b(j);
  return g;
}

// Planted-truth comparison for files written by `simulate`.
json truth_json(const std::string& path, const Table& table, const SmootherFamily& smoother, const RobustFit& l1,
                const RobustFit* refined, double threshold, std::uint64_t test_seed) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  json truth;
  try {
    truth = json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
  SyntheticDataset data;
  try {
    data.kind = truth.at("kind").get<std::string>();
    data.noise_variance = truth.at("noise_variance").get<double>();
    data.outlier_indices = truth.at("outlier_indices").get<std::vector<Index>>();
  } catch (const json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
  data.inputs = table.inputs;
  data.responses = table.responses;
  for (Index i : data.outlier_indices)
    if (i < 0 || i >= table.responses.size()) throw InputError(path + ": outlier index out of range for the data");
  PointMatrix grid;
  if (data.kind == "gaussian-mixture") {
    data.clean_function = [](const Vector& x) { return gaussian_mixture_function(Eigen::Vector2d(x(0), x(1))); };
    grid = mixture_test_grid();
  } else if (data.kind == "sinc") {
    data.clean_function = [](const Vector& x) { return sinc(x(0)); };
    grid = sinc_test_grid();
  } else if (data.kind == "load-curve") {
    data.clean_function = [](const Vector& x) { return load_curve_base(x(0)); };
  } else {
    throw InputError(path + ": unknown dataset kind '" + data.kind + "'");
  }
  if (table.inputs.cols() != (data.kind == "gaussian-mixture" ? 2 : 1))
    throw InputError(path + ": truth kind does not match the data dimension");

  auto summarize = [&](const RobustFit& fit) {
    const std::vector<Index> flagged = fit.outlier_support(threshold);
    Index hits = 0;
    for (Index i : flagged) hits += data.is_outlier(i);
    json s{{"flagged", flagged.size()},
           {"planted_found", hits},
           {"false_positives", static_cast<Index>(flagged.size()) - hits},
           {"exact_support", flagged == data.outlier_indices},
           {"training_error", training_error(fit.fitted_values, data)}};
    if (grid.rows() > 0) {
      auto predict = [&](const PointMatrix& q) { return smoother.evaluate(fit, q); };
      s["generalization_error"] =
          generalization_error(predict, grid, data.clean_function, data.noise_variance, test_seed);
    }
    return s;
  };
  json report{{"planted", data.outlier_indices.size()}, {"l1", summarize(l1)}};
  if (refined != nullptr) report["refined"] = summarize(*refined);
  return report;
}

int cmd_fit(const FitArgs& a, std::ostream& out) {
  const Table table = read_table(a.data);
  const std::string model = resolve_model(a.model, table);
  const auto smoother = annotate("fit [design]", [&] { return make_smoother(model, a.model.width, table); });
  const std::string where = "mu=" + exact(a.mu) + ", lambda=" + exact(a.lambda);
  const DesignOperator design = annotate("fit [design, " + where + "]", [&] { return smoother->design(a.mu); });
  const LassoOptions<double> lasso = lasso_options(a.tol, a.max_iter);
  const double top = lambda_max(lasso_problem(design, table.responses));
  const RobustFit l1 =
      annotate("fit [l1 lasso, " + where + "]", [&] { return lasso_fit(design, table.responses, a.lambda, Vector(), lasso); });
  std::optional<RobustFit> refined;
  if (a.refine_iters > 0) {
    refined = annotate("fit [refinement, " + where + "]", [&] {
      return reweighted_refine(design, table.responses, a.lambda, a.delta, l1.outliers, a.refine_iters, lasso);
    });
  }

  json report{{"data", a.data},
              {"model", {{"family", model}, {"width", a.model.width}}},
              {"n", table.responses.size()},
              {"mu", a.mu},
              {"lambda", a.lambda},
              {"lambda_max", top},
              {"refine_iters", a.refine_iters},
              {"delta", a.delta},
              {"l1", fit_json(l1, a.threshold)}};
  if (refined) report["refined"] = fit_json(*refined, a.threshold);
  if (!a.truth.empty())
    report["truth"] =
        truth_json(a.truth, table, *smoother, l1, refined ? &*refined : nullptr, a.threshold, a.test_seed);

  if (!a.eval_grid.empty()) {
    const PointMatrix grid = evaluation_grid(table.inputs, a.eval_points);
    const Vector f1 = smoother->evaluate(l1, grid);
    const Vector f2 = refined ? smoother->evaluate(*refined, grid) : Vector();
    std::ofstream csv = open_output(a.eval_grid);
    csv << (grid.cols() == 1 ? "x" : "x1,x2") << ",f_l1" << (refined ? ",f_refined" : "") << '\n';
    for (Index i = 0; i < grid.rows(); ++i) {
      for (Index c = 0; c < grid.cols(); ++c) csv << grid(i, c) << ',';
      csv << f1(i);
      if (refined) csv << ',' << f2(i);
      csv << '\n';
    }
    finish_output(csv, a.eval_grid);
  }

  if (a.out.empty()) {
    out << report.dump(2) << '\n';
    return 0;
  }
  write_text(a.out, report.dump(2) + "\n");
  out << "fit " << model << " on " << table.responses.size() << " points: mu=" << a.mu << " lambda=" << a.lambda
      << " (lambda_max=" << top << ")\n"
      << "l1: " << l1.outlier_support(a.threshold).size() << " outliers, objective " << l1.objective << '\n';
  if (refined)
    out << "refined (" << a.refine_iters << " iterations): " << refined->outlier_support(a.threshold).size()
        << " outliers\n";
  out << "wrote " << a.out << '\n';
  return 0;
}

// ---- path ------------------------------------------------------------------

struct PathArgs {
  std::string data;
  ModelArgs model;
  Index g_mu = 100;
  Index g_lambda = 200;
  double mu_min = 1e-3;
  double mu_max = 10.0;
  double epsilon = 1e-4;
  int threads = 1;
  double tol = 1e-8;
  long max_iter = 10000;
  std::string out;
  bool sparse = false;
  std::optional<double> sigma2;
  std::string denominator = "retained";
  std::string replay;
};

int cmd_path(const PathArgs& a, std::ostream& out) {
  if (a.replay.empty() && a.out.empty()) throw InputError("path: --out is required unless --replay is given");
  if (!a.replay.empty() && !a.sigma2) throw InputError("path: --replay needs --sigma2 to select a cell");
  if (a.sigma2 && !(*a.sigma2 > 0.0)) throw InputError("path: --sigma2 must be positive");
  const Table table = read_table(a.data);
  const std::string model = resolve_model(a.model, table);
  const auto smoother = annotate("path [design]", [&] { return make_smoother(model, a.model.width, table); });
  const VarianceDenominator denominator = parse_denominator(a.denominator);

  TuningGrid grid;
  VarianceSurface surface;
  if (!a.replay.empty()) {
    std::ifstream in(a.replay);
    if (!in) throw InputError("cannot open '" + a.replay + "'");
    grid = annotate(a.replay, [&] { return read_path_csv(in); });
    surface = annotate("path [replay]",
                       [&] { return surface_from_paths(*smoother, table.responses, grid, denominator, a.threads); });
  } else {
    grid = build_grid(a.mu_min, a.mu_max, a.g_mu, a.g_lambda, a.epsilon);
    GridSearchOptions search;
    search.lasso = lasso_options(a.tol, a.max_iter);
    search.denominator = denominator;
    search.threads = a.threads;
    surface = annotate("path [robustification paths]", [&] { return grid_search(*smoother, table.responses, grid, search); });
    std::ofstream csv = open_output(a.out);
    write_path_csv(grid, table.responses.size(), csv, a.sparse);
    finish_output(csv, a.out);
    out << "wrote " << grid.g_mu() << " x " << grid.g_lambda << " robustification paths (" << model << ") to " << a.out
        << '\n';
  }
  if (a.sigma2) {
    const GridCell cell = annotate("path [selection]", [&] { return select_avd(surface, *a.sigma2); });
    const auto& path = grid.paths[static_cast<std::size_t>(cell.mu_index)];
    out << "selected mu_index=" << cell.mu_index << " lambda_index=" << cell.lambda_index
        << " mu=" << exact(grid.mu_values(cell.mu_index)) << " lambda=" << exact(path.lambda_grid(cell.lambda_index))
        << " outliers=" << path.supports[static_cast<std::size_t>(cell.lambda_index)].size() << '\n';
  }
  return 0;
}

// ---- cleanse ---------------------------------------------------------------

struct CleanseArgs {
  std::string input;
  std::string out;
  std::string plot;
  Index downsample = 1;
  CleanseConfig config;
  std::optional<double> sigma2;
  std::string denominator = "retained";
  double tol = 1e-8;
  long max_iter = 10000;
};

int cmd_cleanse(CleanseArgs a, std::ostream& out, std::ostream& err) {
  LoadCurve curve = load_csv(a.input);
  for (Index row : curve.negative_rows)
    err << "warning: " << a.input << ": line " << row + 2 << ": negative reading retained\n";
  if (a.downsample != 1) curve = downsample(curve, a.downsample);
  a.config.sigma_sq = a.sigma2;
  a.config.pipeline.denominator = parse_denominator(a.denominator);
  a.config.pipeline.lasso = lasso_options(a.tol, a.max_iter);
  const CleanseReport report = cleanse(curve, a.config);
  const std::string text = report_json(curve, report, a.config);
  if (!a.plot.empty()) {
    std::ofstream csv = open_output(a.plot);
    write_plot_csv(curve, report, csv);
    finish_output(csv, a.plot);
  }
  if (a.out.empty()) {
    out << text << '\n';
    return 0;
  }
  write_text(a.out, text + "\n");
  out << "cleansed " << curve.size() << " samples: sigma_hat_sq=" << report.sigma_hat_sq << " mu=" << report.chosen_mu
      << " lambda=" << report.chosen_lambda << '\n'
      << "outliers: " << report.pre_refinement_count << " before refinement, " << report.outlier_indices.size()
      << " after\n"
      << "wrote " << a.out << (a.plot.empty() ? "" : " and " + a.plot) << '\n';
  return 0;
}

void add_grid_options(CLI::App* cmd, Index& g_mu, Index& g_lambda, double& mu_min, double& mu_max, double& epsilon) {
  cmd->add_option("--g-mu", g_mu, "number of smoothing levels")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--g-lambda", g_lambda, "lambdas per smoothing level")
      ->check(CLI::Range(Index{2}, std::numeric_limits<Index>::max()))
      ->capture_default_str();
  cmd->add_option("--mu-min", mu_min, "smallest mu")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--mu-max", mu_max, "largest mu")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--epsilon", epsilon, "lambda_min / lambda_max")
      ->check(CLI::Range(std::numeric_limits<double>::min(), 1.0))
      ->capture_default_str();
}

void add_solver_options(CLI::App* cmd, double& tol, long& max_iter) {
  cmd->add_option("--tol", tol, "coordinate-descent tolerance on the largest coordinate change")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--max-iter", max_iter, "coordinate-descent sweep limit")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Outlier-robust nonparametric regression: simulate data, fit, trace robustification paths, "
               "cleanse load curves.",
               "rnr"};
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file of flag defaults, one object per subcommand; flags override it");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  SimulateArgs sim;
  CLI::App* simulate = app.add_subcommand("simulate", "generate a synthetic dataset and its ground truth");
  simulate->add_option("kind", sim.kind, "gaussian-mixture | sinc | load-curve")
      ->required()
      ->check(CLI::IsMember({"gaussian-mixture", "sinc", "load-curve"}));
  simulate->add_option("--n", sim.n, "samples (default 200 / 50 / 500)")->check(CLI::PositiveNumber);
  simulate->add_option("--outliers", sim.outliers, "planted outliers or spikes (default 20 / 3 / 10)")
      ->check(CLI::NonNegativeNumber);
  simulate->add_option("--noise", sim.noise, "noise variance (default 1e-3 / 1e-4 / 0.25)")
      ->check(CLI::NonNegativeNumber);
  simulate->add_option("--spike-scale", sim.spike_scale, "load-curve spike size in noise standard deviations")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  simulate->add_option("--seed", sim.seed, "random seed")->capture_default_str();
  simulate->add_option("--out", sim.out, "dataset CSV (default <kind>_seed<seed>.csv)");
  simulate->add_option("--truth", sim.truth, "ground-truth JSON (default: the CSV path with .truth.json)");

  FitArgs fit;
  CLI::App* fit_cmd = app.add_subcommand("fit", "robust fit at one (mu, lambda), optionally refined");
  fit_cmd->add_option("--data", fit.data, "CSV with header x,y or x1,x2,y or timestamp,kwh")->required();
  add_model_options(fit_cmd, fit.model);
  fit_cmd->add_option("--mu", fit.mu, "smoothing parameter")->required()->check(CLI::NonNegativeNumber);
  fit_cmd->add_option("--lambda", fit.lambda, "outlier sparsity weight")->required()->check(CLI::NonNegativeNumber);
  fit_cmd->add_option("--refine-iters", fit.refine_iters, "reweighted refinement iterations (0: l1 fit only)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  fit_cmd->add_option("--delta", fit.delta, "refinement weight offset")->check(CLI::PositiveNumber)->capture_default_str();
  add_solver_options(fit_cmd, fit.tol, fit.max_iter);
  fit_cmd->add_option("--threshold", fit.threshold, "|o_i| above this counts as an outlier")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  fit_cmd->add_option("--out", fit.out, "report JSON (default: stdout)");
  fit_cmd->add_option("--eval-grid", fit.eval_grid, "CSV of the fitted function on a uniform grid");
  fit_cmd->add_option("--eval-points", fit.eval_points, "grid points (per axis in 2-D; default 201 / 31)")
      ->check(CLI::PositiveNumber);
  fit_cmd->add_option("--truth", fit.truth, "ground-truth JSON from simulate; adds recovery and error figures");
  fit_cmd->add_option("--test-seed", fit.test_seed, "seed of the test noise for the generalization error")
      ->capture_default_str();

  PathArgs path;
  CLI::App* path_cmd = app.add_subcommand("path", "robustification paths over a (mu, lambda) grid");
  path_cmd->add_option("--data", path.data, "CSV with header x,y or x1,x2,y or timestamp,kwh")->required();
  add_model_options(path_cmd, path.model);
  add_grid_options(path_cmd, path.g_mu, path.g_lambda, path.mu_min, path.mu_max, path.epsilon);
  add_solver_options(path_cmd, path.tol, path.max_iter);
  path_cmd->add_option("--threads", path.threads, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  path_cmd->add_option("--out", path.out, "path CSV");
  path_cmd->add_flag("--sparse", path.sparse, "write only nonzero outlier entries");
  path_cmd->add_option("--sigma2", path.sigma2, "noise variance; selects the cell whose variance is closest");
  path_cmd->add_option("--denominator", path.denominator, "retained | outlier-count")
      ->check(CLI::IsMember({"retained", "outlier-count"}))
      ->capture_default_str();
  path_cmd->add_option("--replay", path.replay, "read paths from this file instead of solving (needs --sigma2)");

  CleanseArgs cl;
  PipelineOptions& p = cl.config.pipeline;
  CLI::App* cleanse_cmd = app.add_subcommand("cleanse", "detect outliers in a load curve and cleanse it");
  cleanse_cmd->add_option("--input", cl.input, "CSV with header timestamp,kwh")->required();
  cleanse_cmd->add_option("--out", cl.out, "report JSON (default: stdout)");
  cleanse_cmd->add_option("--plot", cl.plot, "plot CSV t,y_raw,y_cleansed,is_outlier");
  cleanse_cmd->add_option("--downsample", cl.downsample, "keep every k-th sample")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  add_grid_options(cleanse_cmd, p.g_mu, p.g_lambda, p.mu_min, p.mu_max, p.epsilon);
  cleanse_cmd->add_option("--refine-iters", p.refine_iters, "reweighted refinement iterations")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cleanse_cmd->add_option("--delta", p.delta, "refinement weight offset")->check(CLI::PositiveNumber)->capture_default_str();
  cleanse_cmd->add_option("--subset-fraction", cl.config.subset_fraction, "leading fraction used for the noise pre-fit")
      ->check(CLI::Range(std::numeric_limits<double>::min(), 1.0))
      ->capture_default_str();
  cleanse_cmd->add_option("--sigma2", cl.sigma2, "known noise variance (skips the pre-fit)")->check(CLI::PositiveNumber);
  cleanse_cmd->add_option("--denominator", cl.denominator, "retained | outlier-count")
      ->check(CLI::IsMember({"retained", "outlier-count"}))
      ->capture_default_str();
  add_solver_options(cleanse_cmd, cl.tol, cl.max_iter);
  cleanse_cmd->add_option("--threads", p.threads, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  try {
    if (*simulate) return cmd_simulate(sim, out);
    if (*fit_cmd) return cmd_fit(fit, out);
    if (*path_cmd) return cmd_path(path, out);
    return cmd_cleanse(cl, out, err);
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace rnr
