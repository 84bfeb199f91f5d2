#include "rnr/tuning.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <ostream>
#include <set>
#include <sstream>
#include <string>

#include "rnr/error.hpp"

namespace rnr {

TuningGrid build_grid(double mu_min, double mu_max, Index g_mu, Index g_lambda, double epsilon_ratio) {
  if (!(mu_min > 0.0 && mu_max > mu_min)) throw InputError("build_grid: need 0 < mu_min < mu_max");
  if (g_mu < 2 || g_lambda < 2) throw InputError("build_grid: grid sizes must be at least 2");
  if (!(epsilon_ratio > 0.0 && epsilon_ratio < 1.0)) throw InputError("build_grid: epsilon ratio must lie in (0, 1)");
  TuningGrid grid;
  grid.g_lambda = g_lambda;
  grid.epsilon_ratio = epsilon_ratio;
  grid.mu_values.resize(g_mu);
  const double log_span = std::log(mu_max / mu_min);
  for (Index i = 0; i < g_mu; ++i)
    grid.mu_values(i) = mu_min * std::exp(log_span * static_cast<double>(i) / static_cast<double>(g_mu - 1));
  grid.mu_values(0) = mu_min;
  grid.mu_values(g_mu - 1) = mu_max;
  return grid;
}

CellStatistic cell_statistic(const Vector& residuals, const Vector& outliers, VarianceDenominator denominator) {
  if (residuals.size() != outliers.size()) throw InputError("cell_statistic: length mismatch");
  CellStatistic cell;
  double sum = 0.0;
  for (Index u = 0; u < residuals.size(); ++u) {
    if (outliers(u) != 0.0) {
      ++cell.outlier_count;
    } else {
      sum += residuals(u) * residuals(u);
    }
  }
  const Index retained = residuals.size() - cell.outlier_count;
  const Index divisor = denominator == VarianceDenominator::retained ? retained : cell.outlier_count;
  cell.valid = retained > 0 && divisor > 0;
  cell.variance = cell.valid ? sum / static_cast<double>(divisor) : 0.0;
  return cell;
}

VarianceSurface::VarianceSurface(Index g_mu, Index g_lambda)
    : variance(Matrix::Zero(g_mu, g_lambda)),
      outlier_counts(Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic>::Zero(g_mu, g_lambda)),
      valid(Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(g_mu, g_lambda, false)) {}

void VarianceSurface::set(Index i, Index j, const CellStatistic& cell) {
  variance(i, j) = cell.variance;
  outlier_counts(i, j) = cell.outlier_count;
  valid(i, j) = cell.valid;
}

VarianceSurface variance_surface(const std::vector<std::vector<RobustFit>>& fits, VarianceDenominator denominator) {
  if (fits.empty() || fits.front().empty()) throw InputError("variance_surface: no fits");
  const auto g_mu = static_cast<Index>(fits.size());
  const auto g_lambda = static_cast<Index>(fits.front().size());
  VarianceSurface surface(g_mu, g_lambda);
  for (Index i = 0; i < g_mu; ++i) {
    const auto& row = fits[static_cast<std::size_t>(i)];
    if (static_cast<Index>(row.size()) != g_lambda) throw InputError("variance_surface: ragged fit grid");
    for (Index j = 0; j < g_lambda; ++j) {
      const RobustFit& fit = row[static_cast<std::size_t>(j)];
      surface.set(i, j, cell_statistic(fit.residuals, fit.outliers, denominator));
    }
  }
  return surface;
}

GridCell select_avd(const VarianceSurface& surface, double sigma_sq) {
  if (!(sigma_sq > 0.0)) throw InputError("select_avd: sigma^2 must be positive");
  bool found = false;
  GridCell best;
  double best_dev = 0.0;
  for (Index i = 0; i < surface.variance.rows(); ++i) {
    for (Index j = 0; j < surface.variance.cols(); ++j) {
      if (!surface.valid(i, j)) continue;
      const double dev = std::abs(surface.variance(i, j) - sigma_sq);
      bool take = !found || dev < best_dev;
      if (found && dev == best_dev) {
        // lambda grids decrease with j, so a smaller j is a larger lambda
        take = j < best.lambda_index || (j == best.lambda_index && i > best.mu_index);
      }
      if (take) {
        best = {i, j};
        best_dev = dev;
        found = true;
      }
    }
  }
  if (!found) throw NumericalError("select_avd: every cell of the variance surface is invalid");
  return best;
}

double median(std::vector<double> values) {
  if (values.empty()) throw InputError("median of an empty list");
  const std::size_t n = values.size();
  const std::size_t mid = n / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return (lower + upper) / 2.0;
}

double mad_scale(const Vector& residuals) {
  if (residuals.size() < 2) throw InputError("mad_scale: need at least 2 residuals");
  std::vector<double> r(residuals.data(), residuals.data() + residuals.size());
  const double center = median(r);
  for (double& v : r) v = std::abs(v - center);
  return 1.4826 * median(std::move(r));
}

std::vector<Index> fold_bounds(Index count, Index folds) {
  if (folds < 2) throw InputError("cross-validation needs at least 2 folds");
  if (count < folds) throw InputError("cross-validation: fewer retained points than folds");
  std::vector<Index> bounds{0};
  const Index base = count / folds;
  const Index extra = count % folds;
  for (Index f = 0; f < folds; ++f) bounds.push_back(bounds.back() + base + (f < extra ? 1 : 0));
  return bounds;
}

namespace {

double cv_error(const SmootherFamily& smoother, const Vector& y, const std::vector<Index>& support, double mu,
                Index folds, std::uint64_t seed) {
  std::vector<Index> retained;
  std::size_t s = 0;
  for (Index i = 0; i < y.size(); ++i) {
    if (s < support.size() && support[s] == i) {
      ++s;
      continue;
    }
    retained.push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(retained.begin(), retained.end(), rng);
  const auto bounds = fold_bounds(static_cast<Index>(retained.size()), folds);
  double total = 0.0;
  for (Index f = 0; f < folds; ++f) {
    std::vector<Index> train;
    std::vector<Index> test;
    for (Index p = 0; p < static_cast<Index>(retained.size()); ++p) {
      auto& dst = (p >= bounds[static_cast<std::size_t>(f)] && p < bounds[static_cast<std::size_t>(f + 1)]) ? test : train;
      dst.push_back(retained[static_cast<std::size_t>(p)]);
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    Vector target(static_cast<Index>(train.size()));
    for (std::size_t a = 0; a < train.size(); ++a) target(static_cast<Index>(a)) = y(train[a]);
    const Vector predicted = smoother.holdout_predict(train, target, mu, test);
    for (std::size_t a = 0; a < test.size(); ++a) {
      const double e = y(test[a]) - predicted(static_cast<Index>(a));
      total += e * e;
    }
  }
  return total / static_cast<double>(retained.size());
}

}  // namespace

KnownCountSelection select_known_count(const TuningGrid& grid, const Vector& y, Index n_outliers, Index folds,
                                       const SmootherFamily& smoother, std::uint64_t seed) {
  if (n_outliers < 0) throw InputError("select_known_count: outlier count must be nonnegative");
  if (folds < 2) throw InputError("select_known_count: need at least 2 folds");
  if (static_cast<Index>(grid.paths.size()) != grid.g_mu())
    throw InputError("select_known_count: grid has no robustification paths");

  std::set<Index> attained;
  bool found = false;
  KnownCountSelection best;
  for (Index i = 0; i < grid.g_mu(); ++i) {
    const auto& path = grid.paths[static_cast<std::size_t>(i)];
    // distinct supports of the requested size, each mapped to the smallest lambda attaining it
    std::vector<std::pair<std::vector<Index>, Index>> candidates;
    for (Index j = 0; j < path.size(); ++j) {
      const auto& support = path.supports[static_cast<std::size_t>(j)];
      attained.insert(static_cast<Index>(support.size()));
      if (static_cast<Index>(support.size()) != n_outliers) continue;
      auto it = std::find_if(candidates.begin(), candidates.end(), [&](const auto& c) { return c.first == support; });
      if (it == candidates.end()) {
        candidates.emplace_back(support, j);
      } else {
        it->second = j;
      }
    }
    for (const auto& [support, j] : candidates) {
      const double err = cv_error(smoother, y, support, grid.mu_values(i), folds, seed);
      if (!found || err < best.cv_error) {
        best = {{i, j}, err};
        found = true;
      }
    }
  }
  if (!found) {
    std::string sizes;
    for (Index s : attained) sizes += (sizes.empty() ? "" : ", ") + std::to_string(s);
    throw InputError("select_known_count: no lambda attains support size " + std::to_string(n_outliers) +
                     "; attained sizes: {" + sizes + "}");
  }
  return best;
}

namespace {

// shortest representation that parses back to the same double
std::string fmt_exact(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// residuals y - H (y - o) = (I - H) y - (I - H) o + o, touching only the support columns
void fill_surface_row(const DesignOperator& design, const Vector& y, const RobustificationPath<double>& path,
                      VarianceDenominator denominator, Index row, VarianceSurface& surface) {
  const Vector base = design.residual_operator * y;
  for (Index j = 0; j < path.size(); ++j) {
    Vector residuals = base;
    const Vector o = path.solutions.row(j).transpose();
    for (Index u : path.supports[static_cast<std::size_t>(j)]) {
      residuals.noalias() -= design.residual_operator.col(u) * o(u);
      residuals(u) += o(u);
    }
    surface.set(row, j, cell_statistic(residuals, o, denominator));
  }
}

}  // namespace

VarianceSurface grid_search(const SmootherFamily& smoother, const Vector& y, TuningGrid& grid,
                            const GridSearchOptions& options) {
  if (y.size() != smoother.size()) throw InputError("grid_search: response length does not match the smoother");
  const Index g_mu = grid.g_mu();
  VarianceSurface surface(g_mu, grid.g_lambda);
  grid.paths.assign(static_cast<std::size_t>(g_mu), {});
  parallel_for(g_mu, options.threads, [&](Index i) {
    const DesignOperator design = smoother.design(grid.mu_values(i));
    auto path = robustification_path(design, y, grid.g_lambda, grid.epsilon_ratio, options.lasso);
    fill_surface_row(design, y, path, options.denominator, i, surface);
    grid.paths[static_cast<std::size_t>(i)] = std::move(path);
  });
  return surface;
}

VarianceSurface surface_from_paths(const SmootherFamily& smoother, const Vector& y, const TuningGrid& grid,
                                   VarianceDenominator denominator, int threads) {
  if (y.size() != smoother.size()) throw InputError("surface_from_paths: response length does not match the smoother");
  if (static_cast<Index>(grid.paths.size()) != grid.g_mu()) throw InputError("surface_from_paths: grid has no paths");
  VarianceSurface surface(grid.g_mu(), grid.g_lambda);
  parallel_for(grid.g_mu(), threads, [&](Index i) {
    const auto& path = grid.paths[static_cast<std::size_t>(i)];
    if (path.size() != grid.g_lambda || path.solutions.cols() != y.size())
      throw InputError("surface_from_paths: path " + std::to_string(i) + " does not match the grid or data");
    fill_surface_row(smoother.design(grid.mu_values(i)), y, path, denominator, i, surface);
  });
  return surface;
}

void write_path_csv(const TuningGrid& grid, Index n, std::ostream& out, bool sparse) {
  if (static_cast<Index>(grid.paths.size()) != grid.g_mu()) throw InputError("write_path_csv: grid has no paths");
  for (const auto& path : grid.paths)
    if (path.solutions.cols() != n) throw InputError("write_path_csv: path width does not match n");
  out << "# g_mu=" << grid.g_mu() << ",g_lambda=" << grid.g_lambda << ",epsilon=" << fmt_exact(grid.epsilon_ratio)
      << ",n=" << n << ",format=" << (sparse ? "sparse" : "dense") << '\n';
  out << "mu_index,lambda_index,mu,lambda,coordinate,o_value\n";
  for (Index i = 0; i < grid.g_mu(); ++i) {
    const auto& path = grid.paths[static_cast<std::size_t>(i)];
    const std::string mu = fmt_exact(grid.mu_values(i));
    for (Index j = 0; j < path.size(); ++j) {
      const std::string prefix = std::to_string(i) + ',' + std::to_string(j) + ',' + mu + ',' +
                                 fmt_exact(path.lambda_grid(j)) + ',';
      bool wrote = false;
      for (Index u = 0; u < n; ++u) {
        const double o = path.solutions(j, u);
        if (sparse && o == 0.0) continue;
        out << prefix << u << ',' << fmt_exact(o) << '\n';
        wrote = true;
      }
      // an empty support still needs a row so the cell's lambda is recorded
      if (!wrote) out << prefix << "0,0\n";
    }
  }
}

TuningGrid read_path_csv(std::istream& in) {
  std::string line;
  Index line_no = 1;
  auto fail = [&](const std::string& what) -> InputError {
    return InputError("path file line " + std::to_string(line_no) + ": " + what);
  };
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0) throw fail("expected a '# g_mu=...' header");
  std::map<std::string, std::string> header;
  {
    std::stringstream fields(line.substr(2));
    std::string field;
    while (std::getline(fields, field, ',')) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) throw fail("malformed header field '" + field + "'");
      header[field.substr(0, eq)] = field.substr(eq + 1);
    }
  }
  Index g_mu = 0, g_lambda = 0, n = 0;
  TuningGrid grid;
  try {
    g_mu = std::stol(header.at("g_mu"));
    g_lambda = std::stol(header.at("g_lambda"));
    n = std::stol(header.at("n"));
    grid.epsilon_ratio = std::stod(header.at("epsilon"));
  } catch (const std::exception&) {
    throw fail("header needs numeric g_mu, g_lambda, epsilon and n");
  }
  if (g_mu < 1 || g_lambda < 2 || n < 1) throw fail("grid sizes out of range");
  grid.g_lambda = g_lambda;
  grid.mu_values = Vector::Constant(g_mu, std::numeric_limits<double>::quiet_NaN());
  grid.paths.assign(static_cast<std::size_t>(g_mu), {});
  for (auto& path : grid.paths) {
    path.lambda_grid = Vector::Constant(g_lambda, std::numeric_limits<double>::quiet_NaN());
    path.solutions = Matrix::Zero(g_lambda, n);
    path.supports.assign(static_cast<std::size_t>(g_lambda), {});
  }
  ++line_no;
  if (!std::getline(in, line) || line != "mu_index,lambda_index,mu,lambda,coordinate,o_value")
    throw fail("expected the column header");
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell[6];
    for (auto& c : cell)
      if (!std::getline(row, c, ',')) throw fail("expected 6 fields");
    Index i = 0, j = 0, u = 0;
    double mu = 0.0, lambda = 0.0, o = 0.0;
    try {
      std::size_t used = 0;
      i = std::stol(cell[0]);
      j = std::stol(cell[1]);
      mu = std::stod(cell[2]);
      lambda = std::stod(cell[3]);
      u = std::stol(cell[4]);
      o = std::stod(cell[5], &used);
      if (used != cell[5].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw fail("non-numeric field");
    }
    if (i < 0 || i >= g_mu || j < 0 || j >= g_lambda || u < 0 || u >= n) throw fail("index out of range");
    auto& path = grid.paths[static_cast<std::size_t>(i)];
    if (!std::isnan(grid.mu_values(i)) && grid.mu_values(i) != mu) throw fail("inconsistent mu for index");
    if (!std::isnan(path.lambda_grid(j)) && path.lambda_grid(j) != lambda) throw fail("inconsistent lambda for index");
    grid.mu_values(i) = mu;
    path.mu = mu;
    path.lambda_grid(j) = lambda;
    path.solutions(j, u) = o;
  }
  for (Index i = 0; i < g_mu; ++i) {
    auto& path = grid.paths[static_cast<std::size_t>(i)];
    if (std::isnan(grid.mu_values(i)) || path.lambda_grid.array().isNaN().any())
      throw InputError("path file: some grid cells have no rows");
    for (Index j = 0; j < g_lambda; ++j)
      for (Index u = 0; u < n; ++u)
        if (path.solutions(j, u) != 0.0) path.supports[static_cast<std::size_t>(j)].push_back(u);
  }
  return grid;
}

PipelineResult avd_pipeline(const SmootherFamily& smoother, const Vector& y, double sigma_sq,
                            const PipelineOptions& options) {
  if (options.refine_iters < 0) throw InputError("refinement iteration count must be nonnegative");
  if (!(options.delta > 0.0)) throw InputError("delta must be positive");
  PipelineResult out;
  out.grid = build_grid(options.mu_min, options.mu_max, options.g_mu, options.g_lambda, options.epsilon);
  GridSearchOptions search;
  search.lasso = options.lasso;
  search.denominator = options.denominator;
  search.threads = options.threads;
  out.surface = grid_search(smoother, y, out.grid, search);
  out.cell = select_avd(out.surface, sigma_sq);
  const auto& path = out.grid.paths[static_cast<std::size_t>(out.cell.mu_index)];
  out.mu = out.grid.mu_values(out.cell.mu_index);
  out.lambda = path.lambda_grid(out.cell.lambda_index);
  const DesignOperator design = smoother.design(out.mu);
  const Vector o = path.solutions.row(out.cell.lambda_index).transpose();
  out.l1_fit = fit_from_outliers(design, y, o, out.lambda);
  out.refined = out.l1_fit;
  if (options.refine_iters > 0) {
    out.refined = reweighted_refine(design, y, out.lambda, options.delta, o, options.refine_iters, options.lasso);
  }
  return out;
}

}  // namespace rnr
