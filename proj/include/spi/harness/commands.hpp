#pragma once

// Subcommand bodies shared by the CLI and the tests. Each returns the CSV
// text it would write plus a one-line summary.

#include <string>
#include <vector>

#include "spi/diagnostics.hpp"
#include "spi/harness/config.hpp"
#include "spi/harness/output.hpp"
#include "spi/modified_equations.hpp"

namespace spi::harness {

struct CommandOutput {
  std::string csv;
  std::string summary;
};

/// f_alpha values at each base point. Columns: point, a0..am, component, value.
inline CommandOutput modified_coeffs(const PoissonSystem& sys, const Stepper& st,
                                     const std::vector<std::vector<double>>& points, int max_weight) {
  if (points.empty()) throw std::invalid_argument("need at least one --point");
  CsvRow header{"point"};
  for (std::size_t r = 0; r <= sys.noise_count(); ++r) header.push_back("a" + std::to_string(r));
  header.push_back("component");
  header.push_back("value");
  std::vector<CsvRow> rows;
  std::string summary;
  for (std::size_t p = 0; p < points.size(); ++p) {
    if (points[p].size() != sys.dimension())
      throw std::invalid_argument("point " + std::to_string(p) + " needs " + std::to_string(sys.dimension()) +
                                  " coordinates");
    if (!sys.in_domain(points[p])) throw std::invalid_argument("point " + std::to_string(p) + " is outside the domain");
    const auto f = modified_coefficients_matching(method_coefficients(st, sys, points[p], max_weight), sys);
    for (const auto& a : f.table().indices()) {
      const auto v = f.table().value(a);
      for (std::size_t i = 0; i < v.size(); ++i) {
        CsvRow row{std::to_string(p)};
        for (int e : a.entries()) row.push_back(std::to_string(e));
        row.push_back(std::to_string(i + 1));
        row.push_back(format_number(v[i]));
        rows.push_back(std::move(row));
      }
    }
    if (max_weight >= 4) {
      const auto eo = effective_order(f);
      summary += "point " + std::to_string(p) + ": p = " + std::to_string(eo.p) + (eo.all_vanish ? " (all vanish)" : "") + "\n";
    }
  }
  return {to_csv(header, rows), summary};
}

struct PoissonCheckResult {
  double max_residual = 0.0;
  std::size_t worst_sample = 0;
  std::vector<double> residuals;
};

inline PoissonCheckResult poisson_check(const PoissonSystem& sys, const Stepper& st, std::size_t n_samples,
                                        double h_max, std::uint64_t seed) {
  check_compatible(st, sys);
  if (n_samples < 1) throw std::invalid_argument("need at least one sample");
  if (!(h_max > 0.0)) throw std::invalid_argument("h_max must be positive");
  PoissonCheckResult res;
  const auto samples = residual_samples(sys, n_samples, h_max, seed);
  res.residuals.resize(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    res.residuals[i] = poisson_map_residual(st, sys, samples[i].y, samples[i].h, samples[i].dw);
  });
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (!(res.residuals[i] <= res.max_residual)) {
      res.max_residual = res.residuals[i];
      res.worst_sample = i;
    }
  return res;
}

inline CommandOutput poisson_check_output(const PoissonSystem& sys, const Stepper& st, std::size_t n_samples,
                                          double h_max, std::uint64_t seed) {
  const auto res = poisson_check(sys, st, n_samples, h_max, seed);
  const auto samples = residual_samples(sys, n_samples, h_max, seed);
  std::vector<CsvRow> rows;
  for (std::size_t i = 0; i < samples.size(); ++i)
    rows.push_back({std::to_string(i), format_number(samples[i].h), format_number(res.residuals[i])});
  return {to_csv({"sample", "h", "residual"}, rows),
          "max_residual " + format_number(res.max_residual) + " samples " + std::to_string(n_samples) + " h_max " +
              short_number(h_max) + " worst_sample " + std::to_string(res.worst_sample) + "\n"};
}

/// Drift-scaling study on the config's system, stepper, y0, T and h list.
/// Columns: h, max_drift, n_paths.
inline CommandOutput drift_study(const ExperimentConfig& c, HbarScaling scaling) {
  const PoissonSystem sys = make_builtin(c.system, c.sigma);
  const Stepper st = make_stepper(c.stepper);
  DriftScalingOptions opt;
  opt.n_paths = c.n_paths;
  opt.seed = c.seed;
  opt.truncation = c.truncation;
  opt.scaling = scaling;
  const auto res = drift_scaling_exponent(sys, st, c.y0, c.T, c.h, opt);
  std::vector<CsvRow> rows;
  for (std::size_t k = 0; k < res.h.size(); ++k)
    rows.push_back({format_number(res.h[k]), format_number(res.max_drift[k]), std::to_string(res.n_paths)});
  std::string summary = "exponent " + format_number(res.exponent) + " paths " + std::to_string(res.n_paths) +
                        " failed " + std::to_string(res.failed_paths);
  try {
    const auto f = modified_coefficients_matching(method_coefficients(st, sys, c.y0, 6), sys);
    const auto eo = effective_order(f);
    summary += " p " + std::to_string(eo.p) + " p/2 " + short_number(eo.p / 2.0);
  } catch (const std::exception&) {
  }
  return {to_csv({"h", "max_drift", "n_paths"}, rows), summary + "\n"};
}

/// Strong self-convergence study. Columns: h, mean_error, half_width, n_paths.
inline CommandOutput order_study(const ExperimentConfig& c, std::size_t refinement = 4) {
  const PoissonSystem sys = make_builtin(c.system, c.sigma);
  const Stepper st = make_stepper(c.stepper);
  OrderOptions opt;
  opt.n_paths = c.n_paths;
  opt.seed = c.seed;
  opt.refinement = refinement;
  const auto est = strong_order_estimate(sys, st, c.y0, c.T, c.h, opt);
  std::vector<CsvRow> rows;
  for (std::size_t k = 0; k < est.h.size(); ++k)
    rows.push_back({format_number(est.h[k]), format_number(est.mean_error[k]), format_number(est.half_width[k]),
                    std::to_string(est.n_paths)});
  return {to_csv({"h", "mean_error", "half_width", "n_paths"}, rows), "slope " + format_number(est.slope) + "\n"};
}

}  // namespace spi::harness
