#pragma once

// Experiment orchestration: run a config, write CSV/SVG files and a manifest.

#include <algorithm>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "spi/diagnostics.hpp"
#include "spi/harness/config.hpp"
#include "spi/harness/output.hpp"

namespace spi::harness {

/// One line of summary.csv.
struct SeriesSummary {
  double h = 0.0;
  std::size_t trajectory = 0;
  std::string functional;
  double max_abs = 0.0;
  double slope = 0.0;
};

struct OutputBundle {
  std::filesystem::path directory;
  std::vector<std::filesystem::path> csv_paths;
  std::vector<std::filesystem::path> svg_paths;
  std::filesystem::path manifest_path;
  json manifest;
  std::vector<SeriesSummary> summaries;

  /// Summary of a series, or nullptr.
  const SeriesSummary* find(double h, const std::string& functional, std::size_t trajectory = 0) const {
    for (const auto& s : summaries)
      if (s.h == h && s.functional == functional && s.trajectory == trajectory) return &s;
    return nullptr;
  }
};

/// Rows written per series are capped near this many.
inline constexpr std::size_t max_csv_rows = 200000;

inline std::size_t csv_stride(std::size_t n_steps) { return std::max<std::size_t>(1, (n_steps + max_csv_rows - 1) / max_csv_rows); }

/// Step indices exported at the given stride; the final step is always kept.
inline std::vector<std::size_t> export_indices(std::size_t n_steps, std::size_t stride) {
  std::vector<std::size_t> idx;
  for (std::size_t n = 0; n <= n_steps; n += stride) idx.push_back(n);
  if (idx.back() != n_steps) idx.push_back(n_steps);
  return idx;
}

/// Exported series for a requested track name.
inline std::vector<std::string> exported_functionals(const std::string& track, const PoissonSystem& sys) {
  if (track == "hamiltonian") return {"hamiltonian"};
  if (track == "hbar") return {"hbar_cumulative", "hbar_step"};
  if (track == "hbar_fixed") return {"hbar_fixed"};
  std::vector<std::string> out;
  for (std::size_t k = 0; k < sys.casimir_count(); ++k) out.push_back("casimir_" + std::to_string(k));
  return out;
}

/// Series drawn in the SVG for a requested track.
inline std::vector<std::string> plotted_functionals(const std::string& track, const PoissonSystem& sys) {
  if (track == "hbar") return {"hbar_cumulative"};
  return exported_functionals(track, sys);
}

inline std::string plot_ylabel(const std::string& functional) {
  if (functional == "hamiltonian") return "H(y_n) - H(y_0)";
  if (functional == "hbar_cumulative") return "cumulative Hbar residual";
  if (functional == "hbar_fixed") return "Hbar_0(y_n) - Hbar_0(y_0)";
  return functional + " deviation";
}

namespace detail {

inline std::string relative(const std::filesystem::path& p, const std::filesystem::path& base) {
  return p.lexically_relative(base).generic_string();
}

}  // namespace detail

/// Integrates every (h, path) cell of the config and writes
/// states.csv, drift_h<h>.csv, summary.csv, one SVG per (h, series) for
/// trajectory 0 and manifest.json.
inline OutputBundle run(const ExperimentConfig& config) {
  validate(config);
  const PoissonSystem sys = make_builtin(config.system, config.sigma);
  const Stepper st = make_stepper(config.stepper);
  namespace fs = std::filesystem;
  OutputBundle out;
  out.directory = fs::path(config.output_dir);
  fs::create_directories(out.directory);

  TrackRequest req;
  for (const auto& t : config.tracks) {
    req.hamiltonian = req.hamiltonian || t == "hamiltonian";
    req.casimirs = req.casimirs || t == "casimirs";
    req.hbar = req.hbar || t == "hbar" || t == "hbar_fixed";
  }
  std::vector<std::string> functionals, plotted;
  for (const auto& t : config.tracks) {
    for (auto& f : exported_functionals(t, sys))
      if (std::find(functionals.begin(), functionals.end(), f) == functionals.end()) functionals.push_back(f);
    for (auto& f : plotted_functionals(t, sys))
      if (std::find(plotted.begin(), plotted.end(), f) == plotted.end()) plotted.push_back(f);
  }

  std::ostringstream states;
  CsvRow header{"trajectory_id", "h", "step", "t"};
  for (std::size_t i = 0; i < sys.dimension(); ++i) header.push_back("y" + std::to_string(i + 1));
  write_csv_row(states, header);

  std::map<std::string, std::string> files;
  std::vector<CsvRow> summary_rows;
  for (double h : config.h) {
    const std::size_t n_steps = config.steps_for(h);
    const std::size_t stride = csv_stride(n_steps);
    const auto rows = export_indices(n_steps, stride);
    std::vector<Trajectory> paths(config.n_paths);
    parallel_for(config.n_paths, [&](std::size_t p) {
      auto inc = sample_increments({config.seed, p}, h, sys.noise_count(), n_steps);
      if (config.truncation.enabled) inc = truncate_increments(inc, config.truncation);
      paths[p] = integrate(sys, st, config.y0, h, n_steps, inc, req);
    });
    std::ostringstream drift;
    if (!functionals.empty()) write_csv_row(drift, {"t", "value", "trajectory_id", "functional"});
    for (std::size_t p = 0; p < config.n_paths; ++p) {
      const Trajectory& tr = paths[p];
      for (std::size_t n : rows) {
        CsvRow row{std::to_string(p), format_number(h), std::to_string(n), format_number(tr.time(n))};
        for (double v : tr.state(n)) row.push_back(format_number(v));
        write_csv_row(states, row);
      }
      for (const auto& f : functionals) {
        const DriftSeries s = functional_drift(tr, f);
        for (std::size_t n : rows)
          write_csv_row(drift, {format_number(s.t[n]), format_number(s.values[n]), std::to_string(p), f});
        SeriesSummary sum{h, p, f, max_abs_deviation(s), envelope_slope(s)};
        summary_rows.push_back({format_number(h), std::to_string(p), f, format_number(sum.max_abs), format_number(sum.slope)});
        out.summaries.push_back(sum);
        if (p == 0 && std::find(plotted.begin(), plotted.end(), f) != plotted.end()) {
          const fs::path svg = out.directory / ("plot_" + f + "_h" + short_number(h) + ".svg");
          const std::string title = config.system + ", " + config.stepper + ", h = " + short_number(h);
          const std::string doc = svg_line_plot(s.t, s.values, title, "t", plot_ylabel(f));
          write_file(svg, doc);
          files[detail::relative(svg, out.directory)] = git_blob_hash(doc);
          out.svg_paths.push_back(svg);
        }
      }
    }
    if (!functionals.empty()) {
      const fs::path csv = out.directory / ("drift_h" + short_number(h) + ".csv");
      write_file(csv, drift.str());
      files[detail::relative(csv, out.directory)] = git_blob_hash(drift.str());
      out.csv_paths.push_back(csv);
    }
  }
  const fs::path states_csv = out.directory / "states.csv";
  write_file(states_csv, states.str());
  files["states.csv"] = git_blob_hash(states.str());
  out.csv_paths.insert(out.csv_paths.begin(), states_csv);
  if (!summary_rows.empty()) {
    const std::string text = to_csv({"h", "trajectory_id", "functional", "max_abs_deviation", "envelope_slope"}, summary_rows);
    const fs::path csv = out.directory / "summary.csv";
    write_file(csv, text);
    files["summary.csv"] = git_blob_hash(text);
    out.csv_paths.push_back(csv);
  }

  json cfg = to_json(config);
  cfg.erase("output_dir");
  std::string digest_input = cfg.dump() + "\n";
  for (const auto& [name, hash] : files) digest_input += name + " " + hash + "\n";
  out.manifest = {{"config", cfg},
                  {"seed", config.seed},
                  {"csv_row_stride", json::object()},
                  {"files", files},
                  {"hash", git_blob_hash(digest_input)}};
  for (double h : config.h) out.manifest["csv_row_stride"][short_number(h)] = csv_stride(config.steps_for(h));
  out.manifest_path = out.directory / "manifest.json";
  write_file(out.manifest_path, out.manifest.dump(2) + "\n");
  return out;
}

inline std::vector<std::string> figure_labels() { return {"fig1", "fig2", "fig3"}; }

/// Canned configs for the three figures.
inline ExperimentConfig figure_config(const std::string& figure, const std::string& output_dir = default_output_dir()) {
  ExperimentConfig c;
  c.stepper = "midpoint";
  c.seed = 1;
  c.T = 2000.0;
  c.output_dir = (std::filesystem::path(output_dir) / figure).string();
  if (figure == "fig1") {
    c.system = "pendulum";
    c.sigma = {0.01, 0.02, 0.03};
    c.y0 = {1.0, 2.0};
    c.h = {0.1, 0.2, 0.4, 0.8};
    c.tracks = {"hamiltonian"};
  } else if (figure == "fig2") {
    c.system = "doublewell";
    c.sigma = {0.01, 0.01};
    c.y0 = {0.0, 1.0};
    c.h = {0.001, 0.01, 0.1};
    c.tracks = {"hbar", "hbar_fixed"};
  } else if (figure == "fig3") {
    c.system = "maxwell-bloch";
    c.sigma = {0.01, 0.01};
    c.stepper = "mb-splitting";
    c.y0 = {0.0, 0.0, 1.0};
    c.h = {0.1};
    c.T = 1e5;
    c.tracks = {"hbar"};
  } else {
    throw ConfigError("$.figure", "unknown figure '" + figure + "' (expected fig1, fig2 or fig3)");
  }
  validate(c);
  return c;
}

inline OutputBundle reproduce(const std::string& figure, const std::string& output_dir = default_output_dir()) {
  return run(figure_config(figure, output_dir));
}

}  // namespace spi::harness
