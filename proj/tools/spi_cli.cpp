// spi: command-line front end for simulations, diagnostics and figure runs.

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spi/harness/commands.hpp"
#include "spi/harness/experiments.hpp"

namespace {

using spi::harness::json;

int fail(const std::string& message, const std::string& key = {}) {
  json err{{"error", message}};
  err["key"] = key.empty() ? json(nullptr) : json(key);
  std::cerr << err.dump() << "\n";
  return 2;
}

std::vector<double> parse_list(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(spi::harness::parse_number(item));
    } catch (const std::invalid_argument&) {
      throw spi::harness::ConfigError(flag, "'" + text + "' is not a comma-separated list of numbers");
    }
  }
  if (out.empty()) throw spi::harness::ConfigError(flag, "empty list");
  return out;
}

/// Writes to the file, or to stdout when the path is "-".
void emit(const std::string& path, const std::string& text) {
  if (path == "-")
    std::cout << text;
  else
    spi::harness::write_file(path, text);
}

void print_bundle(const spi::harness::OutputBundle& b) {
  std::cout << "manifest " << b.manifest_path.string() << "\n";
  std::cout << "hash " << b.manifest["hash"].get<std::string>() << "\n";
  for (const auto& s : b.summaries)
    std::cout << "h " << spi::harness::short_number(s.h) << " trajectory " << s.trajectory << " " << s.functional
              << " max_abs " << spi::harness::format_number(s.max_abs) << " slope "
              << spi::harness::format_number(s.slope) << "\n";
}

spi::HbarScaling parse_scaling(const std::string& s) {
  if (s == "per_step") return spi::HbarScaling::per_step;
  if (s == "times_h") return spi::HbarScaling::times_h;
  throw spi::harness::ConfigError("--scaling", "expected per_step or times_h");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic Poisson integrators: simulation, backward error analysis and diagnostics"};
  app.require_subcommand(1);

  std::string config_path, output_dir, out_path = "-", scaling = "per_step", system, stepper = "midpoint", sigma;
  std::vector<std::string> points;
  std::size_t paths = 0, samples = 100, refinement = 4;
  int weight = 4;
  double h_max = 0.1;
  std::uint64_t seed = 1;
  std::string figure;

  auto* simulate = app.add_subcommand("simulate", "integrate a config and write CSV, SVG and manifest files");
  simulate->add_option("--config", config_path, "JSON config")->required();
  simulate->add_option("--output-dir", output_dir, "overrides output_dir");

  auto* drift = app.add_subcommand("drift", "max cumulative Hbar residual against h on coupled paths");
  drift->add_option("--config", config_path, "JSON config (h list, T, n_paths, seed, truncation)")->required();
  drift->add_option("--scaling", scaling, "per_step or times_h");
  drift->add_option("--paths", paths, "overrides n_paths");
  drift->add_option("--out", out_path, "CSV path, - for stdout");

  auto* order = app.add_subcommand("order", "strong self-convergence on coupled paths");
  order->add_option("--config", config_path, "JSON config (h list, T, n_paths, seed)")->required();
  order->add_option("--paths", paths, "overrides n_paths");
  order->add_option("--refinement", refinement, "reference step is h_min / refinement");
  order->add_option("--out", out_path, "CSV path, - for stdout");

  auto* coeffs = app.add_subcommand("modified-coeffs", "modified-equation coefficients at base points");
  coeffs->add_option("--system", system, "builtin system label")->required();
  coeffs->add_option("--stepper", stepper, "stepper label");
  coeffs->add_option("--sigma", sigma, "comma-separated noise amplitudes");
  coeffs->add_option("--weight", weight, "truncation weight")->check(CLI::Range(1, 15));
  coeffs->add_option("--point", points, "comma-separated base point, repeatable")->required();
  coeffs->add_option("--out", out_path, "CSV path, - for stdout");

  auto* pcheck = app.add_subcommand("poisson-check", "Poisson-map residual of one step at random samples");
  pcheck->add_option("--system", system, "builtin system label")->required();
  pcheck->add_option("--stepper", stepper, "stepper label");
  pcheck->add_option("--sigma", sigma, "comma-separated noise amplitudes");
  pcheck->add_option("--samples", samples, "number of samples");
  pcheck->add_option("--h-max", h_max, "step sizes are drawn from (0, h_max]");
  pcheck->add_option("--seed", seed, "sample seed");
  pcheck->add_option("--out", out_path, "per-sample CSV path (default: none)");

  auto* repro = app.add_subcommand("reproduce", "run a canned figure config");
  repro->add_option("figure", figure, "fig1, fig2 or fig3")->required();
  repro->add_option("--output-dir", output_dir, "parent directory of the figure output");

  auto* vconf = app.add_subcommand("validate-config", "check a config and echo it");
  vconf->add_option("config", config_path, "JSON config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(e.what(), "argv");
  }
  if (pcheck->parsed() && pcheck->count("--out") == 0) out_path.clear();

  auto system_from_flags = [&] {
    try {
      return spi::make_builtin(system, sigma.empty() ? std::vector<double>{} : parse_list(sigma, "--sigma"));
    } catch (const spi::harness::ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw spi::harness::ConfigError("--system", e.what());
    }
  };
  auto stepper_from_flags = [&] {
    try {
      return spi::make_stepper(stepper);
    } catch (const std::invalid_argument& e) {
      throw spi::harness::ConfigError("--stepper", e.what());
    }
  };

  try {
    if (simulate->parsed()) {
      auto c = spi::harness::load_config(config_path);
      if (!output_dir.empty()) c.output_dir = output_dir;
      print_bundle(spi::harness::run(c));
    } else if (drift->parsed()) {
      auto c = spi::harness::load_config(config_path);
      if (paths) c.n_paths = paths;
      const auto r = spi::harness::drift_study(c, parse_scaling(scaling));
      emit(out_path, r.csv);
      std::cerr << r.summary;
    } else if (order->parsed()) {
      auto c = spi::harness::load_config(config_path);
      if (paths) c.n_paths = paths;
      const auto r = spi::harness::order_study(c, refinement);
      emit(out_path, r.csv);
      std::cerr << r.summary;
    } else if (coeffs->parsed()) {
      const auto sys = system_from_flags();
      const auto st = stepper_from_flags();
      try {
        spi::check_compatible(st, sys);
      } catch (const std::invalid_argument& e) {
        throw spi::harness::ConfigError("--stepper", e.what());
      }
      std::vector<std::vector<double>> pts;
      for (const auto& p : points) pts.push_back(parse_list(p, "--point"));
      const auto r = spi::harness::modified_coeffs(sys, st, pts, weight);
      emit(out_path, r.csv);
      std::cerr << r.summary;
    } else if (pcheck->parsed()) {
      const auto sys = system_from_flags();
      const auto st = stepper_from_flags();
      try {
        spi::check_compatible(st, sys);
      } catch (const std::invalid_argument& e) {
        throw spi::harness::ConfigError("--stepper", e.what());
      }
      const auto r = spi::harness::poisson_check_output(sys, st, samples, h_max, seed);
      if (!out_path.empty()) emit(out_path, r.csv);
      std::cout << r.summary;
    } else if (repro->parsed()) {
      print_bundle(spi::harness::reproduce(figure, output_dir.empty() ? spi::harness::default_output_dir() : output_dir));
    } else if (vconf->parsed()) {
      std::cout << spi::harness::to_json(spi::harness::load_config(config_path)).dump(2) << "\n";
    }
  } catch (const spi::harness::ConfigError& e) {
    return fail(e.message(), e.path());
  } catch (const spi::StepError& e) {
    return fail(e.what(), "step");
  } catch (const std::exception& e) {
    return fail(e.what());
  }
  return 0;
}
