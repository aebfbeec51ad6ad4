#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "spi/integrators.hpp"
#include "spi/stochastics.hpp"
#include "spi/systems.hpp"

namespace spi::harness {

using json = nlohmann::json;

/// Validation failure tied to a JSON key path such as "$.truncation.rho".
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string path, const std::string& what)
      : std::invalid_argument(path + ": " + what), path_(std::move(path)), message_(what) {}
  const std::string& path() const { return path_; }
  const std::string& message() const { return message_; }

 private:
  std::string path_;
  std::string message_;
};

inline std::string default_output_dir() {
  if (const char* env = std::getenv("SPI_OUTPUT_DIR"); env && *env) return env;
  return "spi-out";
}

inline const std::set<std::string>& track_names() {
  static const std::set<std::string> names{"hamiltonian", "casimirs", "hbar", "hbar_fixed"};
  return names;
}

struct ExperimentConfig {
  std::string system;
  std::vector<double> sigma;  // empty: catalog defaults
  std::string stepper;
  std::vector<double> y0;
  std::vector<double> h;
  double T = 0.0;
  std::size_t n_paths = 1;
  std::uint64_t seed = 1;
  TruncationPolicy truncation;
  std::vector<std::string> tracks;
  std::string output_dir = default_output_dir();

  std::size_t steps_for(double step) const { return static_cast<std::size_t>(std::llround(T / step)); }
};

namespace detail {

inline void reject_unknown(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || it.key() == k;
    if (!ok) throw ConfigError(path + "." + it.key(), "unknown key");
  }
}

inline const json& require(const json& obj, const std::string& path, const char* key) {
  if (!obj.contains(key)) throw ConfigError(path + "." + key, "missing required key");
  return obj.at(key);
}

inline double number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(path, "must be finite");
  return x;
}

inline std::vector<double> numbers(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

inline std::string text(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path, "expected a string");
  return v.get<std::string>();
}

inline bool flag(const json& v, const std::string& path) {
  if (!v.is_boolean()) throw ConfigError(path, "expected true or false");
  return v.get<bool>();
}

}  // namespace detail

/// Checks cross-field constraints; throws ConfigError naming the key.
inline void validate(const ExperimentConfig& c) {
  PoissonSystem sys = [&] {
    try {
      return make_builtin(c.system, c.sigma);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(c.sigma.empty() ? "$.system.label" : "$.system", e.what());
    }
  }();
  Stepper st = [&] {
    try {
      return make_stepper(c.stepper);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("$.stepper", e.what());
    }
  }();
  try {
    check_compatible(st, sys);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("$.stepper", e.what());
  }
  if (c.y0.size() != sys.dimension())
    throw ConfigError("$.y0", "expected " + std::to_string(sys.dimension()) + " entries for system '" + c.system + "'");
  if (!sys.in_domain(c.y0)) throw ConfigError("$.y0", "initial state lies outside the system's domain");
  if (c.h.empty()) throw ConfigError("$.h", "need at least one step size");
  if (!(c.T > 0.0)) throw ConfigError("$.T", "must be positive");
  for (std::size_t i = 0; i < c.h.size(); ++i) {
    const std::string path = c.h.size() == 1 ? "$.h" : "$.h[" + std::to_string(i) + "]";
    if (!(c.h[i] > 0.0)) throw ConfigError(path, "must be positive");
    const double n = c.T / c.h[i];
    if (n > 2147483648.0) throw ConfigError(path, "T/h exceeds 2^31 steps");
    if (std::abs(n - std::round(n)) > 1e-9 * std::max(1.0, n)) throw ConfigError(path, "T must be a multiple of h");
    if (c.truncation.enabled && !(c.h[i] < 1.0)) throw ConfigError(path, "truncation needs h < 1");
  }
  if (c.n_paths < 1) throw ConfigError("$.n_paths", "must be >= 1");
  if (!(c.truncation.rho >= 1.0)) throw ConfigError("$.truncation.rho", "must be >= 1");
  for (std::size_t i = 0; i < c.tracks.size(); ++i) {
    const std::string path = "$.tracks[" + std::to_string(i) + "]";
    if (!track_names().count(c.tracks[i])) throw ConfigError(path, "unknown track '" + c.tracks[i] + "'");
    if (c.tracks[i] == "casimirs" && sys.casimir_count() == 0)
      throw ConfigError(path, "system '" + c.system + "' has no Casimirs");
  }
  if (c.output_dir.empty()) throw ConfigError("$.output_dir", "must not be empty");
}

inline ExperimentConfig parse_config(const json& j) {
  using namespace detail;
  if (!j.is_object()) throw ConfigError("$", "config must be a JSON object");
  reject_unknown(j, "$", {"system", "stepper", "y0", "h", "T", "n_paths", "seed", "truncation", "tracks", "output_dir"});
  ExperimentConfig c;
  const json& s = require(j, "$", "system");
  if (s.is_string()) {
    c.system = s.get<std::string>();
  } else if (s.is_object()) {
    reject_unknown(s, "$.system", {"label", "sigma"});
    c.system = text(require(s, "$.system", "label"), "$.system.label");
    if (s.contains("sigma")) {
      c.sigma = numbers(s.at("sigma"), "$.system.sigma");
      for (std::size_t i = 0; i < c.sigma.size(); ++i)
        if (c.sigma[i] < 0.0) throw ConfigError("$.system.sigma[" + std::to_string(i) + "]", "must be >= 0");
    }
  } else {
    throw ConfigError("$.system", "expected a label or {label, sigma}");
  }
  c.stepper = text(require(j, "$", "stepper"), "$.stepper");
  c.y0 = numbers(require(j, "$", "y0"), "$.y0");
  const json& h = require(j, "$", "h");
  c.h = h.is_array() ? numbers(h, "$.h") : std::vector<double>{number(h, "$.h")};
  c.T = number(require(j, "$", "T"), "$.T");
  if (j.contains("n_paths")) {
    const json& v = j.at("n_paths");
    if (!v.is_number_integer() || v.get<long long>() < 1) throw ConfigError("$.n_paths", "expected an integer >= 1");
    c.n_paths = v.get<std::size_t>();
  }
  if (j.contains("seed")) {
    const json& v = j.at("seed");
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
      throw ConfigError("$.seed", "expected a nonnegative integer");
    c.seed = v.get<std::uint64_t>();
  }
  if (j.contains("truncation")) {
    const json& t = j.at("truncation");
    if (!t.is_object()) throw ConfigError("$.truncation", "expected {enabled, rho}");
    reject_unknown(t, "$.truncation", {"enabled", "rho"});
    if (t.contains("enabled")) c.truncation.enabled = flag(t.at("enabled"), "$.truncation.enabled");
    if (t.contains("rho")) c.truncation.rho = number(t.at("rho"), "$.truncation.rho");
  }
  if (j.contains("tracks")) {
    const json& t = j.at("tracks");
    if (!t.is_array()) throw ConfigError("$.tracks", "expected an array of track names");
    for (std::size_t i = 0; i < t.size(); ++i) c.tracks.push_back(text(t[i], "$.tracks[" + std::to_string(i) + "]"));
  }
  if (j.contains("output_dir")) c.output_dir = text(j.at("output_dir"), "$.output_dir");
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("$", "cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("$", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline json to_json(const ExperimentConfig& c) {
  json j;
  j["system"] = {{"label", c.system}, {"sigma", c.sigma.empty() ? make_builtin(c.system).sigma() : c.sigma}};
  j["stepper"] = c.stepper;
  j["y0"] = c.y0;
  j["h"] = c.h;
  j["T"] = c.T;
  j["n_paths"] = c.n_paths;
  j["seed"] = c.seed;
  j["truncation"] = {{"enabled", c.truncation.enabled}, {"rho", c.truncation.rho}};
  j["tracks"] = c.tracks;
  j["output_dir"] = c.output_dir;
  return j;
}

}  // namespace spi::harness
