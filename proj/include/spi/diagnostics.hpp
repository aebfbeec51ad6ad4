#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "spi/integrators.hpp"
#include "spi/jet.hpp"
#include "spi/stochastics.hpp"
#include "spi/systems.hpp"

namespace spi {

/// Runs body(i) for i in [0, n) on up to `threads` workers. Each index is
/// owned by exactly one worker, so results written to slot i are independent
/// of scheduling.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, unsigned threads = 0) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += threads) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// --------------------------------------------------------------------------
// Poisson-map residuals
// --------------------------------------------------------------------------

/// Value and exact Jacobian of one step, from first-order y-jets.
struct StepJacobian {
  Vec<double> value;
  std::vector<Vec<double>> jacobian;
};

inline StepJacobian step_jacobian(const Stepper& st, const PoissonSystem& sys, std::span<const double> y, double h,
                                  std::span<const double> dw) {
  const std::size_t d = y.size();
  auto space = JetSpace::make(std::vector<int>(d, 1), 1);
  Vec<Jet> yj;
  for (std::size_t i = 0; i < d; ++i) yj.push_back(Jet::variable(space, i, y[i]));
  const Vec<Jet> dwj(dw.begin(), dw.end());
  const Vec<Jet> out = step<Jet>(st, sys, yj, Jet(h), dwj);
  StepJacobian r;
  r.jacobian.assign(d, Vec<double>(d, 0.0));
  for (std::size_t i = 0; i < d; ++i) {
    r.value.push_back(out[i].constant());
    for (std::size_t j = 0; j < d; ++j) r.jacobian[i][j] = out[i].coefficient(JetSpace::unit(j));
  }
  return r;
}

/// || Phi'(y) B(y) Phi'(y)^T - B(Phi(y)) ||_max
inline double poisson_map_residual(const Stepper& st, const PoissonSystem& sys, std::span<const double> y, double h,
                                   std::span<const double> dw) {
  const auto sj = step_jacobian(st, sys, y, h, dw);
  const std::size_t d = y.size();
  const auto b0 = sys.structure<double>(y);
  const auto b1 = sys.structure<double>(sj.value);
  const auto& p = sj.jacobian;
  double res = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k)
        for (std::size_t l = 0; l < d; ++l) s += p[i][k] * b0(k, l) * p[j][l];
      res = std::max(res, std::abs(s - b1(i, j)));
    }
  return res;
}

/// || Phi'^T J Phi' - J ||_max for canonical systems, J = [[0, I], [-I, 0]].
inline double symplectic_residual(const Stepper& st, const PoissonSystem& sys, std::span<const double> y, double h,
                                  std::span<const double> dw) {
  if (!sys.is_canonical()) throw std::invalid_argument("symplectic_residual: system is not canonical");
  const auto sj = step_jacobian(st, sys, y, h, dw);
  const std::size_t d = y.size(), k = d / 2;
  auto j = [k](std::size_t a, std::size_t b) {
    if (a < k && b == a + k) return 1.0;
    if (a >= k && b + k == a) return -1.0;
    return 0.0;
  };
  const auto& p = sj.jacobian;
  double res = 0.0;
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) {
      double s = 0.0;
      for (std::size_t u = 0; u < d; ++u)
        for (std::size_t v = 0; v < d; ++v) s += p[u][a] * j(u, v) * p[v][b];
      res = std::max(res, std::abs(s - j(a, b)));
    }
  return res;
}

struct ResidualSample {
  Vec<double> y;
  double h = 0.0;
  Vec<double> dw;
};

/// Seeded samples: y from the system's sampler, h uniform in (0, h_max],
/// dW ~ N(0, h).
inline std::vector<ResidualSample> residual_samples(const PoissonSystem& sys, std::size_t n, double h_max,
                                                    std::uint64_t seed) {
  std::vector<ResidualSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    ResidualSample s;
    s.y = sys.sample_point(seed, i);
    s.h = h_max * detail::open_uniform(detail::counter_hash(seed, 0xB0B0ull, i, 0));
    for (std::size_t r = 0; r < sys.noise_count(); ++r)
      s.dw.push_back(std::sqrt(s.h) * standard_normal_at({seed, 0x5EEDull + i}, 0, r));
    out.push_back(std::move(s));
  }
  return out;
}

// --------------------------------------------------------------------------
// Drift series
// --------------------------------------------------------------------------

struct DriftSeries {
  std::string label;
  std::vector<double> t;
  std::vector<double> values;
};

/// Deviation of a tracked functional. "hamiltonian", "casimir_<k>" and
/// "hbar_fixed" are shifted to start at 0; "hbar" / "hbar_cumulative" is the
/// running sum of per-step random-Hamiltonian residuals; "hbar_step" the raw
/// per-step residuals.
inline DriftSeries functional_drift(const Trajectory& tr, const std::string& functional) {
  std::string key = functional == "hbar" ? "hbar_cumulative" : functional;
  auto it = tr.tracks.find(key);
  if (it == tr.tracks.end()) throw std::invalid_argument("functional '" + functional + "' was not tracked");
  DriftSeries s;
  s.label = key;
  const auto& v = it->second;
  s.t.resize(v.size());
  s.values.resize(v.size());
  for (std::size_t n = 0; n < v.size(); ++n) {
    s.t[n] = tr.time(n);
    s.values[n] = v[n] - ((key == "hbar_step" || key == "hbar_cumulative") ? 0.0 : v[0]);
  }
  return s;
}

/// Least-squares slope of |deviation| against t. Non-finite deviations give
/// +infinity (the run blew up).
inline double envelope_slope(const DriftSeries& s) {
  const std::size_t n = s.t.size();
  if (n < 2) throw std::invalid_argument("envelope_slope: need at least two points");
  double mt = 0.0, mv = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(s.values[i])) return std::numeric_limits<double>::infinity();
    mt += s.t[i];
    mv += std::abs(s.values[i]);
  }
  mt /= static_cast<double>(n);
  mv /= static_cast<double>(n);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (s.t[i] - mt) * (std::abs(s.values[i]) - mv);
    den += (s.t[i] - mt) * (s.t[i] - mt);
  }
  return num / den;
}

inline double max_abs_deviation(const DriftSeries& s) {
  double m = 0.0;
  for (double v : s.values) {
    if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
    m = std::max(m, std::abs(v));
  }
  return m;
}

// --------------------------------------------------------------------------
// Monte Carlo studies on coupled paths
// --------------------------------------------------------------------------

struct LogLogFit {
  double slope = 0.0;
  double intercept = 0.0;
};

inline LogLogFit fit_loglog(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_loglog: need at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0 && y[i] > 0.0)) throw std::invalid_argument("fit_loglog: values must be positive");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    den += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  const double slope = num / den;
  return {slope, my - slope * mx};
}

namespace detail {

/// Step counts for each h on a common fine grid of size h_fine; every h must
/// be an integer multiple of h_fine and divide T.
inline std::vector<std::size_t> coupling_factors(std::span<const double> hs, double h_fine, double T) {
  std::vector<std::size_t> f;
  for (double h : hs) {
    const double q = h / h_fine;
    const double qr = std::round(q);
    if (qr < 1.0 || std::abs(q - qr) > 1e-9 * qr)
      throw std::invalid_argument("h values must be integer multiples of the finest step");
    const double n = T / h;
    if (std::abs(n - std::round(n)) > 1e-9 * std::max(1.0, n))
      throw std::invalid_argument("T must be an integer multiple of every h");
    f.push_back(static_cast<std::size_t>(qr));
  }
  return f;
}

inline void check_h_list(std::span<const double> hs) {
  if (hs.size() < 2) throw std::invalid_argument("need at least two h values for a slope");
  for (std::size_t i = 0; i < hs.size(); ++i) {
    if (!(hs[i] > 0.0)) throw std::invalid_argument("h values must be positive");
    if (i > 0 && !(hs[i] < hs[i - 1])) throw std::invalid_argument("h values must be strictly decreasing");
  }
}

}  // namespace detail

struct DriftScalingResult {
  std::vector<double> h;
  /// Mean over paths of max_n |cumulative random-Hamiltonian residual|.
  std::vector<double> max_drift;
  double exponent = 0.0;
  std::size_t n_paths = 0;
  std::size_t failed_paths = 0;
};

struct DriftScalingOptions {
  std::size_t n_paths = 100;
  std::uint64_t seed = 1;
  TruncationPolicy truncation{1.0, true};
  HbarScaling scaling = HbarScaling::per_step;
  /// Drifts below this are treated as rounding noise.
  double floor = 1e-13;
  unsigned threads = 0;
};

/// Max cumulative random-Hamiltonian residual as a function of h on coupled
/// paths, and its log-log slope.
inline DriftScalingResult drift_scaling_exponent(const PoissonSystem& sys, const Stepper& st,
                                                 std::span<const double> y0, double T, std::vector<double> hs,
                                                 const DriftScalingOptions& opt = {}) {
  detail::check_h_list(hs);
  if (opt.n_paths < 1) throw std::invalid_argument("drift_scaling_exponent: need at least one path");
  const double h_fine = hs.back();
  const auto factors = detail::coupling_factors(hs, h_fine, T);
  const auto n_fine = static_cast<std::size_t>(std::llround(T / h_fine));
  std::vector<std::vector<double>> per_path(opt.n_paths, std::vector<double>(hs.size(), 0.0));
  std::vector<char> failed(opt.n_paths, 0);
  TrackRequest tracks;
  tracks.hbar = true;
  tracks.keep_states = false;
  tracks.scaling = opt.scaling;
  parallel_for(
      opt.n_paths,
      [&](std::size_t p) {
        const auto fine = sample_increments({opt.seed, p}, h_fine, sys.noise_count(), n_fine);
        for (std::size_t k = 0; k < hs.size(); ++k) {
          const auto coarse = truncate_increments(aggregate_increments(fine, factors[k]), opt.truncation);
          try {
            const auto tr = integrate(sys, st, y0, coarse.h(), coarse.n_steps(), coarse, tracks);
            per_path[p][k] = max_abs_deviation(functional_drift(tr, "hbar_cumulative"));
          } catch (const StepError&) {
            failed[p] = 1;
          }
          if (!std::isfinite(per_path[p][k])) failed[p] = 1;
        }
      },
      opt.threads);
  DriftScalingResult res;
  res.h = hs;
  res.max_drift.assign(hs.size(), 0.0);
  for (std::size_t p = 0; p < opt.n_paths; ++p) {
    if (failed[p]) {
      ++res.failed_paths;
      continue;
    }
    ++res.n_paths;
    for (std::size_t k = 0; k < hs.size(); ++k) res.max_drift[k] += per_path[p][k];
  }
  if (res.n_paths == 0) throw std::runtime_error("drift_scaling_exponent: every path failed");
  for (auto& v : res.max_drift) v /= static_cast<double>(res.n_paths);
  if (*std::max_element(res.max_drift.begin(), res.max_drift.end()) <= opt.floor)
    throw std::runtime_error("drift_scaling_exponent: drift at the rounding floor for every h, no fit");
  res.exponent = fit_loglog(res.h, res.max_drift).slope;
  return res;
}

struct OrderEstimate {
  std::vector<double> h;
  std::vector<double> mean_error;
  std::vector<double> half_width;
  std::size_t n_paths = 0;
  double slope = 0.0;
};

struct OrderOptions {
  std::size_t n_paths = 200;
  std::uint64_t seed = 1;
  /// Reference step is h_min / refinement on the same Brownian path.
  std::size_t refinement = 4;
  unsigned threads = 0;
};

/// Strong self-convergence: mean terminal error against the same method at
/// h_min / refinement on coupled paths, with 95% CLT half-widths.
inline OrderEstimate strong_order_estimate(const PoissonSystem& sys, const Stepper& st, std::span<const double> y0,
                                           double T, std::vector<double> hs, const OrderOptions& opt = {}) {
  detail::check_h_list(hs);
  if (opt.n_paths < 2) throw std::invalid_argument("strong_order_estimate: need at least two paths");
  if (opt.refinement < 1) throw std::invalid_argument("strong_order_estimate: refinement must be >= 1");
  const double h_ref = hs.back() / static_cast<double>(opt.refinement);
  const auto factors = detail::coupling_factors(hs, h_ref, T);
  const auto n_ref = static_cast<std::size_t>(std::llround(T / h_ref));
  std::vector<std::vector<double>> err(opt.n_paths, std::vector<double>(hs.size(), 0.0));
  TrackRequest tracks;
  tracks.keep_states = false;
  parallel_for(
      opt.n_paths,
      [&](std::size_t p) {
        const auto fine = sample_increments({opt.seed, p}, h_ref, sys.noise_count(), n_ref);
        const auto ref = integrate(sys, st, y0, h_ref, n_ref, fine, tracks);
        const auto yref = ref.final_state();
        for (std::size_t k = 0; k < hs.size(); ++k) {
          const auto coarse = aggregate_increments(fine, factors[k]);
          const auto tr = integrate(sys, st, y0, coarse.h(), coarse.n_steps(), coarse, tracks);
          const auto y = tr.final_state();
          double s = 0.0;
          for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - yref[i]) * (y[i] - yref[i]);
          err[p][k] = std::sqrt(s);
        }
      },
      opt.threads);
  OrderEstimate est;
  est.h = hs;
  est.n_paths = opt.n_paths;
  const double n = static_cast<double>(opt.n_paths);
  for (std::size_t k = 0; k < hs.size(); ++k) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t p = 0; p < opt.n_paths; ++p) mean += err[p][k];
    mean /= n;
    for (std::size_t p = 0; p < opt.n_paths; ++p) sq += (err[p][k] - mean) * (err[p][k] - mean);
    const double sd = std::sqrt(sq / (n - 1.0));
    est.mean_error.push_back(mean);
    est.half_width.push_back(1.96 * sd / std::sqrt(n));
    if (!(mean > 0.0) || !std::isfinite(mean))
      throw std::runtime_error("strong_order_estimate: degenerate error at h = " + std::to_string(hs[k]));
    if (est.half_width.back() > 0.5 * mean)
      throw std::runtime_error("strong_order_estimate: too few paths, half-width exceeds half the error at h = " +
                               std::to_string(hs[k]));
  }
  est.slope = fit_loglog(est.h, est.mean_error).slope;
  return est;
}

}  // namespace spi
