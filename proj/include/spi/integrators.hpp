#pragma once

// One-step schemes for stochastic Poisson systems. Every stepper is a
// template over the scalar algebra, so a step on jets (formal h, dW and
// displaced state) is the same code as a step on doubles.

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "spi/jet.hpp"
#include "spi/scalar.hpp"
#include "spi/stochastics.hpp"
#include "spi/systems.hpp"

namespace spi {

enum class SolverMode { fixed_point, newton };

struct SolverConfig {
  SolverMode mode = SolverMode::fixed_point;
  double tolerance = 1e-12;
  int max_iterations = 50;
  /// Try the other mode when the first one fails (only doubles have Newton).
  bool fallback = true;
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> history)
      : std::runtime_error(what), history_(std::move(history)) {}
  /// Residual norm after each iteration.
  const std::vector<double>& history() const { return history_; }

 private:
  std::vector<double> history_;
};

class StepError : public std::runtime_error {
 public:
  StepError(std::size_t step, const std::string& what)
      : std::runtime_error("step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

namespace detail {

template <class S>
double residual_norm(std::span<const S> y, std::span<const S> gy) {
  double r = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) r = std::max(r, magnitude(y[i] - gy[i]));
  return r;
}

template <class S>
double scale_of(std::span<const S> y) {
  double s = 1.0;
  for (const auto& v : y) s = std::max(s, magnitude(v));
  return s;
}

template <class S, class Map>
Vec<S> fixed_point(const Map& g, Vec<S> y, const SolverConfig& cfg, std::vector<double>& history) {
  int budget = cfg.max_iterations;
  if constexpr (std::is_same_v<S, Jet>) {
    // each sweep fixes at least one more weight level
    if (!y.empty() && y[0].space()) budget = std::max(budget, y[0].space()->max_weight() + 2);
  }
  for (int it = 0; it < budget; ++it) {
    Vec<S> gy = g.template operator()<S>(std::span<const S>(y));
    double r = residual_norm<S>(y, gy);
    history.push_back(r);
    y = std::move(gy);
    if (r <= cfg.tolerance * scale_of<S>(y)) {
      // polish down to rounding while sweeps still help
      for (int extra = 0; extra < 5 && r > 0.0; ++extra) {
        Vec<S> gz = g.template operator()<S>(std::span<const S>(y));
        const double rz = residual_norm<S>(y, gz);
        if (!(rz < r)) break;
        history.push_back(rz);
        y = std::move(gz);
        r = rz;
      }
      return y;
    }
  }
  throw ConvergenceError("fixed-point iteration did not converge in " + std::to_string(budget) +
                             " sweeps (last residual " + std::to_string(history.back()) + ")",
                         history);
}

/// Newton on R(Y) = Y - g(Y) with the Jacobian of g from first-order jets.
template <class Map>
Vec<double> newton(const Map& g, Vec<double> y, const SolverConfig& cfg, std::vector<double>& history) {
  const std::size_t d = y.size();
  auto space = JetSpace::make(std::vector<int>(d, 1), 1);
  for (int it = 0; it < cfg.max_iterations; ++it) {
    Vec<Jet> yj;
    for (std::size_t i = 0; i < d; ++i) yj.push_back(Jet::variable(space, i, y[i]));
    const Vec<Jet> gj = g.template operator()<Jet>(std::span<const Jet>(yj));
    Eigen::MatrixXd jac(d, d);
    Eigen::VectorXd res(d);
    for (std::size_t i = 0; i < d; ++i) {
      res(i) = y[i] - gj[i].constant();
      for (std::size_t j = 0; j < d; ++j) jac(i, j) = (i == j ? 1.0 : 0.0) - gj[i].coefficient(JetSpace::unit(j));
    }
    const double r = res.lpNorm<Eigen::Infinity>();
    history.push_back(r);
    if (!std::isfinite(r)) break;
    if (r <= cfg.tolerance * scale_of<double>(y)) return y;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
    if (!lu.isInvertible()) throw ConvergenceError("Newton matrix is singular", history);
    const Eigen::VectorXd delta = lu.solve(res);
    for (std::size_t i = 0; i < d; ++i) y[i] -= delta(i);
  }
  throw ConvergenceError("Newton iteration did not converge in " + std::to_string(cfg.max_iterations) +
                             " iterations (last residual " + std::to_string(history.back()) + ")",
                         history);
}

}  // namespace detail

/// Solves Y = g(Y). `g` must be callable as g.template operator()<T>(span<const T>)
/// for T = S and, for Newton on doubles, T = Jet.
template <class S, class Map>
Vec<S> implicit_solve(const Map& g, Vec<S> guess, const SolverConfig& cfg = {}) {
  if (!(cfg.tolerance > 0.0)) throw std::invalid_argument("implicit_solve: tolerance must be positive");
  if (cfg.max_iterations < 1) throw std::invalid_argument("implicit_solve: max_iterations must be >= 1");
  std::vector<double> history;
  if constexpr (std::is_same_v<S, double>) {
    const bool newton_first = cfg.mode == SolverMode::newton;
    try {
      return newton_first ? detail::newton(g, guess, cfg, history) : detail::fixed_point<double>(g, guess, cfg, history);
    } catch (const ConvergenceError&) {
      if (!cfg.fallback) throw;
    }
    return newton_first ? detail::fixed_point<double>(g, guess, cfg, history) : detail::newton(g, guess, cfg, history);
  } else {
    return detail::fixed_point<S>(g, std::move(guess), cfg, history);
  }
}

// --------------------------------------------------------------------------
// Steppers
// --------------------------------------------------------------------------

/// Stochastic implicit midpoint for canonical systems:
/// Y = y + B/2 (h grad H(Y) + sum dW_r grad H_r(Y)), y_next = 2Y - y.
struct MidpointStepper {
  SolverConfig solver;

  static std::string label() { return "midpoint"; }

  template <class S>
  Vec<S> step(const PoissonSystem& sys, std::span<const S> y, const S& h, std::span<const S> dw) const {
    if (!sys.is_canonical())
      throw std::invalid_argument("midpoint: system '" + sys.label() + "' is not canonical");
    const Vec<S> y0(y.begin(), y.end());
    const Map<S> g{&sys, &y0, &h, dw};
    const Vec<S> mid = implicit_solve<S>(g, y0, solver);
    Vec<S> out(y0.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 2.0 * mid[i] - y0[i];
    return out;
  }

 private:
  template <class S>
  struct Map {
    const PoissonSystem* sys;
    const Vec<S>* y;
    const S* h;
    std::span<const S> dw;

    template <class T>
    Vec<T> operator()(std::span<const T> mid) const {
      auto lift = [](const S& v) -> T {
        if constexpr (std::is_same_v<S, T>)
          return v;
        else
          return T(value_of(v));
      };
      Vec<T> grad = sys->gradient<T>(0, mid);
      const T ht = lift(*h);
      for (auto& v : grad) v = ht * v;
      for (std::size_t r = 1; r <= sys->noise_count(); ++r) {
        const auto gr = sys->gradient<T>(r, mid);
        const T w = lift(dw[r - 1]);
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = grad[i] + w * gr[i];
      }
      const auto b = sys->structure<T>(mid);
      const auto bg = b.apply(grad);
      Vec<T> out(bg.size());
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = lift((*y)[i]) + 0.5 * bg[i];
      return out;
    }
  };
};

/// Maxwell-Bloch splitting: exact subflows of A1(y) sigma1 W1, A2 sigma2 W2,
/// A1(y) h, A2 h, applied in that order. e^{A1 t} rotates (y2, y3) by the
/// angle y1 t, e^{A2 t} shears y1 += t y2.
struct SplittingStepper {
  /// Use the incoming y1 in every A1 factor instead of the current one.
  bool frozen = false;

  static std::string label() { return "mb-splitting"; }

  template <class S>
  Vec<S> step(const PoissonSystem& sys, std::span<const S> y, const S& h, std::span<const S> dw) const {
    if (sys.kind() != SystemKind::maxwell_bloch || sys.dimension() != 3 || sys.noise_count() != 2)
      throw std::invalid_argument("mb-splitting: needs the maxwell-bloch system, got '" + sys.label() + "'");
    const double s1 = sys.sigma()[0];
    const double s2 = sys.sigma()[1];
    Vec<S> z(y.begin(), y.end());
    const S y1_in = z[0];
    auto rotate = [&](const S& t) {
      const S angle = (frozen ? y1_in : z[0]) * t;
      const S c = cos(angle);
      const S s = sin(angle);
      const S a = z[1] * c + z[2] * s;
      const S b = z[2] * c - z[1] * s;
      z[1] = a;
      z[2] = b;
    };
    auto shear = [&](const S& t) { z[0] = z[0] + t * z[1]; };
    rotate(s1 * dw[0]);
    shear(s2 * dw[1]);
    rotate(h);
    shear(h);
    return z;
  }
};

/// Stratonovich-consistent explicit trapezoidal predictor-corrector.
struct HeunStepper {
  static std::string label() { return "heun"; }

  template <class S>
  Vec<S> step(const PoissonSystem& sys, std::span<const S> y, const S& h, std::span<const S> dw) const {
    const std::size_t d = y.size();
    const std::size_t m = sys.noise_count();
    const Vec<S> f0 = sys.drift<S>(y);
    std::vector<Vec<S>> g0;
    for (std::size_t r = 1; r <= m; ++r) g0.push_back(sys.diffusion<S>(r, y));
    Vec<S> pred(y.begin(), y.end());
    for (std::size_t i = 0; i < d; ++i) {
      pred[i] = pred[i] + h * f0[i];
      for (std::size_t r = 0; r < m; ++r) pred[i] = pred[i] + dw[r] * g0[r][i];
    }
    const Vec<S> f1 = sys.drift<S>(pred);
    Vec<S> out(y.begin(), y.end());
    for (std::size_t i = 0; i < d; ++i) out[i] = out[i] + 0.5 * (h * (f0[i] + f1[i]));
    for (std::size_t r = 0; r < m; ++r) {
      const Vec<S> g1 = sys.diffusion<S>(r + 1, pred);
      for (std::size_t i = 0; i < d; ++i) out[i] = out[i] + 0.5 * (dw[r] * (g0[r][i] + g1[i]));
    }
    return out;
  }
};

using Stepper = std::variant<MidpointStepper, SplittingStepper, HeunStepper>;

inline std::string stepper_label(const Stepper& s) {
  return std::visit([](const auto& st) { return st.label(); }, s);
}

inline std::vector<std::string> stepper_labels() { return {"midpoint", "mb-splitting", "heun"}; }

inline Stepper make_stepper(const std::string& label, const SolverConfig& solver = {}) {
  if (label == "midpoint") return MidpointStepper{solver};
  if (label == "mb-splitting") return SplittingStepper{};
  if (label == "mb-splitting-frozen") return SplittingStepper{true};
  if (label == "heun") return HeunStepper{};
  throw std::invalid_argument("unknown stepper '" + label + "'");
}

/// Rejects stepper/system pairs the scheme is not defined for.
inline void check_compatible(const Stepper& st, const PoissonSystem& sys) {
  if (std::holds_alternative<MidpointStepper>(st) && !sys.is_canonical())
    throw std::invalid_argument("midpoint needs a canonical system, got '" + sys.label() + "'");
  if (std::holds_alternative<SplittingStepper>(st) && sys.kind() != SystemKind::maxwell_bloch)
    throw std::invalid_argument("mb-splitting needs the maxwell-bloch system, got '" + sys.label() + "'");
}

template <class S>
Vec<S> step(const Stepper& st, const PoissonSystem& sys, std::span<const S> y, const S& h, std::span<const S> dw) {
  if (dw.size() != sys.noise_count())
    throw std::invalid_argument("step: expected " + std::to_string(sys.noise_count()) + " increments, got " +
                                std::to_string(dw.size()));
  return std::visit([&](const auto& s) { return s.template step<S>(sys, y, h, dw); }, st);
}

inline Vec<double> step(const Stepper& st, const PoissonSystem& sys, std::span<const double> y, double h,
                        std::span<const double> dw) {
  return step<double>(st, sys, y, h, dw);
}

// --------------------------------------------------------------------------
// Trajectories
// --------------------------------------------------------------------------

struct TrackRequest {
  bool hamiltonian = false;
  bool casimirs = false;
  /// per-step, cumulative and fixed-increment random-Hamiltonian residuals
  bool hbar = false;
  HbarScaling scaling = HbarScaling::per_step;
  /// Keep every state (otherwise only y0 and the final state).
  bool keep_states = true;

  static TrackRequest all() { return {true, true, true}; }
};

struct Trajectory {
  double h = 0.0;
  std::size_t dimension = 0;
  std::size_t n_steps = 0;
  /// Row-major (rows x dimension); rows = n_steps + 1 or 2 without keep_states.
  std::vector<double> states;
  std::map<std::string, std::vector<double>> tracks;

  double time(std::size_t n) const { return static_cast<double>(n) * h; }
  std::size_t rows() const { return states.size() / dimension; }
  std::span<const double> state(std::size_t row) const { return {states.data() + row * dimension, dimension}; }
  std::span<const double> final_state() const { return state(rows() - 1); }
};

/// Iterates the stepper. Track names: "hamiltonian", "casimir_<k>",
/// "hbar_step" (H_n(y_{n+1}) - H_n(y_n) with H_n from step-n increments,
/// entry n+1), "hbar_cumulative" (running sum), "hbar_fixed" (H_0(y_n) - H_0(y_0)).
inline Trajectory integrate(const PoissonSystem& sys, const Stepper& st, std::span<const double> y0, double h,
                            std::size_t n_steps, const IncrementBatch& inc, const TrackRequest& tracks = {}) {
  if (y0.size() != sys.dimension()) throw std::invalid_argument("integrate: y0 has the wrong dimension");
  if (n_steps > 0) {
    if (inc.n_steps() < n_steps) throw std::invalid_argument("integrate: not enough increments");
    if (inc.h() != h) throw std::invalid_argument("integrate: increments were drawn for a different h");
    if (inc.noise_count() != sys.noise_count()) throw std::invalid_argument("integrate: wrong noise count");
  }
  check_compatible(st, sys);
  Trajectory tr;
  tr.h = h;
  tr.dimension = sys.dimension();
  tr.n_steps = n_steps;
  const std::size_t rows = tracks.keep_states ? n_steps + 1 : 1;
  tr.states.reserve(rows * tr.dimension);
  tr.states.insert(tr.states.end(), y0.begin(), y0.end());

  std::vector<double>* ham = nullptr;
  std::vector<std::vector<double>*> cas;
  std::vector<double>*hstep = nullptr, *hcum = nullptr, *hfix = nullptr;
  if (tracks.hamiltonian) ham = &tr.tracks["hamiltonian"];
  if (tracks.casimirs)
    for (std::size_t k = 0; k < sys.casimir_count(); ++k) cas.push_back(&tr.tracks["casimir_" + std::to_string(k)]);
  if (tracks.hbar) {
    hstep = &tr.tracks["hbar_step"];
    hcum = &tr.tracks["hbar_cumulative"];
    hfix = &tr.tracks["hbar_fixed"];
  }
  auto record = [&](std::span<const double> y) {
    if (ham) ham->push_back(sys.hamiltonian<double>(0, y));
    for (std::size_t k = 0; k < cas.size(); ++k) cas[k]->push_back(sys.casimir<double>(k, y));
  };
  record(y0);
  const double h_eff = h != 0.0 ? h : 1.0;
  std::vector<double> dw0(sys.noise_count(), 0.0);
  if (n_steps > 0)
    for (std::size_t r = 0; r < dw0.size(); ++r) dw0[r] = inc(0, r);
  double hbar0 = 0.0;
  if (hfix) {
    hstep->push_back(0.0);
    hcum->push_back(0.0);
    hfix->push_back(0.0);
    hbar0 = random_hamiltonian<double>(sys, dw0, h_eff, y0, tracks.scaling);
  }

  Vec<double> y(y0.begin(), y0.end());
  double cumulative = 0.0;
  for (std::size_t n = 0; n < n_steps; ++n) {
    const auto dw = inc.step(n);
    Vec<double> next;
    try {
      next = step(st, sys, y, h, dw);
    } catch (const std::exception& e) {
      throw StepError(n, e.what());
    }
    if (hstep) {
      const double r = random_hamiltonian<double>(sys, dw, h_eff, next, tracks.scaling) -
                       random_hamiltonian<double>(sys, dw, h_eff, y, tracks.scaling);
      cumulative += r;
      hstep->push_back(r);
      hcum->push_back(cumulative);
      hfix->push_back(random_hamiltonian<double>(sys, dw0, h_eff, next, tracks.scaling) - hbar0);
    }
    y = std::move(next);
    record(y);
    if (tracks.keep_states) tr.states.insert(tr.states.end(), y.begin(), y.end());
  }
  if (!tracks.keep_states && n_steps > 0) tr.states.insert(tr.states.end(), y.begin(), y.end());
  return tr;
}

}  // namespace spi
