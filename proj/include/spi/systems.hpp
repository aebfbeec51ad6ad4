#pragma once

// Stochastic Poisson systems
//
//   dy = B(y) grad H(y) dt + sum_r B(y) grad H_r(y) o dW_r
//
// with skew-symmetric B satisfying the Jacobi identity. A PoissonSystem
// carries every function twice, once over double and once over Jet, so the
// same stepper code yields numbers, Jacobians, or full Taylor expansions.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "spi/jet.hpp"
#include "spi/scalar.hpp"
#include "spi/stochastics.hpp"

namespace spi {

enum class SystemKind { canonical, lotka_volterra, maxwell_bloch, custom };

template <class S>
struct SystemFunctions {
  using ScalarFn = std::function<S(std::span<const S>)>;
  using VectorFn = std::function<Vec<S>(std::span<const S>)>;

  std::function<Matrix<S>(std::span<const S>)> structure;
  std::vector<ScalarFn> hamiltonians;  // [H, H_1, ..., H_m]
  std::vector<VectorFn> gradients;     // closed-form gradients, same order
  std::vector<ScalarFn> casimirs;
  std::vector<VectorFn> casimir_gradients;
};

struct SystemInfo {
  std::string label;
  std::size_t dimension = 0;
  std::size_t noise_count = 0;
  SystemKind kind = SystemKind::custom;
  std::vector<double> sigma;
  /// k for B = J^{-1} with d = 2k; 0 otherwise.
  std::size_t canonical_half_dimension = 0;
  std::function<bool(std::span<const double>)> in_domain = [](std::span<const double>) { return true; };
  /// Deterministic sample of a point inside the domain, used by checks.
  std::function<Vec<double>(std::uint64_t seed, std::uint64_t index)> sample_point;
};

class PoissonSystem {
 public:
  PoissonSystem(SystemInfo info, SystemFunctions<double> real, SystemFunctions<Jet> jet)
      : info_(std::move(info)), real_(std::move(real)), jet_(std::move(jet)) {
    if (real_.hamiltonians.size() != info_.noise_count + 1 || real_.gradients.size() != info_.noise_count + 1)
      throw std::invalid_argument("PoissonSystem: need m + 1 Hamiltonians with gradients");
  }

  const std::string& label() const { return info_.label; }
  std::size_t dimension() const { return info_.dimension; }
  std::size_t noise_count() const { return info_.noise_count; }
  SystemKind kind() const { return info_.kind; }
  const std::vector<double>& sigma() const { return info_.sigma; }
  bool is_canonical() const { return info_.canonical_half_dimension > 0; }
  std::size_t canonical_half_dimension() const { return info_.canonical_half_dimension; }
  std::size_t casimir_count() const { return real_.casimirs.size(); }
  bool in_domain(std::span<const double> y) const { return info_.in_domain(y); }
  Vec<double> sample_point(std::uint64_t seed, std::uint64_t index) const { return info_.sample_point(seed, index); }

  template <class S>
  const SystemFunctions<S>& functions() const {
    if constexpr (std::is_same_v<S, double>)
      return real_;
    else
      return jet_;
  }

  template <class S>
  Matrix<S> structure(std::span<const S> y) const {
    check_dimension(y.size());
    return functions<S>().structure(y);
  }

  /// r = 0 is the drift Hamiltonian H, r = 1..m the noise Hamiltonians.
  template <class S>
  S hamiltonian(std::size_t r, std::span<const S> y) const {
    check_dimension(y.size());
    return functions<S>().hamiltonians.at(r)(y);
  }

  template <class S>
  Vec<S> gradient(std::size_t r, std::span<const S> y) const {
    check_dimension(y.size());
    return functions<S>().gradients.at(r)(y);
  }

  template <class S>
  S casimir(std::size_t k, std::span<const S> y) const {
    return functions<S>().casimirs.at(k)(y);
  }

  template <class S>
  Vec<S> casimir_gradient(std::size_t k, std::span<const S> y) const {
    return functions<S>().casimir_gradients.at(k)(y);
  }

  /// f(y) = B(y) grad H(y)
  template <class S>
  Vec<S> drift(std::span<const S> y) const {
    const auto g = gradient<S>(0, y);
    return structure<S>(y).apply(g);
  }

  /// g_r(y) = B(y) grad H_r(y), r = 1..m
  template <class S>
  Vec<S> diffusion(std::size_t r, std::span<const S> y) const {
    if (r < 1 || r > noise_count())
      throw std::out_of_range("diffusion: noise index " + std::to_string(r) + " out of range");
    const auto g = gradient<S>(r, y);
    return structure<S>(y).apply(g);
  }

 private:
  void check_dimension(std::size_t n) const {
    if (n != info_.dimension)
      throw std::invalid_argument("system '" + info_.label + "': state has dimension " + std::to_string(n) +
                                  ", expected " + std::to_string(info_.dimension));
  }

  SystemInfo info_;
  SystemFunctions<double> real_;
  SystemFunctions<Jet> jet_;
};

/// Wraps a model type exposing templated structure / hamiltonian / gradient /
/// casimir members into a PoissonSystem over both scalar types.
template <class Model>
PoissonSystem make_system(SystemInfo info, Model model, std::size_t n_casimirs = 0) {
  auto build = [&]<class S>(std::type_identity<S>) {
    SystemFunctions<S> fns;
    fns.structure = [model](std::span<const S> y) { return model.template structure<S>(y); };
    for (std::size_t r = 0; r <= info.noise_count; ++r) {
      fns.hamiltonians.push_back([model, r](std::span<const S> y) { return model.template hamiltonian<S>(r, y); });
      fns.gradients.push_back([model, r](std::span<const S> y) { return model.template gradient<S>(r, y); });
    }
    for (std::size_t k = 0; k < n_casimirs; ++k) {
      fns.casimirs.push_back([model, k](std::span<const S> y) { return model.template casimir<S>(k, y); });
      fns.casimir_gradients.push_back(
          [model, k](std::span<const S> y) { return model.template casimir_gradient<S>(k, y); });
    }
    return fns;
  };
  auto real = build(std::type_identity<double>{});
  auto jet = build(std::type_identity<Jet>{});
  return PoissonSystem(std::move(info), std::move(real), std::move(jet));
}

/// {F, G}(y) = grad F^T B grad G
template <class S>
S bracket(const Matrix<S>& b, std::span<const S> grad_f, std::span<const S> grad_g) {
  const auto bg = b.apply(grad_g);
  S acc(0.0);
  for (std::size_t i = 0; i < bg.size(); ++i) acc = acc + grad_f[i] * bg[i];
  return acc;
}

// --------------------------------------------------------------------------
// Builtin catalog
// --------------------------------------------------------------------------

namespace models {

/// B = J^{-1} = [[0, -I], [I, 0]] for d = 2k; Hamiltonians supplied by Base.
template <class Base>
struct Canonical {
  std::size_t k = 1;
  Base base;

  template <class S>
  Matrix<S> structure(std::span<const S>) const {
    Matrix<S> b(2 * k, S(0.0));
    for (std::size_t i = 0; i < k; ++i) {
      b(i, k + i) = S(-1.0);
      b(k + i, i) = S(1.0);
    }
    return b;
  }
  template <class S>
  S hamiltonian(std::size_t r, std::span<const S> y) const {
    return base.template hamiltonian<S>(r, y);
  }
  template <class S>
  Vec<S> gradient(std::size_t r, std::span<const S> y) const {
    return base.template gradient<S>(r, y);
  }
  template <class S>
  S casimir(std::size_t, std::span<const S>) const {
    throw std::logic_error("canonical systems have no Casimirs");
  }
  template <class S>
  Vec<S> casimir_gradient(std::size_t, std::span<const S>) const {
    throw std::logic_error("canonical systems have no Casimirs");
  }
};

/// H = (q^2 + p^2)/2, H_r = sigma_r q (additive noise).
struct Harmonic {
  std::vector<double> sigma;
  template <class S>
  S hamiltonian(std::size_t r, std::span<const S> y) const {
    if (r == 0) return 0.5 * (y[0] * y[0] + y[1] * y[1]);
    return sigma[r - 1] * y[0];
  }
  template <class S>
  Vec<S> gradient(std::size_t r, std::span<const S> y) const {
    if (r == 0) return {y[0], y[1]};
    return {S(sigma[r - 1]), S(0.0)};
  }
};

/// H = p^2/2 - cos q, H_r = sigma_r H.
struct Pendulum {
  std::vector<double> sigma;
  template <class S>
  S hamiltonian(std::size_t r, std::span<const S> y) const {
    S h = 0.5 * (y[1] * y[1]) - cos(y[0]);
    return r == 0 ? h : sigma[r - 1] * h;
  }
  template <class S>
  Vec<S> gradient(std::size_t r, std::span<const S> y) const {
    const double s = r == 0 ? 1.0 : sigma[r - 1];
    return {s * sin(y[0]), s * y[1]};
  }
};

/// H = p^2/2 - cos q, H_1 = sigma_1 (q^2 + p^2)/2,
/// H_2 = sigma_2 (p^2/2 + q^4/4 - q^2/2).
struct DoubleWell {
  double sigma1 = 0.01;
  double sigma2 = 0.01;
  template <class S>
  S hamiltonian(std::size_t r, std::span<const S> y) const {
    const S& q = y[0];
    const S& p = y[1];
    switch (r) {
      case 0:
        return 0.5 * (p * p) - cos(q);
      case 1:
        return sigma1 * (0.5 * (q * q + p * p));
      default: {
        const S q2 = q * q;
        return sigma2 * (0.5 * (p * p) + 0.25 * (q2 * q2) - 0.5 * q2);
      }
    }
  }
  template <class S>
  Vec<S> gradient(std::size_t r, std::span<const S> y) const {
    const S& q = y[0];
    const S& p = y[1];
    switch (r) {
      case 0:
        return {sin(q), p};
      case 1:
        return {sigma1 * q, sigma1 * p};
      default:
        return {sigma2 * (q * q * q - q), sigma2 * p};
    }
  }
};

/// B = [[0, y1 y2], [-y1 y2, 0]], H = y1 - ln y1 + y2 - ln y2,
/// H_1 = sigma_1 (-ln y1 + ln y2). Defined on the open positive quadrant.
struct LotkaVolterra {
  double sigma1 = 0.1;

  template <class S>
  static void guard(std::span<const S> y) {
    if (!(value_of(y[0]) > 0.0 && value_of(y[1]) > 0.0))
      throw DomainError("lotka-volterra: state must lie in the open positive quadrant");
  }
  template <class S>
  Matrix<S> structure(std::span<const S> y) const {
    guard(y);
    Matrix<S> b(2, S(0.0));
    b(0, 1) = y[0] * y[1];
    b(1, 0) = -(y[0] * y[1]);
    return b;
  }
  template <class S>
  S hamiltonian(std::size_t r, std::span<const S> y) const {
    guard(y);
    if (r == 0) return y[0] - log(y[0]) + y[1] - log(y[1]);
    return sigma1 * (log(y[1]) - log(y[0]));
  }
  template <class S>
  Vec<S> gradient(std::size_t r, std::span<const S> y) const {
    guard(y);
    const S i1 = reciprocal(y[0]);
    const S i2 = reciprocal(y[1]);
    if (r == 0) return {1.0 - i1, 1.0 - i2};
    return {-sigma1 * i1, sigma1 * i2};
  }
  template <class S>
  S casimir(std::size_t, std::span<const S>) const {
    throw std::logic_error("lotka-volterra has no Casimirs");
  }
  template <class S>
  Vec<S> casimir_gradient(std::size_t, std::span<const S>) const {
    throw std::logic_error("lotka-volterra has no Casimirs");
  }
};

/// B = [[0, -y3, y2], [y3, 0, 0], [-y2, 0, 0]], H = y1^2/2 + y3,
/// H_1 = sigma_1 y1^2/2, H_2 = sigma_2 y3, Casimir C = (y2^2 + y3^2)^2 / 2.
struct MaxwellBloch {
  double sigma1 = 0.01;
  double sigma2 = 0.01;

  template <class S>
  Matrix<S> structure(std::span<const S> y) const {
    Matrix<S> b(3, S(0.0));
    b(0, 1) = -y[2];
    b(0, 2) = y[1];
    b(1, 0) = y[2];
    b(2, 0) = -y[1];
    return b;
  }
  template <class S>
  S hamiltonian(std::size_t r, std::span<const S> y) const {
    switch (r) {
      case 0:
        return 0.5 * (y[0] * y[0]) + y[2];
      case 1:
        return sigma1 * (0.5 * (y[0] * y[0]));
      default:
        return sigma2 * y[2];
    }
  }
  template <class S>
  Vec<S> gradient(std::size_t r, std::span<const S> y) const {
    switch (r) {
      case 0:
        return {y[0], S(0.0), S(1.0)};
      case 1:
        return {sigma1 * y[0], S(0.0), S(0.0)};
      default:
        return {S(0.0), S(0.0), S(sigma2)};
    }
  }
  template <class S>
  S casimir(std::size_t, std::span<const S> y) const {
    const S s = y[1] * y[1] + y[2] * y[2];
    return 0.5 * (s * s);
  }
  template <class S>
  Vec<S> casimir_gradient(std::size_t, std::span<const S> y) const {
    const S s = y[1] * y[1] + y[2] * y[2];
    return {S(0.0), 2.0 * (s * y[1]), 2.0 * (s * y[2])};
  }
};

}  // namespace models

namespace detail {

inline double uniform_at(std::uint64_t seed, std::uint64_t index, std::uint64_t lane, double lo, double hi) {
  const double u = detail::open_uniform(detail::counter_hash(seed, 0xC0FFEEull, index, lane));
  return lo + (hi - lo) * u;
}

inline std::function<Vec<double>(std::uint64_t, std::uint64_t)> box_sampler(std::size_t d, double lo, double hi) {
  return [d, lo, hi](std::uint64_t seed, std::uint64_t index) {
    Vec<double> y(d);
    for (std::size_t i = 0; i < d; ++i) {
      // keep away from the coordinate hyperplanes so vanishing residuals are not accidental
      double v = uniform_at(seed, index, i, lo, hi);
      if (std::abs(v) < 0.05) v += v < 0 ? -0.05 : 0.05;
      y[i] = v;
    }
    return y;
  };
}

}  // namespace detail

/// B = J^{-1} with Hamiltonians given by `base` (one of the canonical models
/// or any type with templated hamiltonian/gradient members).
template <class Base>
PoissonSystem canonical(std::string label, std::size_t k, Base base, std::vector<double> sigma) {
  SystemInfo info;
  info.label = std::move(label);
  info.dimension = 2 * k;
  info.noise_count = sigma.size();
  info.kind = SystemKind::canonical;
  info.sigma = std::move(sigma);
  info.canonical_half_dimension = k;
  info.sample_point = detail::box_sampler(2 * k, -2.0, 2.0);
  return make_system(std::move(info), models::Canonical<Base>{k, std::move(base)});
}

inline PoissonSystem harmonic_oscillator(std::vector<double> sigma = {0.1}) {
  if (sigma.empty()) throw std::invalid_argument("harmonic: need at least one noise");
  return canonical("harmonic", 1, models::Harmonic{sigma}, sigma);
}

inline PoissonSystem pendulum(std::vector<double> sigma = {0.01, 0.02, 0.03}) {
  if (sigma.empty()) throw std::invalid_argument("pendulum: need at least one noise");
  return canonical("pendulum", 1, models::Pendulum{sigma}, sigma);
}

inline PoissonSystem double_well(double sigma1 = 0.01, double sigma2 = 0.01) {
  return canonical("doublewell", 1, models::DoubleWell{sigma1, sigma2}, {sigma1, sigma2});
}

inline PoissonSystem lotka_volterra(double sigma1 = 0.1) {
  SystemInfo info;
  info.label = "lotka-volterra";
  info.dimension = 2;
  info.noise_count = 1;
  info.kind = SystemKind::lotka_volterra;
  info.sigma = {sigma1};
  info.in_domain = [](std::span<const double> y) { return y.size() == 2 && y[0] > 0.0 && y[1] > 0.0; };
  info.sample_point = detail::box_sampler(2, 0.2, 3.0);
  return make_system(std::move(info), models::LotkaVolterra{sigma1});
}

inline PoissonSystem maxwell_bloch(double sigma1 = 0.01, double sigma2 = 0.01) {
  SystemInfo info;
  info.label = "maxwell-bloch";
  info.dimension = 3;
  info.noise_count = 2;
  info.kind = SystemKind::maxwell_bloch;
  info.sigma = {sigma1, sigma2};
  info.sample_point = detail::box_sampler(3, -2.0, 2.0);
  return make_system(std::move(info), models::MaxwellBloch{sigma1, sigma2}, 1);
}

inline std::vector<std::string> builtin_labels() {
  return {"harmonic", "pendulum", "doublewell", "lotka-volterra", "maxwell-bloch"};
}

/// Builds a catalog system by label. An empty sigma selects the defaults.
inline PoissonSystem make_builtin(const std::string& label, const std::vector<double>& sigma = {}) {
  for (double s : sigma)
    if (!(s >= 0.0)) throw std::invalid_argument("sigma entries must be >= 0");
  auto need = [&](std::size_t n) {
    if (!sigma.empty() && sigma.size() != n)
      throw std::invalid_argument("system '" + label + "' takes " + std::to_string(n) + " sigma values");
  };
  if (label == "harmonic") return sigma.empty() ? harmonic_oscillator() : harmonic_oscillator(sigma);
  if (label == "pendulum") return sigma.empty() ? pendulum() : pendulum(sigma);
  if (label == "doublewell") {
    need(2);
    return sigma.empty() ? double_well() : double_well(sigma[0], sigma[1]);
  }
  if (label == "lotka-volterra") {
    need(1);
    return sigma.empty() ? lotka_volterra() : lotka_volterra(sigma[0]);
  }
  if (label == "maxwell-bloch") {
    need(2);
    return sigma.empty() ? maxwell_bloch() : maxwell_bloch(sigma[0], sigma[1]);
  }
  throw std::invalid_argument("unknown system '" + label + "'");
}

// --------------------------------------------------------------------------
// Structure checks and the Wong-Zakai random system
// --------------------------------------------------------------------------

struct StructureReport {
  double skew_residual = 0.0;
  double jacobi_residual = 0.0;
  double casimir_residual = 0.0;
  double tolerance = 1e-12;
  bool passed() const {
    return skew_residual <= tolerance && jacobi_residual <= tolerance && casimir_residual <= tolerance;
  }
};

/// Max residuals of skew-symmetry, the Jacobi identity (derivatives of B from
/// first-order jets) and the Casimir condition grad C^T B = 0.
inline StructureReport structure_check(const PoissonSystem& sys, const std::vector<Vec<double>>& points) {
  if (points.empty()) throw std::invalid_argument("structure_check: need at least one point");
  const std::size_t d = sys.dimension();
  auto space = JetSpace::make(std::vector<int>(d, 1), 1);
  StructureReport rep;
  for (const auto& y : points) {
    Vec<Jet> yj;
    for (std::size_t i = 0; i < d; ++i) yj.push_back(Jet::variable(space, i, y[i]));
    const Matrix<Jet> bj = sys.structure<Jet>(yj);
    Matrix<double> b(d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) b(i, j) = bj(i, j).constant();
    auto db = [&](std::size_t i, std::size_t j, std::size_t l) { return bj(i, j).coefficient(JetSpace::unit(l)); };
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) rep.skew_residual = std::max(rep.skew_residual, std::abs(b(i, j) + b(j, i)));
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        for (std::size_t k = 0; k < d; ++k) {
          double s = 0.0;
          for (std::size_t l = 0; l < d; ++l)
            s += db(i, j, l) * b(l, k) + db(j, k, l) * b(l, i) + db(k, i, l) * b(l, j);
          rep.jacobi_residual = std::max(rep.jacobi_residual, std::abs(s));
        }
    for (std::size_t c = 0; c < sys.casimir_count(); ++c) {
      const auto gc = sys.casimir_gradient<double>(c, y);
      for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) s += gc[i] * b(i, j);
        rep.casimir_residual = std::max(rep.casimir_residual, std::abs(s));
      }
    }
  }
  return rep;
}

inline std::vector<Vec<double>> sample_points(const PoissonSystem& sys, std::size_t n, std::uint64_t seed) {
  std::vector<Vec<double>> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) pts.push_back(sys.sample_point(seed, i));
  return pts;
}

/// Normalization of the random Hamiltonian. per_step: H + sum_r H_r dW_r / h.
/// times_h: h H + sum_r H_r dW_r (h times the former).
enum class HbarScaling { per_step, times_h };

template <class S>
S random_hamiltonian(const PoissonSystem& sys, std::span<const double> dw, double h, std::span<const S> y,
                     HbarScaling scaling = HbarScaling::per_step) {
  if (!(h != 0.0)) throw std::invalid_argument("random_hamiltonian: h must be nonzero");
  if (dw.size() != sys.noise_count()) throw std::invalid_argument("random_hamiltonian: wrong number of increments");
  const double lead = scaling == HbarScaling::per_step ? 1.0 : h;
  S acc = lead * sys.hamiltonian<S>(0, y);
  for (std::size_t r = 1; r <= sys.noise_count(); ++r) {
    const double c = scaling == HbarScaling::per_step ? dw[r - 1] / h : dw[r - 1];
    acc = acc + c * sys.hamiltonian<S>(r, y);
  }
  return acc;
}

/// y -> B(y) grad Hbar(y) = f(y) + sum_r (dW_r / h) g_r(y); callable on any scalar algebra.
class WongZakaiField {
 public:
  WongZakaiField(const PoissonSystem& sys, std::vector<double> dw, double h) : sys_(&sys), dw_(std::move(dw)), h_(h) {
    if (!(h != 0.0)) throw std::invalid_argument("wz_vector_field: h must be nonzero");
    if (dw_.size() != sys.noise_count()) throw std::invalid_argument("wz_vector_field: wrong number of increments");
  }

  template <class S>
  Vec<S> operator()(std::span<const S> y) const {
    Vec<S> out = sys_->drift<S>(y);
    for (std::size_t r = 1; r <= sys_->noise_count(); ++r) {
      const auto g = sys_->diffusion<S>(r, y);
      const double c = dw_[r - 1] / h_;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] + c * g[i];
    }
    return out;
  }

  /// grad of the per-step random Hamiltonian at y.
  Vec<double> hamiltonian_gradient(std::span<const double> y) const {
    Vec<double> g = sys_->gradient<double>(0, y);
    for (std::size_t r = 1; r <= sys_->noise_count(); ++r) {
      const auto gr = sys_->gradient<double>(r, y);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += dw_[r - 1] / h_ * gr[i];
    }
    return g;
  }

 private:
  const PoissonSystem* sys_;
  std::vector<double> dw_;
  double h_;
};

inline WongZakaiField wz_vector_field(const PoissonSystem& sys, std::vector<double> dw, double h) {
  return WongZakaiField(sys, std::move(dw), h);
}

}  // namespace spi
