#pragma once

// Brownian increments for one-step schemes.
//
// Every normal variate is a pure function of (master seed, trajectory id,
// step, noise index), so trajectories can be generated in any order or in
// parallel and still reproduce bit for bit.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spi {

struct SeedSpec {
  std::uint64_t master = 0;
  std::uint64_t trajectory = 0;
};

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t counter_hash(std::uint64_t master, std::uint64_t trajectory, std::uint64_t step,
                                     std::uint64_t lane) {
  std::uint64_t x = splitmix64(master ^ 0x5851F42D4C957F2Dull);
  x = splitmix64(x ^ trajectory);
  x = splitmix64(x ^ step);
  return splitmix64(x ^ lane);
}

// Uniform on the open interval (0, 1) from the top 53 bits.
constexpr double open_uniform(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace detail

/// Standard normal variate attached to (seed, step, noise) via Box-Muller.
inline double standard_normal_at(const SeedSpec& seed, std::uint64_t step, std::uint64_t noise) {
  const double u1 = detail::open_uniform(detail::counter_hash(seed.master, seed.trajectory, step, 2 * noise));
  const double u2 = detail::open_uniform(detail::counter_hash(seed.master, seed.trajectory, step, 2 * noise + 1));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// n_steps x m matrix of increments dW(n, r) ~ N(0, h), row-major.
class IncrementBatch {
 public:
  IncrementBatch() = default;
  IncrementBatch(double h, std::size_t m, std::size_t n_steps)
      : h_(h), m_(m), n_steps_(n_steps), dw_(m * n_steps, 0.0) {}

  double h() const { return h_; }
  std::size_t noise_count() const { return m_; }
  std::size_t n_steps() const { return n_steps_; }

  double& operator()(std::size_t n, std::size_t r) { return dw_[n * m_ + r]; }
  double operator()(std::size_t n, std::size_t r) const { return dw_[n * m_ + r]; }
  std::span<const double> step(std::size_t n) const { return {dw_.data() + n * m_, m_}; }
  const std::vector<double>& data() const { return dw_; }

  friend bool operator==(const IncrementBatch&, const IncrementBatch&) = default;

 private:
  double h_ = 0.0;
  std::size_t m_ = 0;
  std::size_t n_steps_ = 0;
  std::vector<double> dw_;
};

inline IncrementBatch sample_increments(const SeedSpec& seed, double h, std::size_t m, std::size_t n_steps) {
  if (!(h > 0.0)) throw std::invalid_argument("sample_increments: h must be positive");
  if (m < 1) throw std::invalid_argument("sample_increments: need at least one noise");
  if (n_steps < 1) throw std::invalid_argument("sample_increments: need at least one step");
  IncrementBatch batch(h, m, n_steps);
  const double sh = std::sqrt(h);
  for (std::size_t n = 0; n < n_steps; ++n)
    for (std::size_t r = 0; r < m; ++r) batch(n, r) = sh * standard_normal_at(seed, n, r);
  return batch;
}

/// Clamp of the standardized increments at +-A_h, A_h = sqrt(rho |ln h|).
struct TruncationPolicy {
  double rho = 1.0;
  bool enabled = false;

  double threshold(double h) const {
    if (!(h > 0.0 && h < 1.0)) throw std::invalid_argument("TruncationPolicy: threshold needs 0 < h < 1");
    return std::sqrt(rho * std::abs(std::log(h)));
  }
};

inline IncrementBatch truncate_increments(const IncrementBatch& batch, const TruncationPolicy& policy) {
  if (!policy.enabled) return batch;
  if (policy.rho < 1.0) throw std::invalid_argument("truncate_increments: rho must be >= 1");
  if (!(batch.h() < 1.0))
    throw std::invalid_argument("truncate_increments: truncation needs h < 1 (threshold would vanish)");
  const double a = policy.threshold(batch.h());
  const double sh = std::sqrt(batch.h());
  IncrementBatch out = batch;
  for (std::size_t n = 0; n < batch.n_steps(); ++n)
    for (std::size_t r = 0; r < batch.noise_count(); ++r) {
      const double xi = batch(n, r) / sh;
      if (xi > a)
        out(n, r) = sh * a;
      else if (xi < -a)
        out(n, r) = -sh * a;
    }
  return out;
}

/// Piecewise-linear interpolation of W on [t_n, t_n + h].
inline double wong_zakai_value(double t, double t_n, double h, double w_at_tn, double dw) {
  if (t < t_n || t > t_n + h)
    throw std::invalid_argument("wong_zakai_value: t lies outside [t_n, t_n + h]");
  if (t == t_n + h) return w_at_tn + dw;
  return w_at_tn + (t - t_n) / h * dw;
}

/// Coarse increments on the same Brownian path: each coarse increment is
/// the sum of `factor` consecutive fine ones.
inline IncrementBatch aggregate_increments(const IncrementBatch& fine, std::size_t factor) {
  if (factor < 1) throw std::invalid_argument("aggregate_increments: factor must be >= 1");
  if (fine.n_steps() % factor != 0)
    throw std::invalid_argument("aggregate_increments: " + std::to_string(fine.n_steps()) +
                                " steps not divisible by " + std::to_string(factor));
  if (factor == 1) return fine;
  IncrementBatch coarse(fine.h() * static_cast<double>(factor), fine.noise_count(), fine.n_steps() / factor);
  for (std::size_t n = 0; n < coarse.n_steps(); ++n)
    for (std::size_t r = 0; r < fine.noise_count(); ++r) {
      double s = 0.0;
      for (std::size_t k = 0; k < factor; ++k) s += fine(n * factor + k, r);
      coarse(n, r) = s;
    }
  return coarse;
}

}  // namespace spi
