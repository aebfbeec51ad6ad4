#pragma once

#include <cmath>
#include <concepts>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spi {

// Unqualified calls to elementary functions inside spi resolve to these for
// plain doubles and to the Jet overloads (found by ADL) for jets.
using std::cos;
using std::exp;
using std::log;
using std::sin;
using std::sqrt;

template <class S>
using Vec = std::vector<S>;

/// Raised when a function is evaluated outside its domain (log of a
/// nonpositive number, Lotka-Volterra state off the positive quadrant, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Ring operations, embedding of reals and the elementary functions the
/// builtin systems need. Satisfied by double and by Jet.
template <class S>
concept ScalarAlgebra = requires(const S a, const S b, double c) {
  { a + b } -> std::convertible_to<S>;
  { a - b } -> std::convertible_to<S>;
  { a * b } -> std::convertible_to<S>;
  { a / b } -> std::convertible_to<S>;
  { a * c } -> std::convertible_to<S>;
  { c * a } -> std::convertible_to<S>;
  { a + c } -> std::convertible_to<S>;
  { -a } -> std::convertible_to<S>;
  { S(c) };
  { cos(a) } -> std::convertible_to<S>;
  { sin(a) } -> std::convertible_to<S>;
  { exp(a) } -> std::convertible_to<S>;
  { log(a) } -> std::convertible_to<S>;
};

/// Real value at the expansion point (the number itself for doubles).
inline double value_of(double x) { return x; }

inline double reciprocal(double x) {
  if (x == 0.0) throw DomainError("division by zero");
  return 1.0 / x;
}

/// Max-abs size used by the implicit solver's residual test.
inline double magnitude(double x) { return std::abs(x); }

template <class S>
Vec<S> to_vec(std::span<const double> y) {
  return Vec<S>(y.begin(), y.end());
}

template <class S>
Vec<double> values_of(std::span<const S> y) {
  Vec<double> out;
  out.reserve(y.size());
  for (const auto& v : y) out.push_back(value_of(v));
  return out;
}

/// Dense row-major square matrix over a scalar algebra.
template <class S>
class Matrix {
 public:
  Matrix() = default;
  explicit Matrix(std::size_t n, const S& fill = S(0.0)) : n_(n), a_(n * n, fill) {}

  std::size_t size() const { return n_; }
  S& operator()(std::size_t i, std::size_t j) { return a_[i * n_ + j]; }
  const S& operator()(std::size_t i, std::size_t j) const { return a_[i * n_ + j]; }

  Vec<S> apply(std::span<const S> v) const {
    Vec<S> out(n_, S(0.0));
    for (std::size_t i = 0; i < n_; ++i) {
      S acc(0.0);
      for (std::size_t j = 0; j < n_; ++j) acc = acc + (*this)(i, j) * v[j];
      out[i] = acc;
    }
    return out;
  }

 private:
  std::size_t n_ = 0;
  std::vector<S> a_;
};

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace spi
