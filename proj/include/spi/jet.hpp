#pragma once

// Truncated multivariate Taylor polynomials ("jets") with weighted degree.
//
// A jet lives in a JetSpace: n formal variables, each with a positive integer
// weight, and a maximum total weight W. Every stored monomial x^k satisfies
// sum_i weight_i * k_i <= W, and products drop anything heavier. Evaluating a
// program on jets instead of doubles therefore returns its Taylor expansion in
// the formal variables, truncated consistently.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "spi/scalar.hpp"

namespace spi {

/// Packed exponent vector: 4 bits per variable, variable 0 in the low nibble.
using JetKey = std::uint64_t;

class JetSpace {
 public:
  static constexpr std::size_t kMaxVariables = 16;
  static constexpr int kMaxExponent = 15;

  JetSpace(std::vector<int> weights, int max_weight)
      : weights_(std::move(weights)), max_weight_(max_weight) {
    if (weights_.size() > kMaxVariables)
      throw std::invalid_argument("JetSpace: at most 16 variables");
    if (max_weight_ < 0 || max_weight_ > kMaxExponent)
      throw std::invalid_argument("JetSpace: max weight must lie in [0, 15]");
    for (int w : weights_)
      if (w < 1) throw std::invalid_argument("JetSpace: variable weights must be >= 1");
  }

  static std::shared_ptr<const JetSpace> make(std::vector<int> weights, int max_weight) {
    return std::make_shared<const JetSpace>(std::move(weights), max_weight);
  }

  std::size_t variable_count() const { return weights_.size(); }
  int weight(std::size_t var) const { return weights_[var]; }
  const std::vector<int>& weights() const { return weights_; }
  int max_weight() const { return max_weight_; }

  int weight_of(JetKey key) const {
    int w = 0;
    for (std::size_t i = 0; i < weights_.size(); ++i) w += weights_[i] * exponent(key, i);
    return w;
  }

  static int exponent(JetKey key, std::size_t var) {
    return static_cast<int>((key >> (4 * var)) & 0xFu);
  }
  static JetKey unit(std::size_t var) { return JetKey{1} << (4 * var); }
  static JetKey with_exponent(JetKey key, std::size_t var, int e) {
    const JetKey mask = JetKey{0xF} << (4 * var);
    return (key & ~mask) | (static_cast<JetKey>(e) << (4 * var));
  }

  bool operator==(const JetSpace& o) const {
    return weights_ == o.weights_ && max_weight_ == o.max_weight_;
  }

 private:
  std::vector<int> weights_;
  int max_weight_;
};

class Jet {
 public:
  struct Term {
    JetKey key;
    double coeff;
    int weight;
  };

  Jet() = default;
  Jet(double c) {  // NOLINT: implicit embedding of reals is part of the algebra
    if (c != 0.0) terms_.push_back({0, c, 0});
  }
  Jet(std::shared_ptr<const JetSpace> space, double c) : Jet(c) { space_ = std::move(space); }

  /// value + x_var
  static Jet variable(std::shared_ptr<const JetSpace> space, std::size_t var, double value = 0.0) {
    if (var >= space->variable_count()) throw std::out_of_range("Jet::variable: no such variable");
    Jet j(space, value);
    const int w = space->weight(var);
    if (w <= space->max_weight()) j.terms_.push_back({JetSpace::unit(var), 1.0, w});
    return j;
  }

  /// c * x^key, dropped if heavier than the space allows.
  static Jet monomial(std::shared_ptr<const JetSpace> space, JetKey key, double c = 1.0) {
    Jet j(space, 0.0);
    const int w = space->weight_of(key);
    if (w <= space->max_weight() && c != 0.0) j.terms_.push_back({key, c, w});
    return j;
  }

  /// Sum of the given monomials; weights are recomputed and heavy terms dropped.
  static Jet from_terms(std::shared_ptr<const JetSpace> space, std::vector<Term> terms) {
    for (auto& t : terms) t.weight = space->weight_of(t.key);
    std::erase_if(terms, [&](const Term& t) { return t.weight > space->max_weight(); });
    Jet j(std::move(space), 0.0);
    j.terms_ = normalize(std::move(terms));
    return j;
  }

  const std::shared_ptr<const JetSpace>& space() const { return space_; }
  const std::vector<Term>& terms() const { return terms_; }
  bool empty() const { return terms_.empty(); }
  std::size_t size() const { return terms_.size(); }

  double constant() const {
    return (!terms_.empty() && terms_.front().key == 0) ? terms_.front().coeff : 0.0;
  }

  double coefficient(JetKey key) const {
    for (const auto& t : terms_)
      if (t.key == key) return t.coeff;
    return 0.0;
  }

  /// Largest absolute coefficient.
  double norm() const {
    double m = 0.0;
    for (const auto& t : terms_) m = std::max(m, std::abs(t.coeff));
    return m;
  }

  /// True when only the constant term can be nonzero.
  bool is_constant() const { return terms_.empty() || (terms_.size() == 1 && terms_[0].key == 0); }

  Jet operator-() const {
    Jet r = *this;
    for (auto& t : r.terms_) t.coeff = -t.coeff;
    return r;
  }

  Jet& operator+=(const Jet& o) { return *this = *this + o; }
  Jet& operator-=(const Jet& o) { return *this = *this - o; }
  Jet& operator*=(const Jet& o) { return *this = *this * o; }

  friend Jet operator+(const Jet& a, const Jet& b) { return combine(a, b, 1.0); }
  friend Jet operator-(const Jet& a, const Jet& b) { return combine(a, b, -1.0); }

  friend Jet operator*(const Jet& a, double c) {
    if (c == 0.0) return Jet(a.space_, 0.0);
    Jet r = a;
    for (auto& t : r.terms_) t.coeff *= c;
    return r;
  }
  friend Jet operator*(double c, const Jet& a) { return a * c; }
  friend Jet operator/(const Jet& a, double c) { return a * (1.0 / c); }

  friend Jet operator*(const Jet& a, const Jet& b) {
    if (a.is_constant()) return b * a.constant() + Jet(common_space(a, b), 0.0);
    if (b.is_constant()) return a * b.constant() + Jet(common_space(a, b), 0.0);
    auto space = common_space(a, b);
    const int max_w = space->max_weight();
    std::vector<Term> out;
    out.reserve(a.terms_.size() + b.terms_.size());
    // Terms are ordered by weight, so the inner loop can stop early.
    for (const auto& ta : a.terms_) {
      const int budget = max_w - ta.weight;
      if (budget < 0) break;
      for (const auto& tb : b.terms_) {
        if (tb.weight > budget) break;
        out.push_back({ta.key + tb.key, ta.coeff * tb.coeff, ta.weight + tb.weight});
      }
    }
    Jet r(space, 0.0);
    r.terms_ = normalize(std::move(out));
    return r;
  }

  friend Jet operator/(const Jet& a, const Jet& b);

  friend bool operator==(const Jet& a, const Jet& b) {
    if (a.terms_.size() != b.terms_.size()) return false;
    for (std::size_t i = 0; i < a.terms_.size(); ++i)
      if (a.terms_[i].key != b.terms_[i].key || a.terms_[i].coeff != b.terms_[i].coeff) return false;
    return true;
  }

  /// Keep only the terms satisfying pred(term).
  template <class Pred>
  Jet filter(Pred pred) const {
    Jet r(space_, 0.0);
    for (const auto& t : terms_)
      if (pred(t)) r.terms_.push_back(t);
    return r;
  }

  /// Partial derivative with respect to one formal variable.
  Jet derivative(std::size_t var) const {
    std::vector<Term> out;
    for (const auto& t : terms_) {
      const int e = JetSpace::exponent(t.key, var);
      if (e == 0) continue;
      out.push_back({t.key - JetSpace::unit(var), t.coeff * e, t.weight - space_->weight(var)});
    }
    Jet r(space_, 0.0);
    r.terms_ = normalize(std::move(out));
    return r;
  }

  /// Apply f(c + u) = sum_k taylor[k] u^k where c is the constant term.
  /// taylor[k] must hold f^(k)(c)/k! for k = 0..max weight.
  Jet compose(const std::vector<double>& taylor) const {
    Jet u = *this - Jet(constant());
    Jet result(space_, taylor.at(0));
    if (u.empty()) return result;
    Jet power = u;
    for (std::size_t k = 1; k < taylor.size() && !power.empty(); ++k) {
      result += power * taylor[k];
      power = power * u;
    }
    return result;
  }

  /// Number of Taylor coefficients compose() can use (max weight + 1).
  std::size_t series_length() const {
    return space_ ? static_cast<std::size_t>(space_->max_weight()) + 1 : 1;
  }

  friend std::ostream& operator<<(std::ostream& os, const Jet& j) {
    os << "Jet{";
    bool first = true;
    for (const auto& t : j.terms_) {
      if (!first) os << " + ";
      first = false;
      os << t.coeff;
      if (t.key != 0 && j.space_) {
        for (std::size_t v = 0; v < j.space_->variable_count(); ++v) {
          const int e = JetSpace::exponent(t.key, v);
          if (e > 0) os << "*x" << v << (e > 1 ? "^" + std::to_string(e) : "");
        }
      }
    }
    return os << "}";
  }

 private:
  static std::shared_ptr<const JetSpace> common_space(const Jet& a, const Jet& b) {
    if (!a.space_) return b.space_;
    if (!b.space_ || a.space_ == b.space_) return a.space_;
    if (!(*a.space_ == *b.space_)) throw std::invalid_argument("Jet: operands live in different spaces");
    return a.space_;
  }

  static bool order(const Term& x, const Term& y) {
    return x.weight != y.weight ? x.weight < y.weight : x.key < y.key;
  }

  static std::vector<Term> normalize(std::vector<Term> v) {
    std::sort(v.begin(), v.end(), order);
    std::vector<Term> out;
    out.reserve(v.size());
    for (const auto& t : v) {
      if (!out.empty() && out.back().key == t.key)
        out.back().coeff += t.coeff;
      else
        out.push_back(t);
    }
    std::erase_if(out, [](const Term& t) { return t.coeff == 0.0; });
    return out;
  }

  static Jet combine(const Jet& a, const Jet& b, double sign) {
    Jet r(common_space(a, b), 0.0);
    r.terms_.reserve(a.terms_.size() + b.terms_.size());
    auto ia = a.terms_.begin();
    auto ib = b.terms_.begin();
    while (ia != a.terms_.end() || ib != b.terms_.end()) {
      if (ib == b.terms_.end() || (ia != a.terms_.end() && order(*ia, *ib))) {
        r.terms_.push_back(*ia++);
      } else if (ia == a.terms_.end() || order(*ib, *ia)) {
        r.terms_.push_back({ib->key, sign * ib->coeff, ib->weight});
        ++ib;
      } else {
        const double c = ia->coeff + sign * ib->coeff;
        if (c != 0.0) r.terms_.push_back({ia->key, c, ia->weight});
        ++ia;
        ++ib;
      }
    }
    return r;
  }

  std::shared_ptr<const JetSpace> space_;
  std::vector<Term> terms_;  // ordered by (weight, key); no zero coefficients
};

inline double value_of(const Jet& j) { return j.constant(); }
inline double magnitude(const Jet& j) { return j.norm(); }

enum class Elementary { cos, sin, exp, log, sqrt, reciprocal };

/// Taylor coefficients f^(k)(c)/k!, k < n, of an elementary function at c.
inline std::vector<double> elementary_taylor(Elementary fn, double c, std::size_t n) {
  std::vector<double> t(n);
  double factorial = 1.0;
  switch (fn) {
    case Elementary::cos:
    case Elementary::sin: {
      const double s = std::sin(c), co = std::cos(c);
      const std::array<double, 4> cyc = fn == Elementary::cos ? std::array{co, -s, -co, s}
                                                              : std::array{s, co, -s, -co};
      for (std::size_t k = 0; k < n; ++k) {
        if (k > 0) factorial *= static_cast<double>(k);
        t[k] = cyc[k % 4] / factorial;
      }
      break;
    }
    case Elementary::exp: {
      const double e = std::exp(c);
      for (std::size_t k = 0; k < n; ++k) {
        if (k > 0) factorial *= static_cast<double>(k);
        t[k] = e / factorial;
      }
      break;
    }
    case Elementary::log: {
      if (!(c > 0.0)) throw DomainError("log: constant term must be positive");
      t[0] = std::log(c);
      double p = 1.0;
      for (std::size_t k = 1; k < n; ++k) {
        p /= c;
        t[k] = ((k % 2 == 1) ? 1.0 : -1.0) * p / static_cast<double>(k);
      }
      break;
    }
    case Elementary::sqrt: {
      if (!(c > 0.0)) throw DomainError("sqrt: constant term must be positive");
      // binom(1/2, k) c^(1/2 - k)
      double binom = 1.0;
      double p = std::sqrt(c);
      for (std::size_t k = 0; k < n; ++k) {
        if (k > 0) {
          binom *= (0.5 - static_cast<double>(k - 1)) / static_cast<double>(k);
          p /= c;
        }
        t[k] = binom * p;
      }
      break;
    }
    case Elementary::reciprocal: {
      if (c == 0.0) throw DomainError("division: constant term of divisor is zero");
      double p = 1.0 / c;
      for (std::size_t k = 0; k < n; ++k) {
        t[k] = ((k % 2 == 0) ? 1.0 : -1.0) * p;
        p /= c;
      }
      break;
    }
  }
  return t;
}

inline Jet compose_elementary(const Jet& j, Elementary fn) {
  return j.compose(elementary_taylor(fn, j.constant(), j.series_length()));
}

inline Jet cos(const Jet& j) { return compose_elementary(j, Elementary::cos); }
inline Jet sin(const Jet& j) { return compose_elementary(j, Elementary::sin); }
inline Jet exp(const Jet& j) { return compose_elementary(j, Elementary::exp); }
inline Jet log(const Jet& j) { return compose_elementary(j, Elementary::log); }
inline Jet sqrt(const Jet& j) { return compose_elementary(j, Elementary::sqrt); }
inline Jet reciprocal(const Jet& j) { return compose_elementary(j, Elementary::reciprocal); }

inline Jet operator/(const Jet& a, const Jet& b) { return a * reciprocal(b); }

/// Max over components of the largest coefficient.
inline double magnitude(std::span<const Jet> v) {
  double m = 0.0;
  for (const auto& j : v) m = std::max(m, j.norm());
  return m;
}

}  // namespace spi
