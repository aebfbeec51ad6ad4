#pragma once

#include <algorithm>
#include <compare>
#include <cstddef>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace spi {

/// Exponent vector (a0, a1, ..., am) of h^a0 dW1^a1 ... dWm^am.
///
/// order() is |a| = a0 + ... + am; weight() counts h twice, so a term of
/// weight k scales like h^(k/2) in mean square.
class MultiIndex {
 public:
  MultiIndex() = default;
  explicit MultiIndex(std::vector<int> entries) : entries_(std::move(entries)) {
    if (entries_.empty()) throw std::invalid_argument("MultiIndex: needs at least the h entry");
    for (int e : entries_)
      if (e < 0) throw std::invalid_argument("MultiIndex: entries must be nonnegative");
  }
  MultiIndex(std::initializer_list<int> entries) : MultiIndex(std::vector<int>(entries)) {}

  static MultiIndex zero(std::size_t m) { return MultiIndex(std::vector<int>(m + 1, 0)); }
  /// 1 at position i (0 is h, r is the r-th noise).
  static MultiIndex unit(std::size_t m, std::size_t i) {
    std::vector<int> e(m + 1, 0);
    e.at(i) = 1;
    return MultiIndex(std::move(e));
  }

  std::size_t noise_count() const { return entries_.size() - 1; }
  std::size_t size() const { return entries_.size(); }
  int operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<int>& entries() const { return entries_; }

  int order() const { return std::accumulate(entries_.begin(), entries_.end(), 0); }
  int weight() const { return entries_.empty() ? 0 : entries_[0] + order(); }
  /// Sum of the noise exponents a1..am.
  int noise_order() const { return order() - entries_[0]; }

  MultiIndex operator+(const MultiIndex& o) const {
    if (o.size() != size()) throw std::invalid_argument("MultiIndex: size mismatch");
    std::vector<int> e(entries_);
    for (std::size_t i = 0; i < e.size(); ++i) e[i] += o.entries_[i];
    return MultiIndex(std::move(e));
  }

  std::string to_string() const {
    std::string s = "(";
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(entries_[i]);
    }
    return s + ")";
  }

  friend bool operator==(const MultiIndex&, const MultiIndex&) = default;
  friend auto operator<=>(const MultiIndex&, const MultiIndex&) = default;

 private:
  std::vector<int> entries_;
};

/// Canonical enumeration order: weight ascending, then entries in descending
/// lexicographic order (so h-heavy indices come first within a weight).
inline bool canonical_less(const MultiIndex& a, const MultiIndex& b) {
  if (a.weight() != b.weight()) return a.weight() < b.weight();
  return b.entries() < a.entries();
}

/// Every a in N^(m+1) with weight(a) <= max_weight, exactly once, in
/// canonical order.
inline std::vector<MultiIndex> enumerate_multiindices(std::size_t m, int max_weight) {
  if (max_weight < 0) throw std::invalid_argument("enumerate_multiindices: max_weight < 0");
  std::vector<MultiIndex> out;
  std::vector<int> e(m + 1, 0);
  // Depth-first over positions with the remaining weight budget.
  std::function<void(std::size_t, int)> rec = [&](std::size_t pos, int budget) {
    if (pos == e.size()) {
      out.emplace_back(e);
      return;
    }
    const int cost = pos == 0 ? 2 : 1;
    for (int k = 0; k * cost <= budget; ++k) {
      e[pos] = k;
      rec(pos + 1, budget - k * cost);
    }
    e[pos] = 0;
  };
  rec(0, max_weight);
  std::sort(out.begin(), out.end(), canonical_less);
  return out;
}

/// prod_i E[xi^(a1_i + a2_i)] for independent standard normals, i = 1..m:
///   prod_i 2^(-s/2) s! / (s/2)!,  s = a1_i + a2_i.
/// Throws std::invalid_argument if some s is odd (the moment vanishes and the
/// pair does not enter the order conditions).
inline double moment_constant(const MultiIndex& a1, const MultiIndex& a2) {
  if (a1.size() != a2.size()) throw std::invalid_argument("moment_constant: size mismatch");
  double k = 1.0;
  for (std::size_t i = 1; i < a1.size(); ++i) {
    const int s = a1[i] + a2[i];
    if (s % 2 != 0)
      throw std::invalid_argument("moment_constant: odd exponent sum at noise " + std::to_string(i));
    // (s-1)!! = s! / (2^(s/2) (s/2)!)
    for (int j = s - 1; j > 1; j -= 2) k *= j;
  }
  return k;
}

inline bool even_noise_sum(const MultiIndex& a1, const MultiIndex& a2) {
  for (std::size_t i = 1; i < a1.size(); ++i)
    if ((a1[i] + a2[i]) % 2 != 0) return false;
  return true;
}

}  // namespace spi
