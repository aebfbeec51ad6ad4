#pragma once

// Backward error analysis on jets.
//
// One jet space holds the formal step size h (weight 2), the increments
// w_1..w_m (weight 1) and a displacement e_1..e_d of the base point (weight 1).
// A coefficient d_alpha is then the e-polynomial sitting at the hw-monomial
// h^a0 w^a, so every table carries enough of the y-dependence to take the
// derivatives the flow and the matching need.

#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "spi/integrators.hpp"
#include "spi/jet.hpp"
#include "spi/multi_index.hpp"
#include "spi/systems.hpp"

namespace spi {

class BeaLayout {
 public:
  BeaLayout(std::size_t m, std::size_t d, int max_weight) : m_(m), d_(d), max_weight_(max_weight) {
    if (max_weight < 1) throw std::invalid_argument("BEA: max weight must be >= 1");
    if (1 + m + d > JetSpace::kMaxVariables)
      throw std::invalid_argument("BEA: 1 + m + d must not exceed " + std::to_string(JetSpace::kMaxVariables));
    std::vector<int> weights(1 + m + d, 1);
    weights[0] = 2;
    space_ = JetSpace::make(std::move(weights), max_weight);
    for (std::size_t i = 0; i <= m; ++i) hw_mask_ |= JetKey{0xF} << (4 * i);
  }

  const std::shared_ptr<const JetSpace>& space() const { return space_; }
  std::size_t noise_count() const { return m_; }
  std::size_t dimension() const { return d_; }
  int max_weight() const { return max_weight_; }
  JetKey hw_mask() const { return hw_mask_; }

  std::size_t e_var(std::size_t i) const { return 1 + m_ + i; }
  Jet h() const { return Jet::variable(space_, 0); }
  Jet w(std::size_t r) const { return Jet::variable(space_, r); }  // r = 1..m

  /// y0 + e as a jet vector.
  Vec<Jet> state(std::span<const double> y0) const {
    Vec<Jet> y;
    for (std::size_t i = 0; i < d_; ++i) y.push_back(Jet::variable(space_, e_var(i), y0[i]));
    return y;
  }

  JetKey key_of(const MultiIndex& a) const {
    if (a.noise_count() != m_) throw std::invalid_argument("BEA: multi-index has the wrong noise count");
    JetKey k = 0;
    for (std::size_t i = 0; i <= m_; ++i) k = JetSpace::with_exponent(k, i, a[i]);
    return k;
  }

  MultiIndex index_of(JetKey hw) const {
    std::vector<int> e(m_ + 1);
    for (std::size_t i = 0; i <= m_; ++i) e[i] = JetSpace::exponent(hw, i);
    return MultiIndex(std::move(e));
  }

  Jet monomial(const MultiIndex& a) const { return Jet::monomial(space_, key_of(a)); }

  /// Splits jets into e-polynomials per hw-monomial (zero polynomials omitted).
  std::map<MultiIndex, Vec<Jet>> split(std::span<const Jet> v) const {
    std::map<JetKey, std::vector<std::vector<Jet::Term>>> buckets;
    for (std::size_t i = 0; i < v.size(); ++i)
      for (const auto& t : v[i].terms()) {
        auto& b = buckets[t.key & hw_mask_];
        if (b.empty()) b.resize(v.size());
        b[i].push_back({t.key & ~hw_mask_, t.coeff, 0});
      }
    std::map<MultiIndex, Vec<Jet>> out;
    for (auto& [hw, comps] : buckets) {
      Vec<Jet> poly;
      for (auto& c : comps) poly.push_back(Jet::from_terms(space_, std::move(c)));
      out.emplace(index_of(hw), std::move(poly));
    }
    return out;
  }

  /// sum_alpha poly_alpha * h^a0 w^a
  Vec<Jet> assemble(const std::map<MultiIndex, Vec<Jet>>& entries) const {
    Vec<Jet> out(d_, Jet(space_, 0.0));
    for (const auto& [a, poly] : entries) {
      const Jet mono = monomial(a);
      for (std::size_t i = 0; i < d_; ++i) out[i] = out[i] + poly[i] * mono;
    }
    return out;
  }

 private:
  std::size_t m_, d_;
  int max_weight_;
  std::shared_ptr<const JetSpace> space_;
  JetKey hw_mask_ = 0;
};

enum class TableKind { method, flow, modified };

inline std::string to_string(TableKind k) {
  switch (k) {
    case TableKind::method:
      return "method";
    case TableKind::flow:
      return "flow";
    default:
      return "modified";
  }
}

/// Coefficients keyed by multi-index (|alpha| >= 1). Each entry is the
/// e-polynomial around the base point; value() is its constant term.
class CoefficientTable {
 public:
  CoefficientTable(std::shared_ptr<const BeaLayout> layout, Vec<double> base, TableKind kind)
      : layout_(std::move(layout)), base_(std::move(base)), kind_(kind) {}

  const BeaLayout& layout() const { return *layout_; }
  const std::shared_ptr<const BeaLayout>& layout_ptr() const { return layout_; }
  const Vec<double>& base_point() const { return base_; }
  TableKind kind() const { return kind_; }
  std::size_t noise_count() const { return layout_->noise_count(); }
  std::size_t dimension() const { return layout_->dimension(); }
  int max_weight() const { return layout_->max_weight(); }
  const std::map<MultiIndex, Vec<Jet>>& entries() const { return entries_; }

  void set(const MultiIndex& a, Vec<Jet> poly) {
    if (a.order() < 1) throw std::invalid_argument("CoefficientTable: |alpha| must be >= 1");
    if (a.weight() > max_weight()) throw std::invalid_argument("CoefficientTable: alpha heavier than the table");
    entries_[a] = std::move(poly);
  }

  bool contains(const MultiIndex& a) const { return entries_.count(a) > 0; }

  /// e-polynomial of alpha (zero if absent).
  Vec<Jet> poly(const MultiIndex& a) const {
    auto it = entries_.find(a);
    if (it != entries_.end()) return it->second;
    return Vec<Jet>(dimension(), Jet(layout_->space(), 0.0));
  }

  Vec<double> value(const MultiIndex& a) const {
    Vec<double> v(dimension(), 0.0);
    auto it = entries_.find(a);
    if (it != entries_.end())
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = it->second[i].constant();
    return v;
  }

  /// d x d Jacobian of the entry at the base point (from its e-linear part).
  std::vector<Vec<double>> jacobian(const MultiIndex& a) const {
    const auto p = poly(a);
    std::vector<Vec<double>> jac(dimension(), Vec<double>(dimension(), 0.0));
    for (std::size_t i = 0; i < dimension(); ++i)
      for (std::size_t j = 0; j < dimension(); ++j)
        jac[i][j] = p[i].coefficient(JetSpace::unit(layout_->e_var(j)));
    return jac;
  }

  /// Every alpha with 1 <= |alpha| and weight <= max weight, canonical order.
  std::vector<MultiIndex> indices() const {
    std::vector<MultiIndex> out;
    for (auto& a : enumerate_multiindices(noise_count(), max_weight()))
      if (a.order() >= 1) out.push_back(a);
    return out;
  }

 private:
  std::shared_ptr<const BeaLayout> layout_;
  Vec<double> base_;
  TableKind kind_;
  std::map<MultiIndex, Vec<Jet>> entries_;
};

namespace detail {

inline CoefficientTable table_from_jets(const std::shared_ptr<const BeaLayout>& layout, std::span<const double> y,
                                        std::span<const Jet> result, TableKind kind) {
  CoefficientTable t(layout, Vec<double>(y.begin(), y.end()), kind);
  for (auto& [a, poly] : layout->split(result))
    if (a.order() >= 1) t.set(a, std::move(poly));
  return t;
}

/// Time-1 flow of de/dtau = G(e) started at e: y0 + e + sum_k L^k(e)/k!,
/// L u = sum_j du/de_j G_j. G must have no weight-0 terms.
inline Vec<Jet> lie_flow(const BeaLayout& layout, std::span<const double> y0, std::span<const Jet> g) {
  const std::size_t d = layout.dimension();
  Vec<Jet> out = layout.state(y0);
  for (std::size_t i = 0; i < d; ++i) {
    Jet term = Jet::variable(layout.space(), layout.e_var(i));
    for (int k = 1; k <= layout.max_weight(); ++k) {
      Jet next(layout.space(), 0.0);
      for (std::size_t j = 0; j < d; ++j) {
        const Jet dj = term.derivative(layout.e_var(j));
        if (!dj.empty()) next = next + dj * g[j];
      }
      term = next * (1.0 / k);
      if (term.empty()) break;
      out[i] = out[i] + term;
    }
  }
  return out;
}

inline void require_weight(int w, int need, const char* what) {
  if (w < need)
    throw std::invalid_argument(std::string(what) + ": truncation weight " + std::to_string(w) + " below " +
                                std::to_string(need));
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs_diff(std::span<const Jet> a, std::span<const Jet> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, (a[i] - b[i]).norm());
  return m;
}

}  // namespace detail

/// d_alpha of one step with formal h and increments.
inline CoefficientTable method_coefficients(const Stepper& st, const PoissonSystem& sys, std::span<const double> y,
                                            int max_weight = 6) {
  detail::require_weight(max_weight, 2, "method_coefficients");
  if (y.size() != sys.dimension()) throw std::invalid_argument("method_coefficients: wrong base point dimension");
  auto layout = std::make_shared<const BeaLayout>(sys.noise_count(), sys.dimension(), max_weight);
  const Vec<Jet> yj = layout->state(y);
  Vec<Jet> dw;
  for (std::size_t r = 1; r <= sys.noise_count(); ++r) dw.push_back(layout->w(r));
  const Vec<Jet> next = step<Jet>(st, sys, yj, layout->h(), dw);
  return detail::table_from_jets(layout, y, next, TableKind::method);
}

/// phi_alpha of the exact flow of the Wong-Zakai field over one step.
inline CoefficientTable flow_coefficients(const PoissonSystem& sys, std::span<const double> y, int max_weight = 6) {
  detail::require_weight(max_weight, 1, "flow_coefficients");
  auto layout = std::make_shared<const BeaLayout>(sys.noise_count(), sys.dimension(), max_weight);
  const Vec<Jet> yj = layout->state(y);
  Vec<Jet> g = sys.drift<Jet>(yj);
  const Jet h = layout->h();
  for (auto& v : g) v = h * v;
  for (std::size_t r = 1; r <= sys.noise_count(); ++r) {
    const auto gr = sys.diffusion<Jet>(r, yj);
    const Jet w = layout->w(r);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = g[i] + w * gr[i];
  }
  return detail::table_from_jets(layout, y, detail::lie_flow(*layout, y, g), TableKind::flow);
}

/// Modified field: f_alpha table with h F~ = sum f_alpha h^a0 dW^a.
class ModifiedField {
 public:
  explicit ModifiedField(CoefficientTable table) : table_(std::move(table)) {
    if (table_.kind() != TableKind::modified) throw std::invalid_argument("ModifiedField: table must be of kind modified");
  }

  const CoefficientTable& table() const { return table_; }

  /// F~ at the base point for concrete (h, dW): sum f_alpha h^(a0-1) dW^a.
  Vec<double> evaluate(double h, std::span<const double> dw) const {
    if (dw.size() != table_.noise_count()) throw std::invalid_argument("ModifiedField: wrong number of increments");
    Vec<double> out(table_.dimension(), 0.0);
    for (const auto& [a, poly] : table_.entries()) {
      double c = std::pow(h, a[0] - 1);
      for (std::size_t r = 1; r < a.size(); ++r) c *= std::pow(dw[r - 1], a[r]);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += c * poly[i].constant();
    }
    return out;
  }

  /// Exact one-step flow coefficients of this field, through the table weight.
  CoefficientTable flow() const {
    const auto& layout = table_.layout();
    const auto g = layout.assemble(table_.entries());
    return detail::table_from_jets(table_.layout_ptr(), table_.base_point(),
                                   detail::lie_flow(layout, table_.base_point(), g), TableKind::flow);
  }

 private:
  CoefficientTable table_;
};

struct MatchingOptions {
  double consistency_tolerance = 1e-10;
};

/// Solves weight by weight for f_alpha so that the flow of the modified field
/// reproduces the table.
inline ModifiedField modified_coefficients_matching(const CoefficientTable& method, const PoissonSystem& sys,
                                                    const MatchingOptions& opt = {}) {
  if (method.kind() == TableKind::modified)
    throw std::invalid_argument("modified_coefficients_matching: needs a method or flow table");
  const auto& layout = method.layout();
  const auto y = method.base_point();
  const std::size_t m = method.noise_count();
  const Vec<Jet> yj = layout.state(y);

  // consistency: |alpha| = 1 entries must be the drift and the diffusions
  auto check = [&](const MultiIndex& a, Vec<Jet> expect, const std::string& what) {
    // d_alpha only carries e-degrees up to max weight - weight(alpha)
    const int room = method.max_weight() - a.weight();
    for (auto& c : expect) c = c.filter([&](const Jet::Term& t) { return t.weight <= room; });
    const double err = detail::max_abs_diff(std::span<const Jet>(method.poly(a)), std::span<const Jet>(expect));
    if (err > opt.consistency_tolerance * std::max(1.0, max_abs(method.value(a))))
      throw std::invalid_argument("method not consistent: d" + a.to_string() + " differs from the " + what +
                                  " by " + std::to_string(err));
  };
  if (method.max_weight() >= 2) check(MultiIndex::unit(m, 0), sys.drift<Jet>(yj), "drift");
  for (std::size_t r = 1; r <= m; ++r) check(MultiIndex::unit(m, r), sys.diffusion<Jet>(r, yj), "diffusion");

  CoefficientTable f(method.layout_ptr(), y, TableKind::modified);
  for (int w = 1; w <= method.max_weight(); ++w) {
    const auto g = layout.assemble(f.entries());
    const auto phi = layout.split(detail::lie_flow(layout, y, g));
    for (const auto& a : method.indices()) {
      if (a.weight() != w) continue;
      Vec<Jet> fa = method.poly(a);
      if (auto it = phi.find(a); it != phi.end())
        for (std::size_t i = 0; i < fa.size(); ++i) fa[i] = fa[i] - it->second[i];
      bool zero = true;
      for (const auto& c : fa) zero = zero && c.empty();
      if (!zero) f.set(a, std::move(fa));
    }
  }
  return ModifiedField(std::move(f));
}

/// f_alpha = d_alpha - 1/2 sum_{k1 + k2 = alpha, |k1| = |k2| = 1} d'_{k2} d_{k1}
/// for |alpha| = 2; |alpha| = 1 returns d_alpha.
inline Vec<double> modified_coefficients_direct(const CoefficientTable& method, const MultiIndex& a) {
  if (a.order() < 1 || a.order() > 2)
    throw std::invalid_argument("modified_coefficients_direct: only 1 <= |alpha| <= 2 is supported");
  Vec<double> out = method.value(a);
  if (a.order() == 1) return out;
  const std::size_t m = method.noise_count();
  for (std::size_t i1 = 0; i1 <= m; ++i1)
    for (std::size_t i2 = 0; i2 <= m; ++i2) {
      const auto k1 = MultiIndex::unit(m, i1);
      const auto k2 = MultiIndex::unit(m, i2);
      if (!(k1 + k2 == a)) continue;
      if ((k1 + k2).weight() > method.max_weight()) continue;
      const auto jac = method.jacobian(k2);
      const auto v = method.value(k1);
      for (std::size_t i = 0; i < out.size(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < out.size(); ++j) s += jac[i][j] * v[j];
        out[i] -= 0.5 * s;
      }
    }
  return out;
}

// --------------------------------------------------------------------------
// Regrouping into modified drift and diffusion
// --------------------------------------------------------------------------

struct RegroupedTerm {
  MultiIndex alpha;
  /// 0 for the drift, r for the r-th diffusion.
  std::size_t channel = 0;
  /// Power of h and the increments multiplying f_alpha inside the channel:
  /// h^(a0-1) for the drift, h^a0 dW^(alpha - e_r) for channel r.
  MultiIndex factor;
  Vec<double> value;
};

struct RegroupedField {
  std::vector<RegroupedTerm> drift;
  std::vector<std::vector<RegroupedTerm>> diffusion;  // index r-1
};

/// Pure-h terms go to the drift; every other term to the noise channel with
/// the smallest nonzero exponent (ties to the smaller index).
inline RegroupedField regroup_modified_field(const ModifiedField& field) {
  const auto& t = field.table();
  const std::size_t m = t.noise_count();
  RegroupedField out;
  out.diffusion.resize(m);
  for (const auto& a : t.indices()) {
    if (!t.contains(a)) continue;
    RegroupedTerm term{a, 0, a, t.value(a)};
    if (a.noise_order() == 0) {
      std::vector<int> e = a.entries();
      e[0] -= 1;
      term.factor = MultiIndex(std::move(e));
      out.drift.push_back(std::move(term));
      continue;
    }
    std::size_t best = 0;
    for (std::size_t r = 1; r <= m; ++r)
      if (a[r] > 0 && (best == 0 || a[r] < a[best])) best = r;
    std::vector<int> e = a.entries();
    e[best] -= 1;
    term.channel = best;
    term.factor = MultiIndex(std::move(e));
    out.diffusion[best - 1].push_back(std::move(term));
  }
  return out;
}

/// Exponent of h and dW carried by a regrouped term once multiplied back by
/// h (drift) or dW_r (channel r): always alpha.
inline MultiIndex reassembled_index(const RegroupedTerm& t) {
  std::vector<int> e = t.factor.entries();
  if (t.channel == 0)
    e[0] += 1;
  else
    e[t.channel] += 1;
  return MultiIndex(std::move(e));
}

// --------------------------------------------------------------------------
// Order conditions, certificates, effective order
// --------------------------------------------------------------------------

/// C_k = sum over weights k1 + k2 = 2k (k1, k2 >= 1) and pairs with even
/// noise sums of K <phi_a1 - d_a1, phi_a2 - d_a2>.
inline double order_condition_residual(const CoefficientTable& flow, const CoefficientTable& method, int k) {
  if (k < 1) throw std::invalid_argument("order_condition_residual: k must be >= 1");
  if (flow.noise_count() != method.noise_count() || flow.base_point() != method.base_point())
    throw std::invalid_argument("order_condition_residual: tables do not share a base point");
  const int need = 2 * k - 1;
  if (flow.max_weight() < need || method.max_weight() < need)
    throw std::invalid_argument("order_condition_residual: tables need max weight >= " + std::to_string(need));
  std::map<MultiIndex, Vec<double>> diff;
  for (const auto& a : flow.indices()) {
    if (a.weight() > need) continue;
    const auto p = flow.value(a);
    const auto d = method.value(a);
    Vec<double> v(p.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = p[i] - d[i];
    diff.emplace(a, std::move(v));
  }
  double c = 0.0;
  for (const auto& [a1, v1] : diff)
    for (const auto& [a2, v2] : diff) {
      if (a1.weight() + a2.weight() != 2 * k) continue;
      if (!even_noise_sum(a1, a2)) continue;
      double dot = 0.0;
      for (std::size_t i = 0; i < v1.size(); ++i) dot += v1[i] * v2[i];
      c += moment_constant(a1, a2) * dot;
    }
  return c;
}

struct CertificateReport {
  double casimir_tangency = 0.0;
  /// Per candidate: min over the sign s of max ||f_alpha - s B grad H_alpha||.
  std::map<MultiIndex, double> hamiltonian_residual;
  std::map<MultiIndex, int> hamiltonian_sign;
  /// Canonical systems: max asymmetry of the Jacobian of J f_alpha.
  double jacobian_asymmetry = 0.0;
  std::size_t points = 0;
};

using CandidateHamiltonian = std::function<Jet(std::span<const Jet>)>;

/// Structure checks of modified fields computed at several base points.
inline CertificateReport poisson_certificate(const std::vector<ModifiedField>& fields, const PoissonSystem& sys,
                                             const std::map<MultiIndex, CandidateHamiltonian>& candidates = {}) {
  CertificateReport rep;
  rep.points = fields.size();
  std::map<MultiIndex, std::array<double, 2>> worst;  // sign +, sign -
  for (const auto& field : fields) {
    const auto& t = field.table();
    const auto& y = t.base_point();
    const std::size_t d = y.size();
    for (std::size_t c = 0; c < sys.casimir_count(); ++c) {
      const auto gc = sys.casimir_gradient<double>(c, y);
      for (const auto& [a, poly] : t.entries()) {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) s += gc[i] * poly[i].constant();
        rep.casimir_tangency = std::max(rep.casimir_tangency, std::abs(s));
      }
    }
    if (!candidates.empty()) {
      auto space = JetSpace::make(std::vector<int>(d, 1), 1);
      Vec<Jet> yj;
      for (std::size_t i = 0; i < d; ++i) yj.push_back(Jet::variable(space, i, y[i]));
      const auto b = sys.structure<double>(y);
      for (const auto& [a, hfn] : candidates) {
        const Jet hj = hfn(yj);
        Vec<double> grad(d);
        for (std::size_t i = 0; i < d; ++i) grad[i] = hj.coefficient(JetSpace::unit(i));
        const auto bg = b.apply(grad);
        const auto fa = t.value(a);
        auto& w = worst.try_emplace(a, std::array<double, 2>{0.0, 0.0}).first->second;
        for (int s = 0; s < 2; ++s) {
          const double sign = s == 0 ? 1.0 : -1.0;
          for (std::size_t i = 0; i < d; ++i) w[s] = std::max(w[s], std::abs(fa[i] - sign * bg[i]));
        }
      }
    }
    if (sys.is_canonical()) {
      const std::size_t k = sys.canonical_half_dimension();
      for (const auto& [a, poly] : t.entries()) {
        const auto jac = t.jacobian(a);
        // J = [[0, I], [-I, 0]]
        std::vector<Vec<double>> m(d, Vec<double>(d));
        for (std::size_t i = 0; i < d; ++i)
          for (std::size_t j = 0; j < d; ++j) m[i][j] = i < k ? jac[i + k][j] : -jac[i - k][j];
        for (std::size_t i = 0; i < d; ++i)
          for (std::size_t j = 0; j < d; ++j)
            rep.jacobian_asymmetry = std::max(rep.jacobian_asymmetry, std::abs(m[i][j] - m[j][i]));
      }
    }
  }
  for (const auto& [a, w] : worst) {
    rep.hamiltonian_residual[a] = std::min(w[0], w[1]);
    rep.hamiltonian_sign[a] = w[0] <= w[1] ? 1 : -1;
  }
  return rep;
}

struct EffectiveOrder {
  int p = 0;
  /// True when no group through the truncation weight was nonzero (p is then
  /// the max weight).
  bool all_vanish = false;
  double group_norm = 0.0;
};

/// Smallest j >= 2 such that some f_alpha with |alpha| >= 2 and weight j is
/// nonzero at the base point.
inline EffectiveOrder effective_order(const ModifiedField& field, double tolerance = 1e-10) {
  const auto& t = field.table();
  detail::require_weight(t.max_weight(), 4, "effective_order");
  for (int j = 2; j <= t.max_weight(); ++j) {
    double norm = 0.0;
    for (const auto& a : t.indices())
      if (a.weight() == j && a.order() >= 2) norm = std::max(norm, max_abs(t.value(a)));
    if (norm > tolerance) return {j, false, norm};
  }
  return {t.max_weight(), true, 0.0};
}

/// Max termwise difference of the two tables' e-polynomials over all alpha.
inline double table_difference(const CoefficientTable& a, const CoefficientTable& b) {
  double m = 0.0;
  for (const auto& idx : a.indices()) {
    const auto pa = a.poly(idx);
    const auto pb = b.poly(idx);
    m = std::max(m, detail::max_abs_diff(std::span<const Jet>(pa), std::span<const Jet>(pb)));
  }
  return m;
}

}  // namespace spi
