#include "poprank/limit.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <string>

namespace poprank {

namespace {

/// Closed form of the expected user's click probabilities. With rank weight
/// w_r = beta^-(r-1), every type's denominator is phi0*A0 + phi1*A1 where
/// A_k sums w_r over class-k ranks, so the mixture probability at rank r is
/// w_r * c[class_r] with c depending on the pattern only through A1.
class ExpectedClicks {
 public:
  ExpectedClicks(std::size_t m_total, std::size_t m1, const Population& population, double beta)
      : beta_(beta), weight_(m_total) {
    const double log_beta = std::log(beta);
    for (std::size_t r = 0; r < m_total; ++r) weight_[r] = std::exp(-static_cast<double>(r) * log_beta);
    total_weight_ = std::accumulate(weight_.begin(), weight_.end(), 0.0);
    const double m0 = static_cast<double>(m_total - m1);
    for (UserType t : {UserType::type0, UserType::type1, UserType::type2}) {
      const double p = population.proportion(t);
      if (p <= 0.0) continue;
      const double g = population.gamma(t);
      types_.push_back({p, g / m0, (1.0 - g) / static_cast<double>(m1)});
    }
  }

  /// Per-item factors c[0], c[1] for a pattern whose class-1 weights sum to a1.
  std::array<double, 2> factors(double a1) const {
    const double a0 = total_weight_ - a1;
    std::array<double, 2> c{0.0, 0.0};
    for (const auto& t : types_) {
      const double z = t.phi0 * a0 + t.phi1 * a1;
      c[0] += t.p * t.phi0 / z;
      c[1] += t.p * t.phi1 / z;
    }
    return c;
  }

  double class1_weight(std::span<const ItemClass> pattern) const {
    double a1 = 0.0;
    for (std::size_t r = 0; r < pattern.size(); ++r) {
      if (pattern[r] == 1) a1 += weight_[r];
    }
    return a1;
  }

  bool stable(std::span<const ItemClass> pattern) const { return stable(pattern, factors(class1_weight(pattern))); }

  bool stable(std::span<const ItemClass> pattern, const std::array<double, 2>& c) const {
    // w_r c_a > w_{r+1} c_b  <=>  beta c_a > c_b. Within a class this
    // reduces to c > 0 and beta > 1.
    for (std::size_t r = 0; r + 1 < pattern.size(); ++r) {
      if (!(beta_ * c[pattern[r]] > c[pattern[r + 1]])) return false;
    }
    return true;
  }

  /// Expected click probability at each rank position.
  std::vector<double> by_rank(std::span<const ItemClass> pattern) const {
    const auto c = factors(class1_weight(pattern));
    std::vector<double> out(pattern.size());
    for (std::size_t r = 0; r < pattern.size(); ++r) out[r] = weight_[r] * c[pattern[r]];
    return out;
  }

  double weight(std::size_t r) const { return weight_[r]; }

 private:
  struct TypeTerm {
    double p;
    double phi0;
    double phi1;
  };

  double beta_;
  std::vector<double> weight_;
  double total_weight_ = 0.0;
  std::vector<TypeTerm> types_;
};

void check_sizes(std::size_t m_total, std::size_t m1) {
  if (m_total < 2) throw InvalidInput("m must be at least 2");
  if (m1 < 1 || m1 + 1 > m_total) throw InvalidInput("m1 must lie in [1, m-1]");
}

double class1_total(const ClassPattern& pattern, std::span<const double> by_rank) {
  double s = 0.0;
  for (std::size_t r = 0; r < pattern.size(); ++r) {
    if (pattern[r] == 1) s += by_rank[r];
  }
  return s;
}

std::size_t hamming(const ClassPattern& a, const ClassPattern& b) {
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i] ? 1 : 0;
  return d;
}

}  // namespace

Thresholds thresholds(std::size_t m_total, double beta) {
  if (!(beta > 1.0) || !std::isfinite(beta)) {
    throw InvalidInput("thresholds need beta > 1; at beta = 1 both bounds equal M/2");
  }
  const double m = static_cast<double>(m_total);
  const double minority = m / (1.0 + beta);
  return {minority, m - minority};
}

ClassPattern block_limit_ranking(std::size_t m_total, std::size_t m1, ItemClass minority_class) {
  check_sizes(m_total, m1);
  if (minority_class > 1) throw InvalidInput("class labels must be 0 or 1");
  const std::size_t top = minority_class == 1 ? m1 : m_total - m1;
  std::vector<ItemClass> classes(m_total, static_cast<ItemClass>(1 - minority_class));
  std::fill(classes.begin(), classes.begin() + static_cast<std::ptrdiff_t>(top), minority_class);
  return ClassPattern(std::move(classes));
}

bool is_stable_limit(const ClassPattern& pattern, const Population& population, double beta) {
  const auto rho = expected_choice_by_rank(pattern, population, beta);
  for (std::size_t r = 0; r + 1 < rho.size(); ++r) {
    if (!(rho[r] > rho[r + 1])) return false;
  }
  return true;
}

std::uint64_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 acc = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    acc = acc * (n - k + i) / i;
    if (acc > UINT64_MAX) return UINT64_MAX;
  }
  return static_cast<std::uint64_t>(acc);
}

EnumerationTooLarge::EnumerationTooLarge(std::uint64_t patterns, std::uint64_t limit)
    : InvalidInput("enumeration needs " + std::to_string(patterns) + " patterns, above the bound of " +
                   std::to_string(limit)),
      patterns_(patterns) {}

std::vector<ClassPattern> enumerate_stable_patterns(std::size_t m_total, std::size_t m1,
                                                    const Population& population, double beta,
                                                    std::uint64_t limit) {
  check_sizes(m_total, m1);
  if (!(beta >= 1.0)) throw InvalidInput("beta must be >= 1");
  const std::uint64_t count = binomial(m_total, m1);
  if (count > limit) throw EnumerationTooLarge(count, limit);

  const ExpectedClicks model(m_total, m1, population, beta);
  std::vector<ClassPattern> out;
  std::vector<std::size_t> pos(m1);
  std::iota(pos.begin(), pos.end(), std::size_t{0});
  std::vector<ItemClass> classes(m_total);
  while (true) {
    std::fill(classes.begin(), classes.end(), ItemClass{0});
    double a1 = 0.0;
    for (std::size_t p : pos) {
      classes[p] = 1;
      a1 += model.weight(p);
    }
    if (model.stable(classes, model.factors(a1))) out.emplace_back(classes);

    // Next combination in lexicographic order.
    std::size_t i = m1;
    while (i > 0 && pos[i - 1] == m_total - m1 + i - 1) --i;
    if (i == 0) break;
    ++pos[i - 1];
    for (std::size_t j = i; j < m1; ++j) pos[j] = pos[j - 1] + 1;
  }
  return out;
}

const char* to_string(LimitRegime regime) {
  switch (regime) {
    case LimitRegime::class1_top: return "class1_top";
    case LimitRegime::class1_bottom: return "class1_bottom";
    case LimitRegime::intermediate: return "intermediate";
  }
  return "unknown";
}

ClassPattern expected_dynamics_endpoint(std::size_t m_total, std::size_t m1, const Population& population,
                                        double beta, std::size_t max_steps) {
  check_sizes(m_total, m1);
  const ExpectedClicks model(m_total, m1, population, beta);
  const Ranking start = Ranking::initial(m_total, m1);
  std::vector<ItemId> order(start.order().begin(), start.order().end());
  std::vector<ItemClass> classes(start.class_of_item().begin(), start.class_of_item().end());
  std::vector<double> counts(m_total, 1.0);
  std::vector<ItemClass> pattern(m_total);

  for (std::size_t step = 0;; ++step) {
    for (std::size_t r = 0; r < m_total; ++r) pattern[r] = classes[order[r]];
    // Counts are sorted and increments strictly decrease down a stable
    // pattern, so the order can no longer change.
    if (model.stable(pattern) || step == max_steps) break;
    const auto rho = model.by_rank(pattern);
    for (std::size_t r = 0; r < m_total; ++r) counts[order[r]] += rho[r];
    std::stable_sort(order.begin(), order.end(), [&](ItemId a, ItemId b) { return counts[a] > counts[b]; });
  }
  return ClassPattern(pattern);
}

LimitShare limit_traffic_share(std::size_t m_total, std::size_t m1, const Population& population, double beta) {
  check_sizes(m_total, m1);
  const Thresholds bounds = thresholds(m_total, beta);
  const double m1d = static_cast<double>(m1);

  LimitShare out{LimitRegime::intermediate, std::nullopt, ClassPattern{}, std::nullopt, false};
  std::vector<ClassPattern> stable;
  try {
    stable = enumerate_stable_patterns(m_total, m1, population, beta);
    out.n_stable = stable.size();
  } catch (const EnumerationTooLarge&) {
    if (m1d >= bounds.minority_bound && m1d <= bounds.majority_bound) throw;
  }

  if (m1d < bounds.minority_bound || m1d > bounds.majority_bound) {
    const bool minority_on_top = m1d < bounds.minority_bound;
    out.regime = minority_on_top ? LimitRegime::class1_top : LimitRegime::class1_bottom;
    out.pattern = block_limit_ranking(m_total, m1, minority_on_top ? 1 : 0);
    out.flagged = !is_stable_limit(out.pattern, population, beta);
  } else {
    out.flagged = true;
    if (stable.empty()) return out;
    const ClassPattern reached = expected_dynamics_endpoint(m_total, m1, population, beta);
    auto best = stable.begin();
    for (auto it = stable.begin(); it != stable.end(); ++it) {
      if (hamming(*it, reached) < hamming(*best, reached)) best = it;
    }
    out.pattern = *best;
  }
  out.share = class1_total(out.pattern, expected_choice_by_rank(out.pattern, population, beta));
  return out;
}

bool uniqueness_constraints_hold(std::size_t m_total, std::size_t m1, double beta, double p) {
  check_sizes(m_total, m1);
  const Population population(1.0, 0.0, p, p);
  std::vector<ItemClass> classes(m_total, 0);
  for (std::size_t r = 0; r + 1 < m1; ++r) classes[r] = 1;
  // Lone class-1 item at each 0-based position below the block.
  for (std::size_t lone = m1; lone < m_total; ++lone) {
    classes[lone] = 1;
    const auto rho = expected_choice_by_rank(ClassPattern(classes), population, beta);
    classes[lone] = 0;
    if (!(rho[lone] > rho[lone - 1])) return false;
  }
  return true;
}

double max_p_for_uniqueness(std::size_t m_total, std::size_t m1, double beta) {
  check_sizes(m_total, m1);
  const Thresholds bounds = thresholds(m_total, beta);
  if (!(static_cast<double>(m1) < bounds.minority_bound)) {
    throw InconsistentParameters("m1 = " + std::to_string(m1) + " is not below M/(1+beta) = " +
                                 std::to_string(bounds.minority_bound));
  }
  if (!uniqueness_constraints_hold(m_total, m1, beta, 0.0)) {
    throw InconsistentParameters("uniqueness constraints fail already at p = 0");
  }
  double lo = 0.0;
  double hi = 0.5;
  if (uniqueness_constraints_hold(m_total, m1, beta, hi)) return hi;
  while (hi - lo > kUniquenessTolerance) {
    const double mid = 0.5 * (lo + hi);
    if (uniqueness_constraints_hold(m_total, m1, beta, mid)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

std::vector<LimitTableRow> limit_table(std::size_t m_total, const Population& population, double beta) {
  std::vector<LimitTableRow> rows;
  for (std::size_t m1 = 1; m1 < m_total; ++m1) {
    rows.push_back({m1, beta, population, limit_traffic_share(m_total, m1, population, beta)});
  }
  return rows;
}

}  // namespace poprank
