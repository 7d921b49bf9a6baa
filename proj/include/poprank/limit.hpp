#pragma once

// Limit rankings of the popularity process for the expected (type-mixture)
// user: block construction, stability checks, brute-force uniqueness,
// the uniqueness threshold on p, and limit traffic shares.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "poprank/error.hpp"
#include "poprank/model.hpp"

namespace poprank {

struct Thresholds {
  double minority_bound;  // M / (1 + beta)
  double majority_bound;  // beta M / (1 + beta)
};

/// Throws InvalidInput for beta <= 1, where both bounds collapse to M/2.
Thresholds thresholds(std::size_t m_total, double beta);

/// Block pattern with the `minority_class` items on top; `m1` is always the
/// number of class-1 items.
ClassPattern block_limit_ranking(std::size_t m_total, std::size_t m1, ItemClass minority_class);

/// True iff the expected user's click probabilities are strictly
/// decreasing down the ranking induced by `pattern`.
bool is_stable_limit(const ClassPattern& pattern, const Population& population, double beta);

inline constexpr std::uint64_t kEnumerationLimit = 1'000'000;

/// C(n, k), saturating at UINT64_MAX.
std::uint64_t binomial(std::size_t n, std::size_t k);

class EnumerationTooLarge : public InvalidInput {
 public:
  EnumerationTooLarge(std::uint64_t patterns, std::uint64_t limit);
  std::uint64_t patterns() const { return patterns_; }

 private:
  std::uint64_t patterns_;
};

/// Every class pattern with `m1` class-1 items that is a stable limit.
/// Output is in lexicographic order of the class-1 positions. Throws
/// EnumerationTooLarge when C(m_total, m1) exceeds `limit`.
std::vector<ClassPattern> enumerate_stable_patterns(std::size_t m_total, std::size_t m1,
                                                    const Population& population, double beta,
                                                    std::uint64_t limit = kEnumerationLimit);

enum class LimitRegime { class1_top, class1_bottom, intermediate };

const char* to_string(LimitRegime regime);

struct LimitShare {
  LimitRegime regime;
  /// Empty in the intermediate band when no stable pattern exists.
  std::optional<double> share;
  /// Pattern the share was evaluated at (empty when `share` is empty).
  ClassPattern pattern;
  /// Number of stable patterns; empty when enumeration exceeded the guard.
  std::optional<std::size_t> n_stable;
  /// Set when the share is not backed by the unique block limit: the band is
  /// intermediate, or the block pattern itself failed the stability check.
  bool flagged = false;
};

/// Class-1 share of the expected user's clicks at the limit ranking. Below
/// the minority bound the class-1 block sits on top; above the majority
/// bound it sits at the bottom. In between, all stable patterns are
/// enumerated and the one reached by the expected-click dynamics from the
/// default initial ranking is used.
LimitShare limit_traffic_share(std::size_t m_total, std::size_t m1, const Population& population, double beta);

/// Deterministic mean-field dynamics: starting from the uniform initial
/// ranking (class 1 at the bottom), every step adds the expected user's click
/// probabilities to the counts and re-sorts. Returns the class pattern once
/// it is a stable limit, or the last pattern after `max_steps`.
ClassPattern expected_dynamics_endpoint(std::size_t m_total, std::size_t m1, const Population& population,
                                        double beta, std::size_t max_steps = 200'000);

class InconsistentParameters : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

inline constexpr double kUniquenessTolerance = 1e-6;

/// Largest p = p0 = p1 (types {1, 0, 1/2}) for which the uniqueness
/// constraints hold, to within kUniquenessTolerance. With class-1 items at
/// ranks 1..M1-1 and one more at rank k, the rank-k item must beat the
/// class-0 item just above it, for every k in M1+1..M. This includes the
/// two cases usually named as binding (k = M and k = M1+2); k = M1+1 can
/// bind first when M1 is close to M/(1+beta).
/// Throws InconsistentParameters if M1 >= M/(1+beta) or the constraints
/// fail at p = 0.
double max_p_for_uniqueness(std::size_t m_total, std::size_t m1, double beta);

/// Whether every uniqueness constraint holds at a given p.
bool uniqueness_constraints_hold(std::size_t m_total, std::size_t m1, double beta, double p);

struct LimitTableRow {
  std::size_t m1;
  double beta;
  Population population;
  LimitShare limit;
};

/// One row per M1 in 1..M-1.
std::vector<LimitTableRow> limit_table(std::size_t m_total, const Population& population, double beta);

}  // namespace poprank
