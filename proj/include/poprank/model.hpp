#pragma once

// Items, user types, propensities, the rank-weighted stochastic choice rule
// and the popularity ranking update.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "poprank/rng.hpp"

namespace poprank {

using ItemId = std::size_t;
/// Binary item class, 0 or 1.
using ItemClass = std::uint8_t;

enum class UserType : std::uint8_t { type0 = 0, type1 = 1, type2 = 2 };

inline constexpr double kIndifferentGamma = 0.5;

/// Type-to-gamma mapping plus type proportions. gamma_k is the probability
/// that a user of type k clicks on class 0 absent any ranking.
class Population {
 public:
  /// Throws InvalidInput unless gamma0 > 1/2, gamma1 < 1/2, both in [0, 1],
  /// p0, p1 >= 0 and p0 + p1 <= 1.
  Population(double gamma0, double gamma1, double p0, double p1);

  double gamma0() const { return gamma0_; }
  double gamma1() const { return gamma1_; }
  double gamma2() const { return kIndifferentGamma; }
  double p0() const { return p0_; }
  double p1() const { return p1_; }
  double p2() const;

  double gamma(UserType t) const;
  double proportion(UserType t) const;
  std::array<double, 3> gammas() const { return {gamma0_, gamma1_, kIndifferentGamma}; }

  bool operator==(const Population&) const = default;

 private:
  double gamma0_;
  double gamma1_;
  double p0_;
  double p1_;
};

/// Class of the item at each rank, rank 1 first.
class ClassPattern {
 public:
  ClassPattern() = default;
  explicit ClassPattern(std::vector<ItemClass> classes_by_rank);

  /// Parses a string over {0,1}, rank 1 first.
  static ClassPattern parse(std::string_view text);
  std::string str() const;

  std::size_t size() const { return classes_.size(); }
  std::size_t count(ItemClass k) const;
  ItemClass operator[](std::size_t position) const { return classes_[position]; }
  std::span<const ItemClass> classes() const { return classes_; }

  /// Same layout with class labels swapped.
  ClassPattern flipped() const;

  bool operator==(const ClassPattern&) const = default;
  auto operator<=>(const ClassPattern&) const = default;

 private:
  std::vector<ItemClass> classes_;
};

/// A popularity ranking over M items: which item sits at each rank and the
/// cumulative clicks per item. Items carry stable ids 0..M-1.
class Ranking {
 public:
  /// `order` lists item ids from rank 1 down to rank M. Throws InvalidInput
  /// if `order` is not a permutation, a class label is not 0/1, either class
  /// is empty, or sizes disagree.
  Ranking(std::vector<ItemClass> class_of_item, std::vector<ItemId> order,
          std::vector<std::int64_t> clicks);

  /// Item i sits at rank i+1 with class pattern[i]; every item starts with
  /// `initial_clicks`.
  static Ranking from_pattern(const ClassPattern& pattern, std::int64_t initial_clicks = 1);

  /// Uniform initialization: items 0..M0-1 are class 0 and ranked on top,
  /// items M0..M-1 are class 1 at the bottom, one click each.
  static Ranking initial(std::size_t m_total, std::size_t m1);

  std::size_t size() const { return order_.size(); }
  std::size_t count(ItemClass k) const;

  /// 1-based rank of an item.
  int rank_of(ItemId item) const { return position_[item] + 1; }
  ItemId item_at(int rank) const { return order_[static_cast<std::size_t>(rank - 1)]; }
  ItemClass class_of(ItemId item) const { return classes_[item]; }
  std::int64_t clicks(ItemId item) const { return clicks_[item]; }

  std::span<const ItemId> order() const { return order_; }
  std::span<const ItemClass> class_of_item() const { return classes_; }
  std::span<const std::int64_t> clicks() const { return clicks_; }
  std::vector<int> rank_of_item() const;
  std::int64_t total_clicks() const;

  ClassPattern pattern() const;

  /// True when every item has at least as many clicks as every item ranked
  /// below it.
  bool popularity_ordered() const;

  /// Adds one click and re-sorts by descending clicks. The sort is stable
  /// with respect to the previous order: an item overtakes another only by
  /// strictly exceeding its count.
  void record_click(ItemId item);

  /// Adds one click without touching the order (frozen display).
  void add_click_frozen(ItemId item);

  bool operator==(const Ranking&) const = default;

 private:
  void check_item(ItemId item) const;
  void reindex();

  std::vector<ItemClass> classes_;
  std::vector<ItemId> order_;
  std::vector<int> position_;
  std::vector<std::int64_t> clicks_;
};

/// Rank-free click propensity of one item: gamma/M0 for class 0,
/// (1-gamma)/M1 for class 1.
double propensity(double gamma, std::size_t m0, std::size_t m1, ItemClass item_class);

/// Click probabilities indexed by rank position (0 = rank 1) for a user with
/// the given gamma. Weights are computed in log space.
std::vector<double> choice_by_rank(const ClassPattern& pattern, double gamma, double beta);

/// Click probabilities indexed by item id.
std::vector<double> choice_distribution(const Ranking& ranking, double gamma, double beta);

/// Sum of `dist` (indexed by item id) over items of class k.
double total_class_probability(std::span<const double> dist, const Ranking& ranking, ItemClass k);

/// Type-mixture ("expected individual") click probabilities, by rank position.
std::vector<double> expected_choice_by_rank(const ClassPattern& pattern, const Population& population,
                                            double beta);

/// Type-mixture click probabilities, by item id.
std::vector<double> expected_choice_distribution(const Ranking& ranking, const Population& population,
                                                 double beta);

UserType draw_type(const Population& population, Rng& rng);

/// Gamma of a freshly drawn user.
double sample_type(const Population& population, Rng& rng);

/// Index drawn according to `dist`. Entries with zero mass are never returned.
std::size_t sample_click(std::span<const double> dist, Rng& rng);

/// Copy of `ranking` after one click on `clicked`.
Ranking update_ranking(Ranking ranking, ItemId clicked);

enum class InitialOrder { class1_bottom, class1_top };

/// Full parameterization of a search environment.
class Environment {
 public:
  /// Throws InvalidInput unless 1 <= m1 <= m_total-1, n_users >= 1 and beta >= 1.
  Environment(std::size_t m_total, std::size_t m1, std::size_t n_users, double beta, Population population,
              InitialOrder order = InitialOrder::class1_bottom);

  /// Custom initial ranking; its size and class counts define M and M1.
  Environment(Ranking initial, std::size_t n_users, double beta, Population population);

  std::size_t m_total() const { return initial_.size(); }
  std::size_t m1() const { return initial_.count(1); }
  std::size_t m0() const { return initial_.count(0); }
  std::size_t n_users() const { return n_users_; }
  double beta() const { return beta_; }
  const Population& population() const { return population_; }
  const Ranking& initial_ranking() const { return initial_; }
  std::optional<InitialOrder> initial_order() const { return order_; }

  Environment with_beta(double beta) const;
  Environment with_population(const Population& population) const;
  /// Rebuilds the uniform initial ranking; throws if the ranking is custom.
  Environment with_m1(std::size_t m1) const;
  Environment with_users(std::size_t n_users) const;

 private:
  Ranking initial_;
  std::optional<InitialOrder> order_;
  std::size_t n_users_;
  double beta_;
  Population population_;
};

Ranking initial_ranking(std::size_t m_total, std::size_t m1, InitialOrder order);

}  // namespace poprank
