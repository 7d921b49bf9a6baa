#include "poprank/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "poprank/error.hpp"

namespace poprank {

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw InvalidInput(message);
}

bool is_probability(double x) { return x >= 0.0 && x <= 1.0; }

}  // namespace

// ---------------------------------------------------------------------------
// Population

Population::Population(double gamma0, double gamma1, double p0, double p1)
    : gamma0_(gamma0), gamma1_(gamma1), p0_(p0), p1_(p1) {
  require(is_probability(gamma0) && gamma0 > 0.5, "gamma0 must lie in (0.5, 1]");
  require(is_probability(gamma1) && gamma1 < 0.5, "gamma1 must lie in [0, 0.5)");
  require(p0 >= 0.0 && p1 >= 0.0, "type proportions must be non-negative");
  // Allow for decimal round-off such as 0.7 + 0.3.
  require(p0 + p1 <= 1.0 + 1e-12, "p0 + p1 must not exceed 1");
}

double Population::p2() const { return std::max(0.0, 1.0 - p0_ - p1_); }

double Population::gamma(UserType t) const {
  switch (t) {
    case UserType::type0: return gamma0_;
    case UserType::type1: return gamma1_;
    case UserType::type2: return kIndifferentGamma;
  }
  return kIndifferentGamma;
}

double Population::proportion(UserType t) const {
  switch (t) {
    case UserType::type0: return p0_;
    case UserType::type1: return p1_;
    case UserType::type2: return p2();
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// ClassPattern

ClassPattern::ClassPattern(std::vector<ItemClass> classes_by_rank) : classes_(std::move(classes_by_rank)) {
  for (ItemClass c : classes_) require(c <= 1, "class labels must be 0 or 1");
}

ClassPattern ClassPattern::parse(std::string_view text) {
  std::vector<ItemClass> classes;
  classes.reserve(text.size());
  for (char c : text) {
    if (c != '0' && c != '1') throw InvalidInput("class pattern must be a string over {0,1}");
    classes.push_back(static_cast<ItemClass>(c - '0'));
  }
  return ClassPattern(std::move(classes));
}

std::string ClassPattern::str() const {
  std::string s;
  s.reserve(classes_.size());
  for (ItemClass c : classes_) s.push_back(static_cast<char>('0' + c));
  return s;
}

std::size_t ClassPattern::count(ItemClass k) const {
  return static_cast<std::size_t>(std::count(classes_.begin(), classes_.end(), k));
}

ClassPattern ClassPattern::flipped() const {
  std::vector<ItemClass> out(classes_.size());
  std::transform(classes_.begin(), classes_.end(), out.begin(), [](ItemClass c) { return ItemClass(1 - c); });
  return ClassPattern(std::move(out));
}

// ---------------------------------------------------------------------------
// Ranking

Ranking::Ranking(std::vector<ItemClass> class_of_item, std::vector<ItemId> order, std::vector<std::int64_t> clicks)
    : classes_(std::move(class_of_item)), order_(std::move(order)), clicks_(std::move(clicks)) {
  const std::size_t m = classes_.size();
  require(m >= 2, "a ranking needs at least two items");
  require(order_.size() == m && clicks_.size() == m, "ranking vectors must have equal length");
  for (ItemClass c : classes_) require(c <= 1, "class labels must be 0 or 1");
  require(count(0) >= 1 && count(1) >= 1, "both item classes must be non-empty");
  std::vector<bool> seen(m, false);
  for (ItemId id : order_) {
    require(id < m && !seen[id], "order must be a permutation of item ids");
    seen[id] = true;
  }
  reindex();
}

Ranking Ranking::from_pattern(const ClassPattern& pattern, std::int64_t initial_clicks) {
  const std::size_t m = pattern.size();
  std::vector<ItemClass> classes(pattern.classes().begin(), pattern.classes().end());
  std::vector<ItemId> order(m);
  std::iota(order.begin(), order.end(), ItemId{0});
  return Ranking(std::move(classes), std::move(order), std::vector<std::int64_t>(m, initial_clicks));
}

Ranking Ranking::initial(std::size_t m_total, std::size_t m1) {
  return initial_ranking(m_total, m1, InitialOrder::class1_bottom);
}

std::size_t Ranking::count(ItemClass k) const {
  return static_cast<std::size_t>(std::count(classes_.begin(), classes_.end(), k));
}

std::vector<int> Ranking::rank_of_item() const {
  std::vector<int> ranks(position_.size());
  std::transform(position_.begin(), position_.end(), ranks.begin(), [](int p) { return p + 1; });
  return ranks;
}

std::int64_t Ranking::total_clicks() const {
  return std::accumulate(clicks_.begin(), clicks_.end(), std::int64_t{0});
}

ClassPattern Ranking::pattern() const {
  std::vector<ItemClass> by_rank(order_.size());
  for (std::size_t r = 0; r < order_.size(); ++r) by_rank[r] = classes_[order_[r]];
  return ClassPattern(std::move(by_rank));
}

bool Ranking::popularity_ordered() const {
  for (std::size_t r = 1; r < order_.size(); ++r) {
    if (clicks_[order_[r - 1]] < clicks_[order_[r]]) return false;
  }
  return true;
}

void Ranking::check_item(ItemId item) const {
  if (item >= order_.size()) throw InvalidInput("item id out of range");
}

void Ranking::record_click(ItemId item) {
  check_item(item);
  ++clicks_[item];
  std::stable_sort(order_.begin(), order_.end(),
                   [this](ItemId a, ItemId b) { return clicks_[a] > clicks_[b]; });
  reindex();
}

void Ranking::add_click_frozen(ItemId item) {
  check_item(item);
  ++clicks_[item];
}

void Ranking::reindex() {
  position_.assign(order_.size(), 0);
  for (std::size_t r = 0; r < order_.size(); ++r) position_[order_[r]] = static_cast<int>(r);
}

Ranking update_ranking(Ranking ranking, ItemId clicked) {
  ranking.record_click(clicked);
  return ranking;
}

// ---------------------------------------------------------------------------
// Choice model

double propensity(double gamma, std::size_t m0, std::size_t m1, ItemClass item_class) {
  require(m0 >= 1 && m1 >= 1, "both item classes must be non-empty");
  require(is_probability(gamma), "gamma must lie in [0, 1]");
  require(item_class <= 1, "class labels must be 0 or 1");
  return item_class == 0 ? gamma / static_cast<double>(m0) : (1.0 - gamma) / static_cast<double>(m1);
}

std::vector<double> choice_by_rank(const ClassPattern& pattern, double gamma, double beta) {
  require(beta >= 1.0 && std::isfinite(beta), "beta must be >= 1");
  const std::size_t m = pattern.size();
  const std::size_t m1 = pattern.count(1);
  const std::size_t m0 = m - m1;
  const double phi[2] = {propensity(gamma, m0, m1, 0), propensity(gamma, m0, m1, 1)};
  const double log_phi[2] = {std::log(phi[0]), std::log(phi[1])};
  const double log_beta = std::log(beta);

  std::vector<double> out(m, 0.0);
  if (beta == 1.0) {
    // Rank weights are all 1; the propensities are already normalized.
    for (std::size_t i = 0; i < m; ++i) out[i] = phi[pattern[i]];
    return out;
  }

  // log weight at rank r (1-based): (M - r) log(beta) + log(phi).
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m; ++i) {
    const ItemClass c = pattern[i];
    if (phi[c] > 0.0) top = std::max(top, static_cast<double>(m - 1 - i) * log_beta + log_phi[c]);
  }
  if (!std::isfinite(top)) throw InvalidInput("all propensities are zero");

  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const ItemClass c = pattern[i];
    if (phi[c] > 0.0) {
      out[i] = std::exp(static_cast<double>(m - 1 - i) * log_beta + log_phi[c] - top);
      total += out[i];
    }
  }
  for (double& x : out) x /= total;
  return out;
}

std::vector<double> choice_distribution(const Ranking& ranking, double gamma, double beta) {
  const auto by_rank = choice_by_rank(ranking.pattern(), gamma, beta);
  std::vector<double> by_item(by_rank.size());
  for (std::size_t r = 0; r < by_rank.size(); ++r) by_item[ranking.order()[r]] = by_rank[r];
  return by_item;
}

double total_class_probability(std::span<const double> dist, const Ranking& ranking, ItemClass k) {
  double sum = 0.0;
  for (ItemId i = 0; i < dist.size(); ++i) {
    if (ranking.class_of(i) == k) sum += dist[i];
  }
  return sum;
}

std::vector<double> expected_choice_by_rank(const ClassPattern& pattern, const Population& population,
                                            double beta) {
  std::vector<double> out(pattern.size(), 0.0);
  for (UserType t : {UserType::type0, UserType::type1, UserType::type2}) {
    const double w = population.proportion(t);
    if (w <= 0.0) continue;
    const auto rho = choice_by_rank(pattern, population.gamma(t), beta);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * rho[i];
  }
  return out;
}

std::vector<double> expected_choice_distribution(const Ranking& ranking, const Population& population,
                                                 double beta) {
  const auto by_rank = expected_choice_by_rank(ranking.pattern(), population, beta);
  std::vector<double> by_item(by_rank.size());
  for (std::size_t r = 0; r < by_rank.size(); ++r) by_item[ranking.order()[r]] = by_rank[r];
  return by_item;
}

// ---------------------------------------------------------------------------
// Sampling

UserType draw_type(const Population& population, Rng& rng) {
  const double u = rng.uniform();
  if (u < population.p0()) return UserType::type0;
  if (u < population.p0() + population.p1()) return UserType::type1;
  return UserType::type2;
}

double sample_type(const Population& population, Rng& rng) { return population.gamma(draw_type(population, rng)); }

std::size_t sample_click(std::span<const double> dist, Rng& rng) {
  if (dist.empty()) throw InvalidInput("cannot sample from an empty distribution");
  const double u = rng.uniform();
  double cumulative = 0.0;
  std::size_t last_positive = dist.size();
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] <= 0.0) continue;
    cumulative += dist[i];
    last_positive = i;
    if (u < cumulative) return i;
  }
  if (last_positive == dist.size()) throw InvalidInput("distribution has no positive mass");
  // u landed in the round-off gap above the final cumulative sum.
  return last_positive;
}

// ---------------------------------------------------------------------------
// Environment

Ranking initial_ranking(std::size_t m_total, std::size_t m1, InitialOrder order) {
  require(m_total >= 2, "m must be at least 2");
  require(m1 >= 1 && m1 + 1 <= m_total, "m1 must lie in [1, m-1]");
  const std::size_t m0 = m_total - m1;
  std::vector<ItemClass> classes(m_total, 0);
  for (std::size_t i = m0; i < m_total; ++i) classes[i] = 1;
  std::vector<ItemId> ids(m_total);
  if (order == InitialOrder::class1_bottom) {
    std::iota(ids.begin(), ids.end(), ItemId{0});
  } else {
    std::iota(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(m1), m0);
    std::iota(ids.begin() + static_cast<std::ptrdiff_t>(m1), ids.end(), ItemId{0});
  }
  return Ranking(std::move(classes), std::move(ids), std::vector<std::int64_t>(m_total, 1));
}

Environment::Environment(std::size_t m_total, std::size_t m1, std::size_t n_users, double beta,
                         Population population, InitialOrder order)
    : Environment(poprank::initial_ranking(m_total, m1, order), n_users, beta, population) {
  order_ = order;
}

Environment::Environment(Ranking initial, std::size_t n_users, double beta, Population population)
    : initial_(std::move(initial)), n_users_(n_users), beta_(beta), population_(population) {
  require(n_users >= 1, "n (number of users) must be at least 1");
  require(std::isfinite(beta) && beta >= 1.0, "beta must be >= 1");
}

Environment Environment::with_beta(double beta) const {
  Environment e = *this;
  require(std::isfinite(beta) && beta >= 1.0, "beta must be >= 1");
  e.beta_ = beta;
  return e;
}

Environment Environment::with_population(const Population& population) const {
  Environment e = *this;
  e.population_ = population;
  return e;
}

Environment Environment::with_m1(std::size_t m1) const {
  if (!order_) throw InvalidInput("cannot change m1 of an environment with a custom initial ranking");
  return Environment(m_total(), m1, n_users_, beta_, population_, *order_);
}

Environment Environment::with_users(std::size_t n_users) const {
  require(n_users >= 1, "n (number of users) must be at least 1");
  Environment e = *this;
  e.n_users_ = n_users;
  return e;
}

}  // namespace poprank
