#include "poprank/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"
#include "poprank/error.hpp"
#include "poprank/simulator.hpp"

namespace poprank {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// A record reduced to what the likelihood needs.
struct Observation {
  UserType type;
  double m0;
  double m1;
  std::size_t size;
  std::size_t clicked_position;  // 0-based
  ItemClass clicked_class;
  std::vector<std::size_t> class1_positions;
};

Observation reduce(const ClickRecord& r) {
  validate(r);
  Observation o;
  o.type = r.participant_type;
  o.size = r.classes_by_rank.size();
  o.m1 = static_cast<double>(r.classes_by_rank.count(1));
  o.m0 = static_cast<double>(o.size) - o.m1;
  o.clicked_position = static_cast<std::size_t>(r.clicked_rank - 1);
  o.clicked_class = r.classes_by_rank[o.clicked_position];
  for (std::size_t i = 0; i < o.size; ++i) {
    if (r.classes_by_rank[i] == 1) o.class1_positions.push_back(i);
  }
  return o;
}

/// Rank weights beta^-i and their prefix sums for one beta.
struct RankPowers {
  double log_beta;
  std::vector<double> power;   // beta^-i
  std::vector<double> prefix;  // prefix[k] = sum_{i<k} beta^-i

  RankPowers(double beta, std::size_t max_size) : log_beta(std::log(beta)), power(max_size), prefix(max_size + 1) {
    prefix[0] = 0.0;
    for (std::size_t i = 0; i < max_size; ++i) {
      power[i] = std::exp(-static_cast<double>(i) * log_beta);
      prefix[i + 1] = prefix[i] + power[i];
    }
  }
};

/// Per-record quantities for a fixed beta: class weight sums and the
/// clicked item's log rank weight.
struct WeightedObservation {
  double a0;
  double a1;
  double log_rank_weight;
};

WeightedObservation weigh(const Observation& o, const RankPowers& pw) {
  double a1 = 0.0;
  for (std::size_t p : o.class1_positions) a1 += pw.power[p];
  return {pw.prefix[o.size] - a1, a1, -static_cast<double>(o.clicked_position) * pw.log_beta};
}

/// log rho of the clicked item; -inf if its propensity is zero.
double log_term(const Observation& o, const WeightedObservation& w, double gamma) {
  const double phi0 = gamma / o.m0;
  const double phi1 = (1.0 - gamma) / o.m1;
  const double phi_clicked = o.clicked_class == 0 ? phi0 : phi1;
  if (phi_clicked <= 0.0) return kNegInf;
  return w.log_rank_weight + std::log(phi_clicked) - std::log(phi0 * w.a0 + phi1 * w.a1);
}

double gamma_for(UserType t, const ModelParams& p) {
  switch (t) {
    case UserType::type0: return p.gamma0;
    case UserType::type1: return p.gamma1;
    case UserType::type2: return kIndifferentGamma;
  }
  return kIndifferentGamma;
}

std::size_t max_size(std::span<const Observation> obs) {
  std::size_t m = 0;
  for (const auto& o : obs) m = std::max(m, o.size);
  return m;
}

LogLikelihood evaluate(const ModelParams& params, std::span<const Observation> obs) {
  const RankPowers pw(params.beta, max_size(obs));
  std::vector<double> terms(obs.size());
  std::size_t impossible = 0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    terms[i] = log_term(obs[i], weigh(obs[i], pw), gamma_for(obs[i].type, params));
    if (terms[i] == kNegInf) ++impossible;
  }
  if (impossible > 0) return {kNegInf, impossible};
  return {pairwise_sum(terms), 0};
}

void check_params(const ModelParams& p) {
  if (!(p.beta >= 1.0) || !std::isfinite(p.beta)) throw InvalidInput("beta must be >= 1");
  if (!(p.gamma0 >= 0.0 && p.gamma0 <= 1.0) || !(p.gamma1 >= 0.0 && p.gamma1 <= 1.0)) {
    throw InvalidInput("gammas must lie in [0, 1]");
  }
}

std::vector<double> grid(double lo, double hi, double step) {
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
  std::vector<double> g(n + 1);
  for (std::size_t i = 0; i <= n; ++i) g[i] = lo + static_cast<double>(i) * step;
  return g;
}

bool matches(Regime r, RegimeFilter f) {
  switch (f) {
    case RegimeFilter::pooled: return true;
    case RegimeFilter::dynamic: return r == Regime::dynamic;
    case RegimeFilter::static_order: return r == Regime::static_order;
  }
  return false;
}

bool near(double a, double b) { return std::abs(a - b) <= 1e-9; }

}  // namespace

std::optional<std::size_t> condition_index(std::string_view id) {
  for (std::size_t k = 0; k < kConditions.size(); ++k) {
    if (kConditions[k].id == id) return k;
  }
  return std::nullopt;
}

const char* to_string(Regime regime) {
  switch (regime) {
    case Regime::unknown: return "unknown";
    case Regime::dynamic: return "dynamic";
    case Regime::static_order: return "static";
  }
  return "unknown";
}

const char* to_string(RegimeFilter filter) {
  switch (filter) {
    case RegimeFilter::pooled: return "pooled";
    case RegimeFilter::dynamic: return "dynamic";
    case RegimeFilter::static_order: return "static";
  }
  return "pooled";
}

void validate(const ClickRecord& record) {
  const std::size_t m = record.classes_by_rank.size();
  if (m < 2) throw InvalidInput("a click record needs at least two ranked items");
  if (record.classes_by_rank.count(1) == 0 || record.classes_by_rank.count(0) == 0) {
    throw InvalidInput("a click record needs items of both classes");
  }
  if (record.clicked_rank < 1 || static_cast<std::size_t>(record.clicked_rank) > m) {
    throw InvalidInput("clicked rank " + std::to_string(record.clicked_rank) + " is outside 1.." +
                       std::to_string(m));
  }
  if (static_cast<int>(record.participant_type) > 2) throw InvalidInput("unknown participant type");
}

double pairwise_sum(std::span<const double> values) {
  constexpr std::size_t kBlock = 8;
  if (values.size() <= kBlock) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

LogLikelihood log_likelihood(const ModelParams& params, std::span<const ClickRecord> records) {
  check_params(params);
  if (records.empty()) throw InvalidInput("log-likelihood needs at least one record");
  std::vector<Observation> obs;
  obs.reserve(records.size());
  for (const auto& r : records) obs.push_back(reduce(r));
  return evaluate(params, obs);
}

FitResult fit(std::span<const ClickRecord> records, const FitOptions& options) {
  const ParameterBox& box = options.box;
  if (!(box.beta_lo >= 1.0 && box.beta_lo <= box.beta_hi) || !(box.gamma0_lo <= box.gamma0_hi) ||
      !(box.gamma1_lo <= box.gamma1_hi) || box.gamma0_lo < 0.0 || box.gamma0_hi > 1.0 || box.gamma1_lo < 0.0 ||
      box.gamma1_hi > 1.0) {
    throw InvalidInput("invalid parameter box");
  }
  if (!(options.grid_step > 0.0) || !(options.tolerance > 0.0)) {
    throw InvalidInput("grid step and tolerance must be positive");
  }

  std::vector<Observation> obs;
  for (const auto& r : records) {
    if (matches(r.regime, options.regime)) obs.push_back(reduce(r));
  }
  if (obs.empty()) throw InvalidInput("no click records to fit");

  FitResult result;
  result.options = options;
  result.n_obs = obs.size();
  std::array<std::size_t, 3> per_type{0, 0, 0};
  for (const auto& o : obs) ++per_type[static_cast<std::size_t>(o.type)];
  result.gamma0_identified = per_type[0] > 0;
  result.gamma1_identified = per_type[1] > 0;
  const double gamma0_mid = 0.5 * (box.gamma0_lo + box.gamma0_hi);
  const double gamma1_mid = 0.5 * (box.gamma1_lo + box.gamma1_hi);

  // Grid stage. The log-likelihood is L2(beta) + L0(beta, gamma0) +
  // L1(beta, gamma1), so for each beta the gammas are maximized separately;
  // this visits the same optimum as the full three-dimensional grid.
  const auto betas = grid(box.beta_lo, box.beta_hi, options.grid_step);
  const auto gamma0s = result.gamma0_identified ? grid(box.gamma0_lo, box.gamma0_hi, options.grid_step)
                                                : std::vector<double>{gamma0_mid};
  const auto gamma1s = result.gamma1_identified ? grid(box.gamma1_lo, box.gamma1_hi, options.grid_step)
                                                : std::vector<double>{gamma1_mid};
  const std::size_t m_max = max_size(obs);

  ModelParams best{betas.front(), gamma0s.front(), gamma1s.front()};
  double best_ll = kNegInf;
  std::vector<WeightedObservation> weighted(obs.size());
  std::vector<double> terms;
  terms.reserve(obs.size());

  auto type_sum = [&](UserType t, double gamma) {
    terms.clear();
    for (std::size_t i = 0; i < obs.size(); ++i) {
      if (obs[i].type != t) continue;
      const double v = log_term(obs[i], weighted[i], gamma);
      if (v == kNegInf) return kNegInf;
      terms.push_back(v);
    }
    return pairwise_sum(terms);
  };
  auto best_gamma = [&](UserType t, const std::vector<double>& candidates) {
    std::pair<double, double> arg{candidates.front(), kNegInf};
    for (double g : candidates) {
      const double v = type_sum(t, g);
      if (v > arg.second) arg = {g, v};
    }
    return arg;
  };

  for (double beta : betas) {
    const RankPowers pw(beta, m_max);
    for (std::size_t i = 0; i < obs.size(); ++i) weighted[i] = weigh(obs[i], pw);
    const double l2 = type_sum(UserType::type2, kIndifferentGamma);
    const auto [g0, l0] = best_gamma(UserType::type0, gamma0s);
    const auto [g1, l1] = best_gamma(UserType::type1, gamma1s);
    const double total = l0 + l1 + l2;
    if (total > best_ll) {
      best_ll = total;
      best = {beta, g0, g1};
    }
  }
  result.grid_best = best;

  // Compass pattern search on the full likelihood.
  ModelParams x = best;
  double fx = evaluate(x, obs).value;
  result.grid_log_likelihood = fx;
  std::size_t evaluations = 1;
  double step = options.grid_step;
  constexpr std::size_t kMaxEvaluations = 100'000;
  while (step >= options.tolerance && evaluations < kMaxEvaluations) {
    ModelParams best_move = x;
    double best_value = fx;
    for (int axis = 0; axis < 3; ++axis) {
      if (axis == 1 && !result.gamma0_identified) continue;
      if (axis == 2 && !result.gamma1_identified) continue;
      for (double sign : {1.0, -1.0}) {
        ModelParams y = x;
        switch (axis) {
          case 0: y.beta = std::clamp(x.beta + sign * step, box.beta_lo, box.beta_hi); break;
          case 1: y.gamma0 = std::clamp(x.gamma0 + sign * step, box.gamma0_lo, box.gamma0_hi); break;
          default: y.gamma1 = std::clamp(x.gamma1 + sign * step, box.gamma1_lo, box.gamma1_hi); break;
        }
        const double fy = evaluate(y, obs).value;
        ++evaluations;
        if (fy > best_value) {
          best_value = fy;
          best_move = y;
        }
      }
    }
    if (best_value > fx) {
      x = best_move;
      fx = best_value;
    } else {
      step *= 0.5;
    }
  }

  result.beta_hat = x.beta;
  result.gamma0_hat = x.gamma0;
  result.gamma1_hat = x.gamma1;
  result.log_likelihood = fx;
  result.converged = step < options.tolerance && std::isfinite(fx);
  result.trace_length = evaluations;
  result.beta_at_bound = near(x.beta, box.beta_lo) || near(x.beta, box.beta_hi);
  result.gamma0_at_bound =
      result.gamma0_identified && (near(x.gamma0, box.gamma0_lo) || near(x.gamma0, box.gamma0_hi));
  result.gamma1_at_bound =
      result.gamma1_identified && (near(x.gamma1, box.gamma1_lo) || near(x.gamma1, box.gamma1_hi));
  return result;
}

std::string fit_report_json(const FitResult& r, int indent) {
  const auto& b = r.options.box;
  auto finite_or_null = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json j = {
      {"beta_hat", r.beta_hat},
      {"gamma0_hat", r.gamma0_hat},
      {"gamma1_hat", r.gamma1_hat},
      {"log_likelihood", finite_or_null(r.log_likelihood)},
      {"n_obs", r.n_obs},
      {"converged", r.converged},
      {"regime", to_string(r.options.regime)},
      {"bounds",
       {{"beta", {b.beta_lo, b.beta_hi}}, {"gamma0", {b.gamma0_lo, b.gamma0_hi}}, {"gamma1", {b.gamma1_lo, b.gamma1_hi}}}},
      {"identified", {{"gamma0", r.gamma0_identified}, {"gamma1", r.gamma1_identified}}},
      {"at_bound", {{"beta", r.beta_at_bound}, {"gamma0", r.gamma0_at_bound}, {"gamma1", r.gamma1_at_bound}}},
      {"grid",
       {{"step", r.options.grid_step},
        {"best", {{"beta", r.grid_best.beta}, {"gamma0", r.grid_best.gamma0}, {"gamma1", r.grid_best.gamma1}}},
        {"log_likelihood", finite_or_null(r.grid_log_likelihood)}}},
      {"tolerance", r.options.tolerance},
      {"trace_length", r.trace_length},
  };
  return j.dump(indent);
}

const char* to_string(TableMode mode) { return mode == TableMode::sim1 ? "sim1" : "sim2"; }

TableMode parse_table_mode(std::string_view name) {
  if (name == "sim1") return TableMode::sim1;
  if (name == "sim2") return TableMode::sim2;
  throw InvalidInput("unknown table mode '" + std::string(name) + "' (expected sim1 or sim2)");
}

std::vector<UserType> type_sequence(const TypeCounts& counts) {
  std::vector<UserType> types;
  types.reserve(counts.total());
  types.insert(types.end(), counts.cat, UserType::type0);
  types.insert(types.end(), counts.neither, UserType::type2);
  types.insert(types.end(), counts.dog, UserType::type1);
  return types;
}

std::vector<TableRow> simulate_table(const ModelParams& params, TableMode mode, std::uint64_t seed,
                                     std::size_t reps) {
  check_params(params);
  if (reps < 2) throw InvalidInput("the traffic table needs at least two replicates");
  const std::array<double, 3> gammas{params.gamma0, params.gamma1, kIndifferentGamma};
  std::vector<TableRow> rows;
  for (std::size_t k = 0; k < kConditions.size(); ++k) {
    const ConditionSpec& cond = kConditions[k];
    const TypeCounts counts = mode == TableMode::sim1 ? kObservedTypeCounts[k] : kBalancedTypeCounts;
    const Ranking initial = Ranking::initial(cond.m0 + cond.m1, cond.m1);
    const DisplayMode display = cond.dynamic ? DisplayMode::dynamic : DisplayMode::static_order;
    const std::uint64_t condition_seed = derive_seed(seed, k);
    std::vector<double> shares(reps);
    for (std::size_t rep = 0; rep < reps; ++rep) {
      Rng rng(derive_seed(condition_seed, rep));
      auto types = type_sequence(counts);
      rng.shuffle(types);
      const std::size_t c1 = simulate_types(initial, params.beta, types, gammas, display, rng);
      shares[rep] = static_cast<double>(c1) / static_cast<double>(types.size());
    }
    const auto s = summarize(shares);
    rows.push_back({cond, counts, s.mean, s.ci_low, s.ci_high, reps});
  }
  return rows;
}

std::vector<ClickRecord> synthesize_clicks(const ModelParams& params, std::span<const TypeCounts, 8> counts,
                                           std::uint64_t seed) {
  check_params(params);
  const std::array<double, 3> gammas{params.gamma0, params.gamma1, kIndifferentGamma};
  std::vector<ClickRecord> records;
  for (std::size_t k = 0; k < kConditions.size(); ++k) {
    const ConditionSpec& cond = kConditions[k];
    const Regime regime = cond.dynamic ? Regime::dynamic : Regime::static_order;
    Rng rng(derive_seed(seed, k));
    auto types = type_sequence(counts[k]);
    rng.shuffle(types);
    simulate_types(Ranking::initial(cond.m0 + cond.m1, cond.m1), params.beta, types, gammas,
                   cond.dynamic ? DisplayMode::dynamic : DisplayMode::static_order, rng,
                   [&](const ClickEvent& e) {
                     records.push_back({e.type, e.seen.pattern(), e.seen.rank_of(e.item), regime});
                   });
  }
  return records;
}

}  // namespace poprank
