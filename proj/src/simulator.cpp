#include "poprank/simulator.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <ostream>
#include <string>
#include <thread>

#include "poprank/error.hpp"

namespace poprank {

namespace {

template <class NextType>
std::size_t simulate_core(const Ranking& initial, double beta, std::size_t n_users, DisplayMode mode,
                          const std::array<double, 3>& gammas, Rng& rng, NextType&& next_type,
                          const ClickObserver& observer, Trajectory* trajectory) {
  if (!(beta >= 1.0)) throw InvalidInput("beta must be >= 1");
  Ranking ranking = initial;
  std::size_t class1 = 0;
  for (std::size_t n = 0; n < n_users; ++n) {
    const UserType type = next_type(n);
    const double gamma = gammas[static_cast<std::size_t>(type)];
    const auto dist = choice_distribution(ranking, gamma, beta);
    const ItemId item = sample_click(dist, rng);
    const int seen_rank = ranking.rank_of(item);
    if (observer) observer(ClickEvent{n + 1, type, gamma, ranking, item});
    if (mode == DisplayMode::dynamic) {
      ranking.record_click(item);
    } else {
      ranking.add_click_frozen(item);
    }
    const ItemClass cls = ranking.class_of(item);
    class1 += cls;
    if (trajectory != nullptr) {
      trajectory->steps.push_back(Step{n + 1, type, gamma, item, cls, seen_rank, ranking});
    }
  }
  if (trajectory != nullptr) trajectory->class1_clicks = class1;
  return class1;
}

}  // namespace

const char* to_string(DisplayMode mode) { return mode == DisplayMode::dynamic ? "dynamic" : "static"; }

std::size_t simulate_population(const Ranking& initial, double beta, const Population& population,
                                std::size_t n_users, DisplayMode mode, Rng& rng, const ClickObserver& observer) {
  return simulate_core(
      initial, beta, n_users, mode, population.gammas(), rng,
      [&](std::size_t) { return draw_type(population, rng); }, observer, nullptr);
}

std::size_t simulate_types(const Ranking& initial, double beta, std::span<const UserType> types,
                           const std::array<double, 3>& gammas, DisplayMode mode, Rng& rng,
                           const ClickObserver& observer) {
  for (double g : gammas) {
    if (!(g >= 0.0 && g <= 1.0)) throw InvalidInput("gamma must lie in [0, 1]");
  }
  return simulate_core(
      initial, beta, types.size(), mode, gammas, rng, [&](std::size_t n) { return types[n]; }, observer,
      nullptr);
}

Trajectory run(const Environment& env, std::uint64_t seed, DisplayMode mode) {
  Trajectory t{env.initial_ranking(), {}, 0, seed, mode};
  t.steps.reserve(env.n_users());
  Rng rng(seed);
  simulate_core(
      env.initial_ranking(), env.beta(), env.n_users(), mode, env.population().gammas(), rng,
      [&](std::size_t) { return draw_type(env.population(), rng); }, {}, &t);
  return t;
}

Trajectory run(const Environment& env, std::uint64_t seed) { return run(env, seed, DisplayMode::dynamic); }

Trajectory static_run(const Environment& env, std::uint64_t seed) {
  return run(env, seed, DisplayMode::static_order);
}

double ctr(const Trajectory& trajectory) {
  if (trajectory.steps.empty()) throw InvalidInput("ctr of an empty trajectory is undefined");
  return static_cast<double>(trajectory.class1_clicks) / static_cast<double>(trajectory.steps.size());
}

double run_ctr(const Environment& env, std::uint64_t seed, DisplayMode mode) {
  Rng rng(seed);
  const std::size_t c1 =
      simulate_population(env.initial_ranking(), env.beta(), env.population(), env.n_users(), mode, rng);
  return static_cast<double>(c1) / static_cast<double>(env.n_users());
}

CtrSummary summarize(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) throw InvalidInput("a confidence interval needs at least two replicates");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  const double half = 1.96 * sd / std::sqrt(static_cast<double>(n));
  return {mean, std::max(0.0, mean - half), std::min(1.0, mean + half), sd, n};
}

const char* to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::beta: return "beta";
    case SweepAxis::p2_symmetric: return "p2_symmetric";
    case SweepAxis::log_ratio: return "log_ratio";
  }
  return "unknown";
}

SweepAxis parse_sweep_axis(std::string_view name) {
  if (name == "beta") return SweepAxis::beta;
  if (name == "p2_symmetric" || name == "p2") return SweepAxis::p2_symmetric;
  if (name == "log_ratio" || name == "lr") return SweepAxis::log_ratio;
  throw InvalidInput("unknown sweep axis '" + std::string(name) + "' (expected beta, p2_symmetric or log_ratio)");
}

Environment apply_axis(const Environment& base, SweepAxis axis, double value) {
  const Population& pop = base.population();
  switch (axis) {
    case SweepAxis::beta:
      return base.with_beta(value);
    case SweepAxis::p2_symmetric: {
      if (!(value >= 0.0 && value <= 1.0)) throw InvalidInput("p2 must lie in [0, 1]");
      const double p = 0.5 * (1.0 - value);
      return base.with_population(Population(pop.gamma0(), pop.gamma1(), p, p));
    }
    case SweepAxis::log_ratio: {
      if (!std::isfinite(value)) throw InvalidInput("log ratio must be finite");
      const double rest = 1.0 - pop.p2();
      const double p1 = rest / (1.0 + std::exp(value));
      return base.with_population(Population(pop.gamma0(), pop.gamma1(), rest - p1, p1));
    }
  }
  throw InvalidInput("unknown sweep axis");
}

std::uint64_t replicate_seed(std::uint64_t master, double axis_value, std::size_t m1, std::size_t rep) {
  std::uint64_t s = derive_seed(master, std::bit_cast<std::uint64_t>(axis_value));
  s = derive_seed(s, m1);
  return derive_seed(s, rep);
}

std::vector<SweepResult> sweep(const Environment& base, SweepAxis axis, std::span<const double> values,
                               std::span<const std::size_t> m1_values, const SweepOptions& options) {
  if (options.reps < 2) throw InvalidInput("sweeps need at least two replicates per cell");

  struct Cell {
    double value;
    std::size_t m1;
    Environment env;
  };
  std::vector<Cell> cells;
  for (double v : values) {
    const Environment with_axis = apply_axis(base, axis, v);
    for (std::size_t m1 : m1_values) cells.push_back({v, m1, with_axis.with_m1(m1)});
  }

  const std::size_t reps = options.reps;
  const std::size_t total = cells.size() * reps;
  std::vector<double> ctrs(total);
  unsigned threads = options.threads != 0 ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(total, 1)));

  auto work = [&](unsigned tid) {
    for (std::size_t i = tid; i < total; i += threads) {
      const Cell& c = cells[i / reps];
      ctrs[i] = run_ctr(c.env, replicate_seed(options.seed, c.value, c.m1, i % reps), options.mode);
    }
  };
  if (threads <= 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
  }

  std::vector<SweepResult> out;
  out.reserve(cells.size());
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const auto s = summarize(std::span<const double>(ctrs).subspan(k * reps, reps));
    out.push_back({axis, cells[k].value, cells[k].m1, s.mean, s.ci_low, s.ci_high, reps, options.seed});
  }
  return out;
}

std::vector<TrajectoryRow> export_trajectory(const Trajectory& trajectory) {
  std::vector<TrajectoryRow> rows;
  const std::size_t m = trajectory.initial.size();
  rows.reserve(m * (trajectory.steps.size() + 1));
  auto emit = [&](std::size_t step, const Ranking& r) {
    for (ItemId i = 0; i < m; ++i) rows.push_back({step, i, r.class_of(i), r.rank_of(i), r.clicks(i)});
  };
  emit(0, trajectory.initial);
  for (const Step& s : trajectory.steps) emit(s.user, s.after);
  return rows;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory, std::string_view metadata) {
  out << "# " << metadata << '\n';
  out << "step,item,class,rank,clicks\n";
  for (const auto& row : export_trajectory(trajectory)) {
    out << row.step << ',' << row.item << ',' << int(row.item_class) << ',' << row.rank << ',' << row.clicks
        << '\n';
  }
}

void write_sweep_csv(std::ostream& out, std::span<const SweepResult> results, std::string_view metadata) {
  const auto old_precision = out.precision(10);
  out << "# " << metadata << '\n';
  out << "axis,axis_value,m1,mean_ctr,ci_low,ci_high,reps,seed\n";
  for (const auto& r : results) {
    out << to_string(r.axis) << ',' << r.axis_value << ',' << r.m1 << ',' << r.mean_ctr << ',' << r.ci_low << ','
        << r.ci_high << ',' << r.n_reps << ',' << r.seed << '\n';
  }
  out.precision(old_precision);
}

}  // namespace poprank
