#pragma once

// Monte Carlo runs of the sequential-user process, CTR summaries, parameter
// sweeps and ranking-evolution export.

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "poprank/model.hpp"

namespace poprank {

enum class DisplayMode { dynamic, static_order };

const char* to_string(DisplayMode mode);

struct Step {
  std::size_t user;  // 1-based
  UserType type;
  double gamma;
  ItemId item;
  ItemClass item_class;
  int rank;       // rank of the clicked item as the user saw it
  Ranking after;  // ranking after the click was recorded
};

struct Trajectory {
  Ranking initial;
  std::vector<Step> steps;
  std::size_t class1_clicks = 0;
  std::uint64_t seed = 0;
  DisplayMode mode = DisplayMode::dynamic;
};

/// What one user saw and did; `seen` is the ranking before the click.
struct ClickEvent {
  std::size_t user;
  UserType type;
  double gamma;
  const Ranking& seen;
  ItemId item;
};

using ClickObserver = std::function<void(const ClickEvent&)>;

/// Sequential users with types drawn from `population`. Returns the number of
/// class-1 clicks.
std::size_t simulate_population(const Ranking& initial, double beta, const Population& population,
                                std::size_t n_users, DisplayMode mode, Rng& rng,
                                const ClickObserver& observer = {});

/// Sequential users with a fixed type sequence; `gammas` maps a type to its
/// gamma.
std::size_t simulate_types(const Ranking& initial, double beta, std::span<const UserType> types,
                           const std::array<double, 3>& gammas, DisplayMode mode, Rng& rng,
                           const ClickObserver& observer = {});

/// N users, each drawn with sample_type and clicking via choice_distribution
/// on the ranking they observe; the ranking is updated after every click.
Trajectory run(const Environment& env, std::uint64_t seed);

/// Like run, but the displayed order stays at the initial ranking.
Trajectory static_run(const Environment& env, std::uint64_t seed);

Trajectory run(const Environment& env, std::uint64_t seed, DisplayMode mode);

/// Fraction of clicks landing on class-1 items.
double ctr(const Trajectory& trajectory);

/// CTR of one run without recording snapshots; identical to ctr(run(...)).
double run_ctr(const Environment& env, std::uint64_t seed, DisplayMode mode = DisplayMode::dynamic);

struct CtrSummary {
  double mean;
  double ci_low;
  double ci_high;
  double stddev;
  std::size_t n;
};

/// Mean with a normal-approximation 95% interval, mean +- 1.96 s / sqrt(n),
/// clamped to [0, 1].
CtrSummary summarize(std::span<const double> values);

enum class SweepAxis { beta, p2_symmetric, log_ratio };

const char* to_string(SweepAxis axis);
SweepAxis parse_sweep_axis(std::string_view name);

/// Environment for one axis value: beta sets beta; p2_symmetric sets
/// p0 = p1 = (1 - v)/2; log_ratio keeps the base p2 and sets p0/p1 = exp(v).
Environment apply_axis(const Environment& base, SweepAxis axis, double value);

struct SweepResult {
  SweepAxis axis;
  double axis_value;
  std::size_t m1;
  double mean_ctr;
  double ci_low;
  double ci_high;
  std::size_t n_reps;
  std::uint64_t seed;  // master seed of the sweep
};

struct SweepOptions {
  std::size_t reps = 100;
  std::uint64_t seed = 1;
  unsigned threads = 0;  // 0: hardware concurrency
  DisplayMode mode = DisplayMode::dynamic;
};

/// Seed of replicate `rep` in the cell (axis_value, m1). Depends only on the
/// cell key and the master seed.
std::uint64_t replicate_seed(std::uint64_t master, double axis_value, std::size_t m1, std::size_t rep);

/// Independent replicates for every (axis value, m1) cell, in the order
/// values x m1_values. Throws InvalidInput for reps < 2 or invalid
/// populations.
std::vector<SweepResult> sweep(const Environment& base, SweepAxis axis, std::span<const double> values,
                               std::span<const std::size_t> m1_values, const SweepOptions& options);

struct TrajectoryRow {
  std::size_t step;
  ItemId item;
  ItemClass item_class;
  int rank;
  std::int64_t clicks;
};

/// Long-format ranking evolution: M rows for the initial ranking (step 0)
/// followed by M rows per user.
std::vector<TrajectoryRow> export_trajectory(const Trajectory& trajectory);

void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory, std::string_view metadata);
void write_sweep_csv(std::ostream& out, std::span<const SweepResult> results, std::string_view metadata);

}  // namespace poprank
