#pragma once

// Maximum-likelihood estimation of (beta, gamma0, gamma1) from click records,
// and simulation of the per-condition traffic table from fitted parameters.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "poprank/design.hpp"
#include "poprank/error.hpp"
#include "poprank/model.hpp"

namespace poprank {

enum class Regime : std::uint8_t { unknown, dynamic, static_order };

const char* to_string(Regime regime);

/// One observed click: who clicked, the class layout they saw, and the rank
/// they clicked.
struct ClickRecord {
  UserType participant_type;
  ClassPattern classes_by_rank;
  int clicked_rank;  // 1-based
  Regime regime = Regime::unknown;

  bool operator==(const ClickRecord&) const = default;
};

/// Throws InvalidInput when the rank is out of bounds or a class is empty.
void validate(const ClickRecord& record);

struct ModelParams {
  double beta;
  double gamma0;
  double gamma1;
};

struct LogLikelihood {
  double value;
  /// Records whose clicked item had zero propensity; value is -inf if > 0.
  std::size_t impossible = 0;

  bool finite() const { return impossible == 0; }
};

/// Sum over records of log rho(clicked item). Type 2 uses gamma = 1/2.
/// Terms are combined by pairwise summation in record order.
LogLikelihood log_likelihood(const ModelParams& params, std::span<const ClickRecord> records);

/// Pairwise (cascade) summation; the grouping depends only on the length.
double pairwise_sum(std::span<const double> values);

struct ParameterBox {
  double beta_lo = 1.0;
  double beta_hi = 3.0;
  double gamma0_lo = 0.5;
  double gamma0_hi = 1.0;
  double gamma1_lo = 0.0;
  double gamma1_hi = 0.5;
};

enum class RegimeFilter { pooled, dynamic, static_order };

const char* to_string(RegimeFilter filter);

struct FitOptions {
  ParameterBox box;
  double grid_step = 0.01;
  double tolerance = 1e-4;
  RegimeFilter regime = RegimeFilter::pooled;
};

struct FitResult {
  double beta_hat = 1.0;
  double gamma0_hat = 0.5;
  double gamma1_hat = 0.0;
  double log_likelihood = 0.0;
  std::size_t n_obs = 0;
  bool converged = false;
  /// A gamma is unidentified when its type has no records; it is then held
  /// at the middle of its box.
  bool gamma0_identified = true;
  bool gamma1_identified = true;
  bool beta_at_bound = false;
  bool gamma0_at_bound = false;
  bool gamma1_at_bound = false;
  /// Best value found on the grid, before refinement.
  ModelParams grid_best{1.0, 0.5, 0.0};
  double grid_log_likelihood = 0.0;
  /// Likelihood evaluations spent in the pattern search.
  std::size_t trace_length = 0;
  FitOptions options;
};

/// Grid search over the box (exploiting that the likelihood separates into
/// beta-only, (beta, gamma0) and (beta, gamma1) parts) followed by a compass
/// pattern search from the best grid point. Deterministic. Throws
/// InvalidInput if no records remain after the regime filter.
FitResult fit(std::span<const ClickRecord> records, const FitOptions& options = {});

/// JSON report: estimates, bounds, log-likelihood, n_obs, trace length.
std::string fit_report_json(const FitResult& result, int indent = 2);

enum class TableMode { sim1, sim2 };

const char* to_string(TableMode mode);
TableMode parse_table_mode(std::string_view name);

struct TableRow {
  ConditionSpec condition;
  TypeCounts types;
  double mean_share;
  double ci_low;
  double ci_high;
  std::size_t reps;
};

/// Mean class-1 share per condition over `reps` simulated runs. sim1 uses the
/// observed type counts of each condition, sim2 uses 30/15/55
/// (cat/neither/dog) users everywhere. Each run shuffles its type multiset.
std::vector<TableRow> simulate_table(const ModelParams& params, TableMode mode, std::uint64_t seed,
                                     std::size_t reps);

std::vector<UserType> type_sequence(const TypeCounts& counts);

/// Synthetic records: one simulated run per condition with the given type
/// counts, recording the class layout each user saw.
std::vector<ClickRecord> synthesize_clicks(const ModelParams& params, std::span<const TypeCounts, 8> counts,
                                           std::uint64_t seed);

}  // namespace poprank
