// Acceptance checks. Prints one PASS/FAIL/SKIP line per criterion and exits
// non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "poprank/click_log.hpp"
#include "poprank/estimation.hpp"
#include "poprank/experiment.hpp"
#include "poprank/limit.hpp"
#include "poprank/simulator.hpp"

#ifndef POPRANK_DATA_DIR
#define POPRANK_DATA_DIR "data"
#endif

using namespace poprank;

namespace {

enum class Outcome { pass, fail, skip };

struct Verdict {
  Outcome outcome;
  std::string detail;
};

Verdict fail(std::string d) { return {Outcome::fail, std::move(d)}; }
Verdict check(bool ok, std::string d) { return {ok ? Outcome::pass : Outcome::fail, std::move(d)}; }

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// --- choice normalization and degeneracy ------------------------------------

Verdict choice_normalization() {
  Rng rng(20240611);
  double worst = 0.0;
  int propensity_mismatch = 0, extreme_leaks = 0;
  for (int draw = 0; draw < 1000; ++draw) {
    const std::size_t m = 2 + rng.index(39);
    std::vector<ItemClass> classes(m, 0);
    const std::size_t m1 = 1 + rng.index(m - 1);
    for (std::size_t i = 0; i < m1; ++i) classes[i] = 1;
    rng.shuffle(classes);
    const ClassPattern pattern(classes);
    const double gamma = rng.uniform();
    const double beta = 1.0 + 2.0 * rng.uniform();

    const auto rho = choice_by_rank(pattern, gamma, beta);
    double s = 0.0;
    for (double x : rho) s += x;
    worst = std::max(worst, std::abs(s - 1.0));

    const auto flat = choice_by_rank(pattern, gamma, 1.0);
    for (std::size_t r = 0; r < m; ++r) {
      if (flat[r] != propensity(gamma, m - m1, m1, pattern[r])) ++propensity_mismatch;
    }
    const auto cat_lover = choice_by_rank(pattern, 1.0, beta);
    const auto dog_lover = choice_by_rank(pattern, 0.0, beta);
    for (std::size_t r = 0; r < m; ++r) {
      if (pattern[r] == 1 && cat_lover[r] != 0.0) ++extreme_leaks;
      if (pattern[r] == 0 && dog_lover[r] != 0.0) ++extreme_leaks;
    }
  }
  return check(worst <= 1e-12 && propensity_mismatch == 0 && extreme_leaks == 0,
               "max |sum-1|=" + fmt("%.2e", worst) + " flat-vs-propensity mismatches=" +
                   std::to_string(propensity_mismatch) + " extreme leaks=" + std::to_string(extreme_leaks));
}

// --- limit ranking of the expected dynamics -----------------------------------

Verdict few_get_richer_limit() {
  const std::size_t m = 20;
  const double beta = 1.1;
  const Thresholds th = thresholds(m, beta);
  std::vector<std::string> problems;

  for (std::size_t m1 = 1; m1 < m; ++m1) {
    const double m1d = static_cast<double>(m1);
    const bool minority = m1d < th.minority_bound;
    if (!minority && !(m1d > th.majority_bound)) continue;
    // The majority case is the mirror image of the minority case for class 0.
    const double pmax = max_p_for_uniqueness(m, minority ? m1 : m - m1, beta);
    // When pmax is 1/2 there are no indifferent users at p = pmax and every
    // ranking gives each class exactly half the traffic, so the top sample
    // sits just below the bound.
    for (double frac : {0.0, 0.5, 0.99}) {
      const double p = frac * pmax;
      const Population pop(1.0, 0.0, p, p);
      if (!is_stable_limit(block_limit_ranking(m, m1, minority ? 1 : 0), pop, beta)) {
        problems.push_back("block not stable at m1=" + std::to_string(m1) + " p=" + fmt("%.4f", p));
      }
      const LimitShare share = limit_traffic_share(m, m1, pop, beta);
      const bool ok = share.share && (minority ? *share.share > 0.5 : *share.share < 0.5);
      if (!ok) problems.push_back("share on the wrong side of 1/2 at m1=" + std::to_string(m1));
    }
  }

  // Exhaustive search over every placement of 1, 2 or 3 class-1 items.
  std::size_t checked = 0;
  for (std::size_t m1 = 1; m1 <= 3; ++m1) {
    const double p = 0.5 * max_p_for_uniqueness(m, m1, beta);
    const Population pop(1.0, 0.0, p, p);
    const ClassPattern block = block_limit_ranking(m, m1, 1);
    std::size_t stable = 0;
    bool block_found = false;
    for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
      if (static_cast<std::size_t>(__builtin_popcount(mask)) != m1) continue;
      std::vector<ItemClass> classes(m);
      for (std::size_t i = 0; i < m; ++i) classes[i] = (mask >> i) & 1u;
      const ClassPattern pattern(classes);
      ++checked;
      if (is_stable_limit(pattern, pop, beta)) {
        ++stable;
        block_found = block_found || pattern == block;
      }
    }
    if (stable != 1 || !block_found) {
      problems.push_back("m1=" + std::to_string(m1) + ": " + std::to_string(stable) + " stable patterns");
    }
  }
  if (checked != 20 + 190 + 1140) problems.push_back("wrong pattern count " + std::to_string(checked));

  std::string detail = "patterns searched=" + std::to_string(checked);
  for (const auto& p : problems) detail += "; " + p;
  return check(problems.empty(), detail);
}

Verdict limit_share_shape() {
  const std::size_t m = 20;
  const Population pop(0.8, 0.2, 0.4, 0.4);
  bool ok = true;
  std::string detail;
  for (double beta : {1.05, 1.1, 1.2, 1.5}) {
    const auto table = limit_table(m, pop, beta);
    std::optional<double> prev;
    std::vector<std::size_t> rises;
    double min_top = 1.0, max_bottom = 0.0;
    for (const auto& row : table) {
      const bool is_unique = row.limit.n_stable == 1 && row.limit.regime != LimitRegime::intermediate;
      if (!is_unique) {
        prev.reset();  // a new range starts after a gap
        continue;
      }
      const double s = *row.limit.share;
      if (prev && s > *prev) rises.push_back(row.m1);
      prev = s;
      if (row.limit.regime == LimitRegime::class1_top) min_top = std::min(min_top, s);
      if (row.limit.regime == LimitRegime::class1_bottom) max_bottom = std::max(max_bottom, s);
    }
    const auto s3 = table[2].limit.share, s17 = table[16].limit.share;
    const bool ordered = s3 && s17 && *s3 > *s17;
    ok = ok && ordered && rises.empty();
    detail += "beta=" + fmt("%.2f", beta) + ": share(3)=" + (s3 ? fmt("%.3f", *s3) : "n/a") +
              " share(17)=" + (s17 ? fmt("%.3f", *s17) : "n/a") + " min top-range=" + fmt("%.3f", min_top) +
              " max bottom-range=" + fmt("%.3f", max_bottom) + " rises within ranges at " +
              std::to_string(rises.size()) + " m1 values; ";
  }
  return check(ok, detail);
}

// --- simulated click-through sweeps -------------------------------------------

Verdict simulated_ctr_sweeps() {
  const std::vector<std::size_t> m1s{3, 17};
  SweepOptions opts{100, 1, 0, DisplayMode::dynamic};
  std::vector<std::string> problems;
  std::string detail;

  const Environment baseline(20, 3, 100, 1.1, Population(0.9, 0.1, 0.4, 0.4));
  const std::vector<double> beta{1.1};
  const auto base = sweep(baseline, SweepAxis::beta, beta, m1s, opts);
  detail += "baseline ctr(3)=" + fmt("%.3f", base[0].mean_ctr) + " [" + fmt("%.3f", base[0].ci_low) + "," +
            fmt("%.3f", base[0].ci_high) + "] ctr(17)=" + fmt("%.3f", base[1].mean_ctr) + " [" +
            fmt("%.3f", base[1].ci_low) + "," + fmt("%.3f", base[1].ci_high) + "]; ";
  if (!(base[0].ci_low > base[1].ci_high)) problems.push_back("baseline intervals overlap");

  const Environment extreme(20, 3, 100, 1.1, Population(1.0, 0.0, 0.4, 0.4));
  const std::vector<double> p2s{0.2, 0.5, 0.8};
  const auto by_p2 = sweep(extreme, SweepAxis::p2_symmetric, p2s, m1s, opts);
  std::optional<double> prev_gap;
  detail += "gap by p2:";
  for (std::size_t i = 0; i < p2s.size(); ++i) {
    const double gap = by_p2[2 * i].mean_ctr - by_p2[2 * i + 1].mean_ctr;
    detail += " " + fmt("%.3f", gap);
    if (prev_gap && !(gap > *prev_gap)) problems.push_back("gap does not grow at p2=" + fmt("%.1f", p2s[i]));
    prev_gap = gap;
  }
  detail += "; ";

  const std::vector<double> lr{std::log(0.7 / 0.1)};
  const auto skewed = sweep(baseline, SweepAxis::log_ratio, lr, m1s, opts);
  detail += "skewed ctr(3)=" + fmt("%.3f", skewed[0].mean_ctr) + " ctr(17)=" + fmt("%.3f", skewed[1].mean_ctr);
  if (!(skewed[0].mean_ctr > skewed[1].mean_ctr)) problems.push_back("skewed population reverses the effect");

  for (const auto& p : problems) detail += "; " + p;
  return check(problems.empty(), detail);
}

// --- traffic table from fitted parameters ---------------------------------------

Verdict traffic_table() {
  const ModelParams fitted{1.22, 0.74, 0.08};
  // Targets in condition order D1..D4, S1..S4.
  const std::map<TableMode, std::array<double, 8>> targets{
      {TableMode::sim2, {0.47, 0.60, 0.67, 0.75, 0.44, 0.39, 0.35, 0.30}},
      {TableMode::sim1, {0.46, 0.56, 0.73, 0.76, 0.41, 0.37, 0.39, 0.28}},
  };
  bool ok = true;
  std::string detail;
  for (const auto& [mode, want] : targets) {
    const auto rows = simulate_table(fitted, mode, 1, 1000);
    detail += std::string(to_string(mode)) + ":";
    for (std::size_t k = 0; k < 8; ++k) {
      const double err = std::abs(rows[k].mean_share - want[k]);
      if (err > 0.05) ok = false;
      detail += " " + std::string(rows[k].condition.id) + "=" + fmt("%.3f", rows[k].mean_share) +
                (err > 0.05 ? "(!)" : "");
    }
    detail += "; ";
  }
  return check(ok, detail + "tolerance 0.05, 1000 reps");
}

// --- estimation -------------------------------------------------------------------

Verdict mle_recovery() {
  std::array<TypeCounts, 8> counts;
  counts.fill(TypeCounts{300, 150, 550});
  const auto records = synthesize_clicks({1.22, 0.74, 0.08}, counts, 2024);
  const FitResult r = fit(records);
  const double eb = std::abs(r.beta_hat - 1.22), e0 = std::abs(r.gamma0_hat - 0.74),
               e1 = std::abs(r.gamma1_hat - 0.08);
  return check(records.size() == 8000 && r.converged && eb <= 0.05 && e0 <= 0.03 && e1 <= 0.03,
               "n=" + std::to_string(records.size()) + " beta=" + fmt("%.4f", r.beta_hat) +
                   " gamma0=" + fmt("%.4f", r.gamma0_hat) + " gamma1=" + fmt("%.4f", r.gamma1_hat));
}

Verdict mle_published_data() {
  const char* env = std::getenv("POPRANK_DATA_DIR");
  const std::filesystem::path dir = env ? env : POPRANK_DATA_DIR;
  const auto csv = dir / "clicks.csv";
  const auto events = dir / "events.jsonl";
  std::vector<ClickRecord> records;
  if (std::filesystem::exists(csv)) {
    std::ifstream in(csv);
    records = read_click_csv(in);
  } else if (std::filesystem::exists(events)) {
    std::ifstream in(events);
    records = ingest_event_log(in);
  } else {
    return {Outcome::skip, "no click data in " + dir.string() + " (clicks.csv or events.jsonl)"};
  }
  const FitResult r = fit(records);
  const bool ok = std::abs(r.beta_hat - 1.22) <= 0.02 && std::abs(r.gamma0_hat - 0.74) <= 0.02 &&
                  std::abs(r.gamma1_hat - 0.08) <= 0.02;
  return check(ok, "n=" + std::to_string(records.size()) + " beta=" + fmt("%.4f", r.beta_hat) +
                       " gamma0=" + fmt("%.4f", r.gamma0_hat) + " gamma1=" + fmt("%.4f", r.gamma1_hat));
}

// --- experiment service -----------------------------------------------------------

Verdict service_replay() {
  ServiceOptions opts;
  opts.seed = 17;
  opts.token_seed = 17;
  auto sink = std::make_shared<MemoryEventSink>();
  ExperimentService service(sink, opts);

  const Population pop(0.74, 0.08, 0.30, 0.55);
  Rng rng(99);
  std::vector<ClickRecord> emitted;
  struct Tally {
    std::size_t sessions = 0, clicks = 0, class1 = 0;
    std::array<std::size_t, 3> types{0, 0, 0};
  };
  std::map<std::string, Tally> tally;
  const char* answers[] = {"cat", "dog", "neither"};

  for (int i = 0; i < 800; ++i) {
    const auto s = service.create_session();
    Tally& t = tally[s.condition];
    ++t.sessions;
    const UserType type = draw_type(pop, rng);
    service.record_type(s.session_id, answers[static_cast<int>(type)]);
    const auto options = service.get_options(s.session_id);
    std::vector<ItemClass> classes;
    for (const auto& o : options) classes.push_back(service.image(o.handle)->item_class);
    const ClassPattern shown(classes);
    const auto rho = choice_by_rank(shown, pop.gamma(type), 1.22);
    const std::size_t pick = sample_click(rho, rng);
    const int rank = service.record_click(s.session_id, options[pick].item);
    if (rank != static_cast<int>(pick) + 1) return fail("service reported rank " + std::to_string(rank));
    if (i % 3 == 0) service.record_rating(s.session_id, 1 + static_cast<int>(rng.index(5)));
    const bool dynamic = s.condition[0] == 'D';
    emitted.push_back({type, shown, rank, dynamic ? Regime::dynamic : Regime::static_order});
    ++t.clicks;
    t.class1 += classes[pick];
    ++t.types[static_cast<std::size_t>(type)];
  }

  const auto log = service.export_log();
  std::ostringstream text;
  for (const auto& line : log) text << line << '\n';
  std::istringstream in(text.str());
  const auto ingested = ingest_event_log(in);

  // Ingest emits records in log order; with one thread this is session order.
  const bool records_equal = ingested == emitted;

  const auto summary = service.results_summary();
  bool summary_equal = true;
  for (const auto& row : summary["conditions"]) {
    const Tally& t = tally[row["id"].get<std::string>()];
    summary_equal = summary_equal && row["sessions"] == t.sessions && row["clicks"] == t.clicks &&
                    row["class1_clicks"] == t.class1 && row["types"]["cat"] == t.types[0] &&
                    row["types"]["dog"] == t.types[1] && row["types"]["neither"] == t.types[2];
    const nlohmann::json share = t.clicks == 0 ? nlohmann::json(nullptr)
                                               : nlohmann::json(static_cast<double>(t.class1) /
                                                                static_cast<double>(t.clicks));
    summary_equal = summary_equal && row["class1_share"] == share;
  }

  ExperimentService restarted(std::make_shared<MemoryEventSink>(log), opts);
  const bool restart_equal = restarted.results_summary() == summary;

  return check(records_equal && summary_equal && restart_equal,
               "records=" + std::to_string(ingested.size()) + "/" + std::to_string(emitted.size()) +
                   " identical=" + (records_equal ? "yes" : "no") + " summary=" + (summary_equal ? "yes" : "no") +
                   " restart=" + (restart_equal ? "yes" : "no") + " log lines=" + std::to_string(log.size()));
}

struct Criterion {
  const char* name;
  double budget_s;
  std::function<Verdict()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"choice-normalization", 1.0, choice_normalization},
      {"few-get-richer-limit", 10.0, few_get_richer_limit},
      {"limit-share-shape", 5.0, limit_share_shape},
      {"simulated-ctr-sweeps", 60.0, simulated_ctr_sweeps},
      {"traffic-table", 120.0, traffic_table},
      {"mle-recovery", 30.0, mle_recovery},
      {"mle-published-data", 30.0, mle_published_data},
      {"service-replay", 30.0, service_replay},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = fail(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (v.outcome == Outcome::pass && secs > c.budget_s) {
      v = fail("over time budget; " + v.detail);
    }
    const char* tag = v.outcome == Outcome::pass ? "PASS" : v.outcome == Outcome::skip ? "SKIP" : "FAIL";
    if (v.outcome == Outcome::fail) ++failures;
    std::printf("%s %-22s %7.2fs (budget %.0fs)  %s\n", tag, c.name, secs, c.budget_s, v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d failed\n", failures);
  return failures == 0 ? 0 : 1;
}
