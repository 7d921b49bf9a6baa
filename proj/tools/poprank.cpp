// poprank: command line front end for simulation, limit analysis,
// estimation and the experiment server.

#include <pthread.h>
#include <signal.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "poprank/click_log.hpp"
#include "poprank/estimation.hpp"
#include "poprank/experiment.hpp"
#include "poprank/http_server.hpp"
#include "poprank/limit.hpp"
#include "poprank/simulator.hpp"

namespace fs = std::filesystem;
using namespace poprank;

namespace {

struct ModelFlags {
  std::size_t m = 20;
  std::size_t m1 = 3;
  double beta = 1.1;
  double gamma0 = 0.9;
  double gamma1 = 0.1;
  double p0 = 0.4;
  double p1 = 0.4;
  std::size_t n = 100;
  std::uint64_t seed = 1;

  Population population() const { return Population(gamma0, gamma1, p0, p1); }
};

/// Metadata line listing every parameter, e.g. "poprank sweep m=20 beta=1.1".
class Metadata {
 public:
  explicit Metadata(std::string_view command) : text_("poprank " + std::string(command)) {}
  template <class T>
  Metadata& add(std::string_view key, const T& value) {
    std::ostringstream s;
    s << ' ' << key << '=' << value;
    text_ += s.str();
    return *this;
  }
  Metadata& model(const ModelFlags& f, bool with_m1, bool with_n) {
    add("m", f.m);
    if (with_m1) add("m1", f.m1);
    add("beta", f.beta).add("gamma0", f.gamma0).add("gamma1", f.gamma1).add("p0", f.p0).add("p1", f.p1);
    if (with_n) add("n", f.n);
    return *this;
  }
  const std::string& str() const { return text_; }

 private:
  std::string text_;
};

/// Writes an artifact to `path` ("-" is stdout) via a temporary file, so a
/// failed write never leaves a partial file behind.
void write_artifact(const std::string& path, const std::function<void(std::ostream&)>& body) {
  if (path == "-") {
    body(std::cout);
    std::cout.flush();
    if (!std::cout) throw std::runtime_error("writing to stdout failed");
    return;
  }
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = fs::path(path + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    body(out);
    out.flush();
    if (!out) throw std::runtime_error("writing " + tmp.string() + " failed");
  }
  fs::rename(tmp, target);
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path);
  return in;
}

void add_model_flags(CLI::App* cmd, ModelFlags& f, bool with_m1, bool with_n, bool with_p) {
  cmd->add_option("--m", f.m, "number of items M")->capture_default_str();
  if (with_m1) cmd->add_option("--m1", f.m1, "number of class-1 items M1")->capture_default_str();
  cmd->add_option("--beta", f.beta, "position bias factor beta >= 1")->capture_default_str();
  cmd->add_option("--gamma0", f.gamma0, "class-0 propensity of type-0 users")->capture_default_str();
  cmd->add_option("--gamma1", f.gamma1, "class-0 propensity of type-1 users")->capture_default_str();
  auto* p0 = cmd->add_option("--p0", f.p0, "share of type-0 users")->capture_default_str();
  auto* p1 = cmd->add_option("--p1", f.p1, "share of type-1 users")->capture_default_str();
  if (with_p) {
    auto* p = cmd->add_option_function<double>(
        "--p", [&f](double v) { f.p0 = f.p1 = v; }, "sets p0 = p1 = p");
    p->excludes(p0)->excludes(p1);
  }
  if (with_n) cmd->add_option("--n", f.n, "number of users N")->capture_default_str();
  cmd->add_option("--seed", f.seed, "master random seed")->capture_default_str();
}

DisplayMode parse_display_mode(const std::string& s) {
  if (s == "dynamic") return DisplayMode::dynamic;
  if (s == "static") return DisplayMode::static_order;
  throw InvalidInput("unknown display mode '" + s + "' (expected dynamic or static)");
}

RegimeFilter parse_regime_filter(const std::string& s) {
  if (s == "pooled") return RegimeFilter::pooled;
  if (s == "dynamic") return RegimeFilter::dynamic;
  if (s == "static") return RegimeFilter::static_order;
  throw InvalidInput("unknown regime '" + s + "' (expected pooled, dynamic or static)");
}

std::vector<double> default_axis_values(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::beta: return {1.05, 1.1, 1.2, 1.5};
    case SweepAxis::p2_symmetric: return {0.2, 0.5, 0.8};
    case SweepAxis::log_ratio: return {-std::log(7.0), 0.0, std::log(7.0)};
  }
  return {};
}

std::string format_optional(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream s;
  s.precision(10);
  s << *v;
  return s.str();
}

int run_serve(const std::string& host, int port, const std::string& data_dir, ServiceOptions options) {
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  auto sink = std::make_shared<FileEventSink>(data_dir);
  ExperimentService service(sink, std::move(options));
  HttpFrontend http(service);
  const int bound = http.bind(host, port);
  if (bound < 0) {
    std::cerr << "error: cannot bind " << host << ':' << port << '\n';
    return 1;
  }
  std::cerr << "poprank serve: listening on " << host << ':' << bound << ", log " << sink->path().string()
            << " (" << service.replayed_events() << " events replayed)\n";

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    http.stop();
  });
  const bool ok = http.listen();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Popularity ranking dynamics: simulation, limit analysis, estimation and experiment server"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "poprank 0.1.0");

  ModelFlags f;
  std::string out = "-";
  std::string mode_name = "dynamic";
  unsigned threads = 0;
  std::size_t reps = 100;

  auto* simulate = app.add_subcommand("simulate", "one run; writes the ranking trajectory and prints the CTR");
  add_model_flags(simulate, f, true, true, false);
  std::string traj_out = "trajectory.csv";
  simulate->add_option("--out", traj_out, "trajectory CSV path ('-' for stdout)")->capture_default_str();
  simulate->add_option("--mode", mode_name, "dynamic or static display")->capture_default_str();

  auto* sweep_cmd = app.add_subcommand("sweep", "replicated CTR over an axis and a set of M1 values");
  add_model_flags(sweep_cmd, f, false, true, false);
  std::string axis_name = "beta";
  std::vector<double> axis_values;
  std::vector<std::size_t> m1_values;
  sweep_cmd->add_option("--axis", axis_name, "beta, p2_symmetric or log_ratio")->capture_default_str();
  sweep_cmd->add_option("--values", axis_values, "axis values (default depends on the axis)");
  sweep_cmd->add_option("--m1-values", m1_values, "M1 values (default 1..M-1)");
  sweep_cmd->add_option("--reps", reps, "replicates per cell")->capture_default_str();
  sweep_cmd->add_option("--threads", threads, "worker threads (0: all cores)")->capture_default_str();
  sweep_cmd->add_option("--mode", mode_name, "dynamic or static display")->capture_default_str();
  sweep_cmd->add_option("--out", out, "CSV path ('-' for stdout)")->capture_default_str();

  auto* limit_cmd = app.add_subcommand("limit", "limit class-1 traffic share for every M1");
  add_model_flags(limit_cmd, f, false, false, true);
  limit_cmd->add_option("--out", out, "CSV path ('-' for stdout)")->capture_default_str();

  auto* enumerate_cmd = app.add_subcommand("enumerate", "count stable limit patterns by exhaustion");
  add_model_flags(enumerate_cmd, f, true, false, true);
  std::uint64_t enum_limit = kEnumerationLimit;
  bool list_patterns = false;
  enumerate_cmd->add_option("--limit", enum_limit, "largest number of patterns to check")->capture_default_str();
  enumerate_cmd->add_flag("--list", list_patterns, "also list every stable pattern");
  enumerate_cmd->add_option("--out", out, "CSV path ('-' for stdout)")->capture_default_str();

  FitOptions fit_options;
  std::string in_path;
  std::string in_format = "auto";
  std::string regime_name = "pooled";
  auto add_fit_flags = [&](CLI::App* cmd) {
    cmd->add_option("--regime", regime_name, "pooled, dynamic or static records")->capture_default_str();
    cmd->add_option("--grid-step", fit_options.grid_step, "grid spacing")->capture_default_str();
    cmd->add_option("--tolerance", fit_options.tolerance, "pattern-search tolerance")->capture_default_str();
    cmd->add_option("--beta-max", fit_options.box.beta_hi, "upper bound for beta")->capture_default_str();
    cmd->add_option("--out", out, "JSON report path ('-' for stdout)")->capture_default_str();
  };
  auto* fit_cmd = app.add_subcommand("fit", "maximum-likelihood fit of beta, gamma0, gamma1");
  fit_cmd->add_option("--in", in_path, "click records (CSV) or event log (JSON lines)")->required();
  fit_cmd->add_option("--format", in_format, "auto, csv or events")->capture_default_str();
  add_fit_flags(fit_cmd);

  auto* table_cmd = app.add_subcommand("table", "simulated class-1 traffic share for the eight conditions");
  ModelParams table_params{1.22, 0.74, 0.08};
  std::string table_mode = "sim2";
  std::size_t table_reps = 1000;
  std::uint64_t table_seed = 1;
  table_cmd->add_option("--mode", table_mode, "sim1 (observed type counts) or sim2 (30/15/55)")
      ->capture_default_str();
  table_cmd->add_option("--beta", table_params.beta, "beta")->capture_default_str();
  table_cmd->add_option("--gamma0", table_params.gamma0, "gamma0")->capture_default_str();
  table_cmd->add_option("--gamma1", table_params.gamma1, "gamma1")->capture_default_str();
  table_cmd->add_option("--reps", table_reps, "runs per condition")->capture_default_str();
  table_cmd->add_option("--seed", table_seed, "master random seed")->capture_default_str();
  table_cmd->add_option("--out", out, "CSV path ('-' for stdout)")->capture_default_str();

  auto* serve_cmd = app.add_subcommand("serve", "run the experiment server");
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string data_dir = "data";
  std::uint64_t serve_seed = 1;
  std::string override_name = "none";
  std::string assignment_name = "uniform";
  serve_cmd->add_option("--host", host, "bind address")->envname("POPRANK_HOST")->capture_default_str();
  serve_cmd->add_option("--port", port, "port (0 picks a free one)")->envname("POPRANK_PORT")->capture_default_str();
  serve_cmd->add_option("--data-dir", data_dir, "event log directory")
      ->envname("POPRANK_DATA_DIR")
      ->capture_default_str();
  serve_cmd->add_option("--seed", serve_seed, "condition assignment seed")
      ->envname("POPRANK_SEED")
      ->capture_default_str();
  serve_cmd->add_option("--mode", override_name, "none, dynamic or static: restrict assignment")
      ->envname("POPRANK_MODE")
      ->capture_default_str();
  serve_cmd->add_option("--assignment", assignment_name, "uniform or blocked")
      ->envname("POPRANK_ASSIGNMENT")
      ->capture_default_str();

  auto* replay_cmd = app.add_subcommand("replay", "rebuild click records from an event log and refit");
  std::string records_out;
  replay_cmd->add_option("--in", in_path, "event log (JSON lines)")->required();
  replay_cmd->add_option("--records-out", records_out, "also write the click records as CSV");
  add_fit_flags(replay_cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate) {
      const Environment env(f.m, f.m1, f.n, f.beta, f.population());
      const DisplayMode mode = parse_display_mode(mode_name);
      const Trajectory t = run(env, f.seed, mode);
      const auto meta = Metadata("simulate").model(f, true, true).add("seed", f.seed).add("mode", to_string(mode));
      write_artifact(traj_out, [&](std::ostream& os) { write_trajectory_csv(os, t, meta.str()); });
      std::cout << "ctr=" << ctr(t) << " class1_clicks=" << t.class1_clicks << " n=" << f.n << " seed=" << f.seed
                << '\n';
    } else if (*sweep_cmd) {
      const SweepAxis axis = parse_sweep_axis(axis_name);
      if (axis_values.empty()) axis_values = default_axis_values(axis);
      if (m1_values.empty()) {
        for (std::size_t m1 = 1; m1 < f.m; ++m1) m1_values.push_back(m1);
      }
      f.m1 = m1_values.front();
      const Environment env(f.m, f.m1, f.n, f.beta, f.population());
      SweepOptions opts{reps, f.seed, threads, parse_display_mode(mode_name)};
      const auto results = sweep(env, axis, axis_values, m1_values, opts);
      const auto meta = Metadata("sweep")
                            .model(f, false, true)
                            .add("axis", to_string(axis))
                            .add("reps", reps)
                            .add("seed", f.seed)
                            .add("mode", to_string(opts.mode))
                            .add("ci", "normal95");
      write_artifact(out, [&](std::ostream& os) { write_sweep_csv(os, results, meta.str()); });
    } else if (*limit_cmd) {
      const Population pop = f.population();
      const auto rows = limit_table(f.m, pop, f.beta);
      const auto meta = Metadata("limit").model(f, false, false);
      write_artifact(out, [&](std::ostream& os) {
        os.precision(10);
        os << "# " << meta.str() << '\n';
        os << "m1,beta,gamma0,gamma1,p0,p1,limit_share,n_stable_patterns,regime\n";
        for (const auto& r : rows) {
          os << r.m1 << ',' << r.beta << ',' << pop.gamma0() << ',' << pop.gamma1() << ',' << pop.p0() << ','
             << pop.p1() << ',' << format_optional(r.limit.share) << ','
             << (r.limit.n_stable ? std::to_string(*r.limit.n_stable) : std::string()) << ','
             << to_string(r.limit.regime) << '\n';
        }
      });
    } else if (*enumerate_cmd) {
      const Population pop = f.population();
      const auto patterns = enumerate_stable_patterns(f.m, f.m1, pop, f.beta, enum_limit);
      const auto meta = Metadata("enumerate").model(f, true, false).add("limit", enum_limit);
      write_artifact(out, [&](std::ostream& os) {
        os << "# " << meta.str() << '\n';
        os << "m,m1,candidates,n_stable_patterns\n";
        os << f.m << ',' << f.m1 << ',' << binomial(f.m, f.m1) << ',' << patterns.size() << '\n';
        if (list_patterns) {
          os << "pattern\n";
          for (const auto& p : patterns) os << p.str() << '\n';
        }
      });
    } else if (*fit_cmd || *replay_cmd) {
      fit_options.regime = parse_regime_filter(regime_name);
      std::ifstream in = open_input(in_path);
      bool events = replay_cmd->parsed();
      if (*fit_cmd) {
        if (in_format == "auto") {
          events = fs::path(in_path).extension() == ".jsonl";
        } else if (in_format == "events") {
          events = true;
        } else if (in_format != "csv") {
          throw InvalidInput("unknown input format '" + in_format + "' (expected auto, csv or events)");
        }
      }
      const auto records = events ? ingest_event_log(in) : read_click_csv(in);
      if (!records_out.empty()) {
        write_artifact(records_out, [&](std::ostream& os) { write_click_csv(os, records); });
      }
      const FitResult result = fit(records, fit_options);
      write_artifact(out, [&](std::ostream& os) { os << fit_report_json(result) << '\n'; });
    } else if (*table_cmd) {
      const TableMode mode = parse_table_mode(table_mode);
      const auto rows = simulate_table(table_params, mode, table_seed, table_reps);
      const auto meta = Metadata("table")
                            .add("mode", to_string(mode))
                            .add("beta", table_params.beta)
                            .add("gamma0", table_params.gamma0)
                            .add("gamma1", table_params.gamma1)
                            .add("reps", table_reps)
                            .add("seed", table_seed)
                            .add("ci", "normal95");
      write_artifact(out, [&](std::ostream& os) {
        os.precision(6);
        os << "# " << meta.str() << '\n';
        os << "condition,m0,m1,dynamic,cats,neither,dogs,mean_share,ci_low,ci_high,reps\n";
        for (const auto& r : rows) {
          os << r.condition.id << ',' << r.condition.m0 << ',' << r.condition.m1 << ','
             << (r.condition.dynamic ? "true" : "false") << ',' << r.types.cat << ',' << r.types.neither << ','
             << r.types.dog << ',' << r.mean_share << ',' << r.ci_low << ',' << r.ci_high << ',' << r.reps << '\n';
        }
      });
    } else if (*serve_cmd) {
      ServiceOptions opts;
      opts.seed = serve_seed;
      opts.mode = parse_mode_override(override_name);
      opts.assignment = parse_assignment_policy(assignment_name);
      return run_serve(host, port, data_dir, std::move(opts));
    }
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
