#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "poprank/click_log.hpp"
#include "poprank/estimation.hpp"
#include "poprank/experiment.hpp"
#include "poprank/limit.hpp"
#include "poprank/simulator.hpp"

namespace py = pybind11;
using namespace poprank;

namespace {

py::object json_to_python(const std::string& text) { return py::module_::import("json").attr("loads")(text); }

Population make_population(double gamma0, double gamma1, double p0, double p1) {
  return Population(gamma0, gamma1, p0, p1);
}

DisplayMode display_mode(const std::string& s) {
  if (s == "dynamic") return DisplayMode::dynamic;
  if (s == "static") return DisplayMode::static_order;
  throw InvalidInput("mode must be 'dynamic' or 'static'");
}

Regime regime_of(const std::string& s) {
  if (s == "dynamic") return Regime::dynamic;
  if (s == "static") return Regime::static_order;
  if (s == "unknown" || s.empty()) return Regime::unknown;
  throw InvalidInput("regime must be 'dynamic', 'static' or 'unknown'");
}

py::dict record_to_dict(const ClickRecord& r) {
  py::dict d;
  d["participant_type"] = static_cast<int>(r.participant_type);
  d["clicked_rank"] = r.clicked_rank;
  d["classes_by_rank"] = r.classes_by_rank.str();
  d["regime"] = to_string(r.regime);
  return d;
}

ClickRecord record_from_python(const py::handle& h) {
  auto get = [&](const char* key) -> py::object {
    if (py::isinstance<py::dict>(h)) return h.cast<py::dict>()[key];
    return h.attr(key);
  };
  ClickRecord r{static_cast<UserType>(get("participant_type").cast<int>()),
                ClassPattern::parse(get("classes_by_rank").cast<std::string>()), get("clicked_rank").cast<int>()};
  if (py::isinstance<py::dict>(h) ? h.cast<py::dict>().contains("regime") : py::hasattr(h, "regime")) {
    r.regime = regime_of(get("regime").cast<std::string>());
  }
  validate(r);
  return r;
}

std::vector<ClickRecord> records_from_python(const py::iterable& items) {
  std::vector<ClickRecord> out;
  for (const auto& h : items) out.push_back(record_from_python(h));
  return out;
}

py::list records_to_python(const std::vector<ClickRecord>& records) {
  py::list out;
  for (const auto& r : records) out.append(record_to_dict(r));
  return out;
}

}  // namespace

PYBIND11_MODULE(_poprank, m) {
  m.doc() = "Popularity ranking dynamics: model, limit analysis, simulation, estimation, experiment service";

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ServiceError& e) {
      switch (e.kind()) {
        case ServiceErrorKind::not_found: PyErr_SetString(PyExc_LookupError, e.what()); return;
        case ServiceErrorKind::conflict: PyErr_SetString(PyExc_RuntimeError, e.what()); return;
        case ServiceErrorKind::rejected: PyErr_SetString(PyExc_ValueError, e.what()); return;
        case ServiceErrorKind::storage: PyErr_SetString(PyExc_OSError, e.what()); return;
      }
    }
  });

  // model
  m.def(
      "choice_by_rank",
      [](const std::string& pattern, double gamma, double beta) {
        return choice_by_rank(ClassPattern::parse(pattern), gamma, beta);
      },
      py::arg("pattern"), py::arg("gamma"), py::arg("beta"),
      "Click probabilities by rank for one user; pattern is a 0/1 string, rank 1 first.");
  m.def(
      "expected_choice_by_rank",
      [](const std::string& pattern, double gamma0, double gamma1, double p0, double p1, double beta) {
        return expected_choice_by_rank(ClassPattern::parse(pattern), make_population(gamma0, gamma1, p0, p1), beta);
      },
      py::arg("pattern"), py::arg("gamma0"), py::arg("gamma1"), py::arg("p0"), py::arg("p1"), py::arg("beta"));

  py::class_<Ranking>(m, "Ranking")
      .def(py::init([](const std::vector<int>& classes, const std::vector<std::size_t>& order,
                       const std::vector<std::int64_t>& clicks) {
             std::vector<ItemClass> c(classes.begin(), classes.end());
             for (int v : classes) {
               if (v != 0 && v != 1) throw InvalidInput("class labels must be 0 or 1");
             }
             return Ranking(std::move(c), order, clicks);
           }),
           py::arg("classes"), py::arg("order"), py::arg("clicks"))
      .def_static("initial", &Ranking::initial, py::arg("m"), py::arg("m1"))
      .def_static(
          "from_pattern", [](const std::string& p, std::int64_t clicks) {
            return Ranking::from_pattern(ClassPattern::parse(p), clicks);
          },
          py::arg("pattern"), py::arg("initial_clicks") = 1)
      .def("record_click", &Ranking::record_click, py::arg("item"))
      .def("rank_of", &Ranking::rank_of, py::arg("item"))
      .def_property_readonly("order", [](const Ranking& r) { return std::vector<ItemId>(r.order().begin(), r.order().end()); })
      .def_property_readonly("clicks",
                             [](const Ranking& r) { return std::vector<std::int64_t>(r.clicks().begin(), r.clicks().end()); })
      .def_property_readonly("pattern", [](const Ranking& r) { return r.pattern().str(); })
      .def("__len__", &Ranking::size)
      .def("__eq__", [](const Ranking& a, const Ranking& b) { return a == b; });
  m.def("update_ranking", &update_ranking, py::arg("ranking"), py::arg("clicked"));

  // limit analysis
  m.def(
      "is_stable_limit",
      [](const std::string& pattern, double gamma0, double gamma1, double p0, double p1, double beta) {
        return is_stable_limit(ClassPattern::parse(pattern), make_population(gamma0, gamma1, p0, p1), beta);
      },
      py::arg("pattern"), py::arg("gamma0"), py::arg("gamma1"), py::arg("p0"), py::arg("p1"), py::arg("beta"));
  m.def(
      "enumerate_stable_patterns",
      [](std::size_t m_total, std::size_t m1, double gamma0, double gamma1, double p0, double p1, double beta) {
        std::vector<std::string> out;
        for (const auto& p :
             enumerate_stable_patterns(m_total, m1, make_population(gamma0, gamma1, p0, p1), beta)) {
          out.push_back(p.str());
        }
        return out;
      },
      py::arg("m"), py::arg("m1"), py::arg("gamma0"), py::arg("gamma1"), py::arg("p0"), py::arg("p1"),
      py::arg("beta"));
  m.def(
      "limit_table",
      [](std::size_t m_total, double gamma0, double gamma1, double p0, double p1, double beta) {
        py::list rows;
        for (const auto& r : limit_table(m_total, make_population(gamma0, gamma1, p0, p1), beta)) {
          py::dict d;
          d["m1"] = r.m1;
          d["limit_share"] = r.limit.share ? py::cast(*r.limit.share) : py::none();
          d["n_stable_patterns"] = r.limit.n_stable ? py::cast(*r.limit.n_stable) : py::none();
          d["regime"] = to_string(r.limit.regime);
          d["pattern"] = r.limit.pattern.str();
          d["flagged"] = r.limit.flagged;
          rows.append(d);
        }
        return rows;
      },
      py::arg("m"), py::arg("gamma0"), py::arg("gamma1"), py::arg("p0"), py::arg("p1"), py::arg("beta"));
  m.def("max_p_for_uniqueness", &max_p_for_uniqueness, py::arg("m"), py::arg("m1"), py::arg("beta"));

  // simulation
  m.def(
      "run",
      [](std::size_t m_total, std::size_t m1, std::size_t n, double beta, double gamma0, double gamma1, double p0,
         double p1, std::uint64_t seed, const std::string& mode) {
        const Environment env(m_total, m1, n, beta, make_population(gamma0, gamma1, p0, p1));
        const Trajectory t = run(env, seed, display_mode(mode));
        std::vector<int> types, ranks, classes;
        for (const auto& s : t.steps) {
          types.push_back(static_cast<int>(s.type));
          ranks.push_back(s.rank);
          classes.push_back(s.item_class);
        }
        py::dict d;
        d["ctr"] = ctr(t);
        d["class1_clicks"] = t.class1_clicks;
        d["types"] = types;
        d["clicked_ranks"] = ranks;
        d["clicked_classes"] = classes;
        d["final_pattern"] = t.steps.back().after.pattern().str();
        return d;
      },
      py::arg("m"), py::arg("m1"), py::arg("n"), py::arg("beta"), py::arg("gamma0"), py::arg("gamma1"), py::arg("p0"),
      py::arg("p1"), py::arg("seed"), py::arg("mode") = "dynamic");
  m.def(
      "sweep",
      [](std::size_t m_total, std::size_t n, double beta, double gamma0, double gamma1, double p0, double p1,
         const std::string& axis, const std::vector<double>& values, const std::vector<std::size_t>& m1_values,
         std::size_t reps, std::uint64_t seed, unsigned threads, const std::string& mode) {
        const Environment env(m_total, m1_values.at(0), n, beta, make_population(gamma0, gamma1, p0, p1));
        std::vector<SweepResult> results;
        {
          py::gil_scoped_release release;
          results = sweep(env, parse_sweep_axis(axis), values, m1_values,
                          SweepOptions{reps, seed, threads, display_mode(mode)});
        }
        py::list rows;
        for (const auto& r : results) {
          py::dict d;
          d["axis"] = to_string(r.axis);
          d["axis_value"] = r.axis_value;
          d["m1"] = r.m1;
          d["mean_ctr"] = r.mean_ctr;
          d["ci_low"] = r.ci_low;
          d["ci_high"] = r.ci_high;
          d["reps"] = r.n_reps;
          d["seed"] = r.seed;
          rows.append(d);
        }
        return rows;
      },
      py::arg("m"), py::arg("n"), py::arg("beta"), py::arg("gamma0"), py::arg("gamma1"), py::arg("p0"), py::arg("p1"),
      py::arg("axis"), py::arg("values"), py::arg("m1_values"), py::arg("reps") = 100, py::arg("seed") = 1,
      py::arg("threads") = 0, py::arg("mode") = "dynamic");

  // estimation
  m.def(
      "log_likelihood",
      [](double beta, double gamma0, double gamma1, const py::iterable& records) {
        return log_likelihood({beta, gamma0, gamma1}, records_from_python(records)).value;
      },
      py::arg("beta"), py::arg("gamma0"), py::arg("gamma1"), py::arg("records"));
  m.def(
      "fit",
      [](const py::iterable& records, const std::string& regime, double grid_step, double tolerance) {
        FitOptions opts;
        opts.grid_step = grid_step;
        opts.tolerance = tolerance;
        if (regime == "pooled") {
          opts.regime = RegimeFilter::pooled;
        } else if (regime == "dynamic") {
          opts.regime = RegimeFilter::dynamic;
        } else if (regime == "static") {
          opts.regime = RegimeFilter::static_order;
        } else {
          throw InvalidInput("regime must be 'pooled', 'dynamic' or 'static'");
        }
        const auto recs = records_from_python(records);
        FitResult r;
        {
          py::gil_scoped_release release;
          r = fit(recs, opts);
        }
        return json_to_python(fit_report_json(r, -1));
      },
      py::arg("records"), py::arg("regime") = "pooled", py::arg("grid_step") = 0.01, py::arg("tolerance") = 1e-4);
  m.def(
      "simulate_table",
      [](double beta, double gamma0, double gamma1, const std::string& mode, std::uint64_t seed, std::size_t reps) {
        std::vector<TableRow> rows;
        {
          py::gil_scoped_release release;
          rows = simulate_table({beta, gamma0, gamma1}, parse_table_mode(mode), seed, reps);
        }
        py::list out;
        for (const auto& r : rows) {
          py::dict d;
          d["condition"] = std::string(r.condition.id);
          d["m0"] = r.condition.m0;
          d["m1"] = r.condition.m1;
          d["dynamic"] = r.condition.dynamic;
          d["mean_share"] = r.mean_share;
          d["ci_low"] = r.ci_low;
          d["ci_high"] = r.ci_high;
          d["reps"] = r.reps;
          out.append(d);
        }
        return out;
      },
      py::arg("beta"), py::arg("gamma0"), py::arg("gamma1"), py::arg("mode") = "sim2", py::arg("seed") = 1,
      py::arg("reps") = 1000);
  m.def(
      "synthesize_clicks",
      [](double beta, double gamma0, double gamma1, std::size_t cats, std::size_t neither, std::size_t dogs,
         std::uint64_t seed) {
        std::array<TypeCounts, 8> counts;
        counts.fill(TypeCounts{cats, neither, dogs});
        return records_to_python(synthesize_clicks({beta, gamma0, gamma1}, counts, seed));
      },
      py::arg("beta"), py::arg("gamma0"), py::arg("gamma1"), py::arg("cats") = 300, py::arg("neither") = 150,
      py::arg("dogs") = 550, py::arg("seed") = 1);
  m.def(
      "ingest_event_log",
      [](const std::string& text) {
        std::istringstream in(text);
        return records_to_python(ingest_event_log(in));
      },
      py::arg("text"), "Click records rebuilt from JSON-lines event log text.");

  // experiment service over an in-memory log
  py::class_<ExperimentService>(m, "ExperimentService")
      .def(py::init([](std::uint64_t seed, const std::string& assignment, const std::string& mode,
                       const std::vector<std::string>& existing_log) {
             ServiceOptions opts;
             opts.seed = seed;
             opts.token_seed = seed;
             opts.assignment = parse_assignment_policy(assignment);
             opts.mode = parse_mode_override(mode);
             return std::make_unique<ExperimentService>(std::make_shared<MemoryEventSink>(existing_log),
                                                        std::move(opts));
           }),
           py::arg("seed") = 1, py::arg("assignment") = "uniform", py::arg("mode") = "none",
           py::arg("existing_log") = std::vector<std::string>{})
      .def("create_session",
           [](ExperimentService& s) {
             const auto info = s.create_session();
             return py::make_tuple(info.session_id, info.condition);
           })
      .def("record_type", &ExperimentService::record_type, py::arg("session_id"), py::arg("answer"))
      .def(
          "get_options",
          [](ExperimentService& s, const std::string& id) {
            py::list out;
            for (const auto& o : s.get_options(id)) out.append(py::make_tuple(o.position, o.item, o.handle));
            return out;
          },
          py::arg("session_id"))
      .def("record_click", &ExperimentService::record_click, py::arg("session_id"), py::arg("item"))
      .def("record_rating", &ExperimentService::record_rating, py::arg("session_id"), py::arg("stars"))
      .def("results_summary", [](const ExperimentService& s) { return json_to_python(s.results_summary().dump()); })
      .def("export_log", &ExperimentService::export_log);
}
