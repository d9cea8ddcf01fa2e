#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "unisar/config.hpp"
#include "unisar/evaluation.hpp"
#include "unisar/toy.hpp"
#include "unisar/training.hpp"

#include <sstream>

namespace py = pybind11;
using namespace unisar;

namespace {

RunConfig config_from(const std::string& text, const std::vector<std::string>& overrides) {
    RunConfig cfg = parse_config(text.empty() ? "{}" : text);
    for (const auto& o : overrides) apply_override(cfg, o);
    cfg.validate();
    return cfg;
}

py::dict scenario_metrics(const ScenarioMetrics& m) {
    py::dict d;
    d["count"] = m.count;
    d["HR@1"] = m.hr1;
    d["HR@5"] = m.hr5;
    d["HR@10"] = m.hr10;
    d["NDCG@5"] = m.ndcg5;
    d["NDCG@10"] = m.ndcg10;
    return d;
}

Scenario scenario_from(const std::string& code) {
    if (code == "S" || code == "search") return Scenario::search;
    if (code == "R" || code == "rec") return Scenario::rec;
    throw std::invalid_argument("unknown scenario " + code);
}

} // namespace

PYBIND11_MODULE(_unisar, m) {
    m.doc() = "UniSAR joint search and recommendation model";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    m.def("hr_at_k", &hr_at_k, py::arg("rank"), py::arg("k"));
    m.def("ndcg_at_k", &ndcg_at_k, py::arg("rank"), py::arg("k"));
    m.def(
        "pessimistic_rank",
        [](const std::vector<double>& scores, std::size_t truth) { return pessimistic_rank(scores, truth); },
        py::arg("scores"), py::arg("truth_index") = 0);

    m.def(
        "cross_mask",
        [](const std::vector<std::string>& scenarios) {
            std::vector<Scenario> b;
            for (const auto& s : scenarios) b.push_back(scenario_from(s));
            const Matrix mask = build_cross_mask(b);
            std::vector<std::vector<int>> out(mask.rows(), std::vector<int>(mask.cols()));
            for (std::size_t i = 0; i < mask.rows(); ++i)
                for (std::size_t j = 0; j < mask.cols(); ++j) out[i][j] = static_cast<int>(mask(i, j));
            return out;
        },
        py::arg("scenarios"), "0/1 mask allowing attention only between different scenarios ('S' / 'R').");

    m.def(
        "default_config", [](bool annotated) { return annotated ? annotated_config({}) : config_to_json({}); },
        py::arg("annotated") = false);
    m.def(
        "resolve_config",
        [](const std::string& text, const std::vector<std::string>& overrides) {
            return config_to_json(config_from(text, overrides));
        },
        py::arg("text") = "", py::arg("overrides") = std::vector<std::string>{},
        "Parses a config (comments allowed), applies overrides and returns canonical JSON.");

    m.def(
        "generate_event_log",
        [](const std::string& text, const std::vector<std::string>& overrides) {
            const RunConfig cfg = config_from(text, overrides);
            std::ostringstream out;
            write_event_log(generate_synthetic(cfg.data.synthetic), out);
            return out.str();
        },
        py::arg("text") = "", py::arg("overrides") = std::vector<std::string>{},
        "Synthetic event log in the tab-separated interchange format.");

    m.def(
        "transition_correlation",
        [](const std::string& event_log) {
            std::istringstream in(event_log);
            const TransitionStats st = transition_correlation(ingest_event_log(in));
            py::dict out;
            for (Scenario from : {Scenario::search, Scenario::rec}) {
                for (Scenario to : {Scenario::search, Scenario::rec}) {
                    const auto f = static_cast<int>(from), t = static_cast<int>(to);
                    py::dict cell;
                    cell["count"] = st.count[f][t];
                    cell["correlated_pct"] = st.percentage(from, to);
                    out[py::str(std::string(scenario_name(from)) + "->" + scenario_name(to))] = cell;
                }
            }
            return out;
        },
        py::arg("event_log"));

    m.def(
        "gradcheck_toy",
        [](std::uint64_t seed, double eps, bool extrapolate) {
            ToyOptions o;
            o.seed = seed;
            ToyProblem toy = make_toy_problem(o);
            GradCheckOptions g;
            g.eps = eps;
            g.extrapolate = extrapolate;
            const GradCheckResult r = gradcheck_toy(toy, g);
            py::dict out;
            out["entries"] = r.entries_checked;
            out["max_relative_error"] = r.max_relative_error;
            out["worst_parameter"] = r.worst_parameter;
            out["worst_index"] = r.worst_index;
            return out;
        },
        py::arg("seed") = 7, py::arg("eps") = 1e-5, py::arg("extrapolate") = false,
        "Finite-difference check of the full loss on the built-in toy batch.");

    m.def(
        "train_and_evaluate",
        [](const std::string& text, const std::vector<std::string>& overrides) {
            const RunConfig cfg = config_from(text, overrides);
            py::gil_scoped_release release;
            const Dataset data = load_dataset(cfg);
            const Split split = make_split(cfg, data);
            ModelBundle bundle(data.vocab, cfg.model, cfg.ablation);
            bundle.initialize(cfg.seed);
            const FitResult fr = fit(bundle, split.train, split.valid, cfg.train, cfg.weights);
            EvalOptions eo;
            eo.n_negatives = cfg.eval.n_negatives;
            eo.max_instances = cfg.eval.max_instances;
            eo.seed = cfg.seed;
            const MetricReport report = evaluate(bundle, split.test, eo);
            std::ostringstream log;
            fr.write_log(log, cfg.ablation);
            py::gil_scoped_acquire acquire;
            py::dict out;
            out["search"] = scenario_metrics(report.search);
            out["rec"] = scenario_metrics(report.rec);
            out["train_log"] = log.str();
            return out;
        },
        py::arg("text") = "", py::arg("overrides") = std::vector<std::string>{},
        "Trains on the configured data and returns test metrics per scenario plus the epoch log.");
}
