// unisar: data generation, training, evaluation, ablations, gradient checks
// and transition analysis from one config file.
//
// Exit codes: 0 success, 1 validation error, 2 runtime failure.

#include "CLI11.hpp"

#include "unisar/config.hpp"
#include "unisar/evaluation.hpp"
#include "unisar/toy.hpp"
#include "unisar/training.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

namespace fs = std::filesystem;
using namespace unisar;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c, const std::string& out_help) {
    cmd->add_option("--config", c.config_path, "JSON config file (comments allowed)");
    cmd->add_option("--seed", c.seed, "Run seed; overrides the config");
    cmd->add_option("--out", c.out, out_help);
    cmd->add_option("--set", c.overrides, "Override a config key, e.g. --set train.max_epochs=5");
}

RunConfig resolve(const Common& c) {
    RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_config_file(c.config_path);
    for (const auto& o : c.overrides) apply_override(cfg, o);
    if (c.seed) cfg.apply_seed(*c.seed);
    cfg.validate();
    return cfg;
}

std::ofstream open_out(const std::string& path) {
    if (path.empty()) throw ConfigError("--out is required");
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    return out;
}

void print_split(const Split& s) {
    std::cout << "split: train=" << s.train.samples.size() << " valid=" << s.valid.samples.size()
              << " test=" << s.test.samples.size() << " dropped_users=" << s.dropped_users << '\n';
}

EvalOptions eval_options(const RunConfig& cfg) {
    EvalOptions e;
    e.n_negatives = cfg.eval.n_negatives;
    e.max_instances = cfg.eval.max_instances;
    e.seed = cfg.seed;
    return e;
}

struct TrainedRun {
    std::unique_ptr<ModelBundle> bundle;
    FitResult fit;
    Split split;
};

TrainedRun train_run(const RunConfig& cfg, bool verbose) {
    const Dataset data = load_dataset(cfg);
    TrainedRun run;
    run.split = make_split(cfg, data);
    if (verbose) print_split(run.split);
    run.bundle = std::make_unique<ModelBundle>(data.vocab, cfg.model, cfg.ablation);
    run.bundle->initialize(cfg.seed);
    run.fit = fit(*run.bundle, run.split.train, run.split.valid, cfg.train, cfg.weights, verbose ? &std::cout : nullptr);
    return run;
}

int cmd_gen_data(const Common& c) {
    RunConfig cfg = resolve(c);
    cfg.data.synthetic.validate();
    const Dataset data = generate_synthetic(cfg.data.synthetic);
    auto out = open_out(c.out);
    write_event_log(data, out);
    std::size_t search = 0, rec = 0;
    for (const auto& h : data.histories) {
        search += h->search_count();
        rec += h->rec_count();
    }
    std::cout << "users=" << data.histories.size() << " events=" << search + rec << " search=" << search
              << " rec=" << rec << " items=" << data.vocab.n_items << " words=" << data.vocab.n_words << '\n';
    return kOk;
}

int cmd_ingest_check(const Common& c, const std::string& input) {
    RunConfig cfg = resolve(c);
    const std::string path = input.empty() ? cfg.data.event_log : input;
    if (path.empty()) throw ConfigError("no event log given (--in or data.event_log)");
    Dataset data;
    try {
        data = ingest_event_log_file(path);
        data.validate_ids();
    } catch (const ParseError& e) {
        throw ConfigError(path + ": " + e.what());
    }
    std::size_t search = 0, rec = 0;
    for (const auto& h : data.histories) {
        search += h->search_count();
        rec += h->rec_count();
    }
    std::cout << "ok: users=" << data.histories.size() << " events=" << search + rec << " search=" << search
              << " rec=" << rec << " vocab(users=" << data.vocab.n_users << ", items=" << data.vocab.n_items
              << ", words=" << data.vocab.n_words << ", categories=" << data.vocab.n_categories << ")\n";
    const Split s = split_leave_one_out(data);
    print_split(s);
    return kOk;
}

int cmd_train(const Common& c) {
    const RunConfig cfg = resolve(c);
    if (c.out.empty()) throw ConfigError("--out <dir> is required");
    fs::create_directories(c.out);
    const auto start = std::chrono::steady_clock::now();
    TrainedRun run = train_run(cfg, true);
    save_params_file(run.bundle->store(), (fs::path(c.out) / "params.bin").string());
    {
        std::ofstream log(fs::path(c.out) / "train_log.csv");
        run.fit.write_log(log, cfg.ablation);
    }
    {
        std::ofstream conf(fs::path(c.out) / "config.json");
        conf << config_to_json(cfg);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (const auto& m : run.fit.models) {
        std::cout << "[" << m.model << "] best epoch " << m.best_epoch << " valid NDCG@10 " << m.best_metric << '\n';
    }
    std::cout << "ablation: " << cfg.ablation.active() << "\ntrained in " << std::fixed << std::setprecision(1) << secs
              << " s; wrote " << c.out << "/params.bin and train_log.csv\n";
    return kOk;
}

int cmd_eval(const Common& c, const std::string& params_path) {
    const RunConfig cfg = resolve(c);
    if (params_path.empty()) throw ConfigError("--params is required");
    if (!fs::exists(params_path)) throw std::runtime_error("parameter file " + params_path + " does not exist");
    const Dataset data = load_dataset(cfg);
    const Split split = make_split(cfg, data);
    ModelBundle bundle(data.vocab, cfg.model, cfg.ablation);
    try {
        load_params_file(bundle.store(), params_path);
    } catch (const std::runtime_error& e) {
        throw ConfigError(e.what());
    }
    const MetricReport report = evaluate(bundle, split.test, eval_options(cfg));
    report.print_table(std::cout);
    if (!c.out.empty()) {
        auto out = open_out(c.out);
        report.write_csv(out);
    }
    return kOk;
}

int cmd_ablate(const Common& c, const std::string& flag_list) {
    const RunConfig base = resolve(c);
    std::vector<std::string> variants;
    if (flag_list == "all") {
        variants = {"none",     "no_r2r",   "no_s2s",   "no_r2s",  "no_s2r",  "no_mask",
                    "no_align", "no_rel",   "no_mca_r", "no_mca_s", "no_mmoe", "no_joint"};
    } else {
        std::stringstream ss(flag_list);
        for (std::string v; std::getline(ss, v, ',');)
            if (!v.empty()) variants.push_back(v);
    }
    if (variants.empty()) throw ConfigError("--flags lists no variants");
    for (const auto& v : variants) {
        if (v == "none") continue;
        AblationFlags probe;
        try {
            probe.flag(v);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    auto out = open_out(c.out);
    out << "variant,seed,flags";
    for (const char* s : {"R", "S"})
        for (const char* m : {"HR@1", "HR@5", "HR@10", "NDCG@5", "NDCG@10"}) out << ',' << s << '_' << m;
    out << '\n' << std::setprecision(10);
    for (const auto& v : variants) {
        RunConfig cfg = base;
        if (v != "none") cfg.ablation.flag(v) = true;
        std::cout << "== variant " << v << " (seed " << cfg.seed << ")\n";
        TrainedRun run = train_run(cfg, false);
        const MetricReport r = evaluate(*run.bundle, run.split.test, eval_options(cfg));
        r.print_table(std::cout);
        out << v << ',' << cfg.seed << ',' << cfg.ablation.active();
        for (const ScenarioMetrics* m : {&r.rec, &r.search})
            out << ',' << m->hr1 << ',' << m->hr5 << ',' << m->hr10 << ',' << m->ndcg5 << ',' << m->ndcg10;
        out << '\n';
        out.flush();
    }
    return kOk;
}

int cmd_gradcheck(const Common& c, bool corrupt, bool extrapolate) {
    const RunConfig cfg = resolve(c);
    ToyOptions o;
    o.seed = cfg.seed;
    o.mask_mode = cfg.model.mask_mode;
    o.plain_blocks = cfg.model.plain_blocks;
    o.literal_denominator = cfg.model.literal_denominator;
    o.flags = cfg.ablation;
    ToyProblem toy = make_toy_problem(o);
    GradCheckOptions opts;
    if (corrupt) {
        opts.after_gradient = [](ParameterStore& store) {
            for (auto& p : store) {
                if (p->name.find(".mmoe.gate_r") != std::string::npos || p->name.find(".tower_r") != std::string::npos) {
                    p->grad[0] += 1e-2;
                    return;
                }
            }
        };
    }
    const auto start = std::chrono::steady_clock::now();
    const GradCheckResult r = gradcheck_toy(toy, opts);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool pass = r.max_relative_error < 1e-4;
    std::cout << std::setprecision(6) << "entries=" << r.entries_checked << " max_rel_error=" << r.max_relative_error
              << " worst=" << r.worst_parameter << "[" << r.worst_index << "] analytic=" << r.worst_analytic
              << " numeric=" << r.worst_numeric << " seconds=" << secs << '\n';
    if (extrapolate) {
        GradCheckOptions rich = opts;
        rich.eps = 1e-3;
        rich.extrapolate = true;
        const GradCheckResult e = gradcheck_toy(toy, rich);
        std::cout << "diagnostic: extrapolated differences (eps=1e-3) max_rel_error=" << e.max_relative_error
                  << " worst=" << e.worst_parameter << "[" << e.worst_index << "]\n";
    }
    std::cout << (pass ? "PASS" : "FAIL") << '\n';
    if (!c.out.empty()) {
        auto out = open_out(c.out);
        out << "entries,max_rel_error,worst_parameter,worst_index,pass\n"
            << r.entries_checked << ',' << std::setprecision(17) << r.max_relative_error << ',' << r.worst_parameter
            << ',' << r.worst_index << ',' << (pass ? 1 : 0) << '\n';
    }
    return pass ? kOk : kRuntime;
}

int cmd_analyze(const Common& c, const std::string& input) {
    const RunConfig cfg = resolve(c);
    Dataset data;
    const std::string path = input.empty() ? cfg.data.event_log : input;
    try {
        data = path.empty() ? generate_synthetic(cfg.data.synthetic) : ingest_event_log_file(path);
    } catch (const ParseError& e) {
        throw ConfigError(path + ": " + e.what());
    }
    const TransitionStats stats = transition_correlation(data);
    if (c.out.empty()) {
        stats.write_csv(std::cout);
    } else {
        auto out = open_out(c.out);
        stats.write_csv(out);
        stats.write_csv(std::cout);
    }
    return kOk;
}

int cmd_init_config(const Common& c) {
    const RunConfig cfg = resolve(c);
    const std::string text = annotated_config(cfg);
    if (c.out.empty()) {
        std::cout << text;
    } else {
        auto out = open_out(c.out);
        out << text;
    }
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"UniSAR joint search and recommendation toolkit"};
    app.require_subcommand(1);

    Common gen, ingest, train, eval, ablate, grad, analyze, init;
    std::string ingest_in, analyze_in, params_path, flag_list = "none,no_mask";
    bool corrupt = false, extrapolate = false;

    auto* g = app.add_subcommand("gen-data", "Write a synthetic event log");
    add_common(g, gen, "Event log to write");
    auto* ic = app.add_subcommand("ingest-check", "Parse and validate an event log");
    add_common(ic, ingest, "Unused");
    ic->add_option("--in", ingest_in, "Event log to check (defaults to data.event_log)");
    auto* tr = app.add_subcommand("train", "Train and save the best parameters");
    add_common(tr, train, "Output directory");
    auto* ev = app.add_subcommand("eval", "Evaluate saved parameters on the test split");
    add_common(ev, eval, "Metric CSV to write");
    ev->add_option("--params", params_path, "Parameter file from train");
    auto* ab = app.add_subcommand("ablate", "Train and evaluate ablation variants");
    add_common(ab, ablate, "Comparison CSV to write");
    ab->add_option("--flags", flag_list, "Comma-separated variants (none = full model) or 'all'");
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the full loss on a toy batch");
    add_common(gc, grad, "Optional result CSV");
    gc->add_flag("--corrupt-gradient", corrupt, "Perturb one analytic gradient entry (harness self-test)");
    gc->add_flag("--extrapolate", extrapolate, "Also report Richardson-extrapolated differences (diagnostic)");
    auto* an = app.add_subcommand("analyze", "Transition correlation of consecutive clicks");
    add_common(an, analyze, "CSV to write");
    an->add_option("--in", analyze_in, "Event log (defaults to data.event_log, else synthetic data)");
    auto* in = app.add_subcommand("init-config", "Print an annotated default config");
    add_common(in, init, "Config file to write");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kValidation;
    }

    try {
        if (g->parsed()) return cmd_gen_data(gen);
        if (ic->parsed()) return cmd_ingest_check(ingest, ingest_in);
        if (tr->parsed()) return cmd_train(train);
        if (ev->parsed()) return cmd_eval(eval, params_path);
        if (ab->parsed()) return cmd_ablate(ablate, flag_list);
        if (gc->parsed()) return cmd_gradcheck(grad, corrupt, extrapolate);
        if (an->parsed()) return cmd_analyze(analyze, analyze_in);
        if (in->parsed()) return cmd_init_config(init);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidation;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntime;
    }
    return kValidation;
}
