#include "unisar/config.hpp"

#include "json.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace unisar {

namespace {

using json = nlohmann::ordered_json;

class SectionReader {
public:
    SectionReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) throw ConfigError(where() + " must be an object");
    }

    template <typename Unsigned>
    void count(const char* key, Unsigned& out) {
        if (const json* v = take(key)) {
            if (!v->is_number_unsigned()) throw ConfigError(where(key) + " must be a nonnegative integer");
            out = v->get<Unsigned>();
        }
    }
    void integer(const char* key, std::int64_t& out) {
        if (const json* v = take(key)) {
            if (!v->is_number_integer()) throw ConfigError(where(key) + " must be an integer");
            out = v->get<std::int64_t>();
        }
    }
    void number(const char* key, double& out) {
        if (const json* v = take(key)) {
            if (!v->is_number()) throw ConfigError(where(key) + " must be a number");
            out = v->get<double>();
        }
    }
    void boolean(const char* key, bool& out) {
        if (const json* v = take(key)) {
            if (!v->is_boolean()) throw ConfigError(where(key) + " must be true or false");
            out = v->get<bool>();
        }
    }
    void text(const char* key, std::string& out) {
        if (const json* v = take(key)) {
            if (!v->is_string()) throw ConfigError(where(key) + " must be a string");
            out = v->get<std::string>();
        }
    }
    const json* section(const char* key) { return take(key); }

    void finish() const {
        for (auto it = obj_.begin(); it != obj_.end(); ++it) {
            if (!used_.count(it.key())) throw ConfigError("unknown config key " + where(it.key().c_str()));
        }
    }

private:
    const json* take(const char* key) {
        used_.insert(key);
        auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }
    std::string where(const char* key = nullptr) const {
        std::string p = path_;
        if (key) p += (p.empty() ? "" : ".") + std::string(key);
        return p.empty() ? "<root>" : p;
    }

    const json& obj_;
    std::string path_;
    std::set<std::string> used_;
};

const char* mask_mode_name(MaskMode m) { return m == MaskMode::additive ? "additive" : "hadamard_literal"; }

MaskMode parse_mask_mode(const std::string& s) {
    if (s == "additive") return MaskMode::additive;
    if (s == "hadamard_literal" || s == "hadamard-literal") return MaskMode::hadamard_literal;
    throw ConfigError("model.mask_mode must be 'additive' or 'hadamard_literal', got '" + s + "'");
}

json to_json(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["model"] = {{"d", c.model.d},
                  {"heads", c.model.heads},
                  {"max_history_len", c.model.max_history_len},
                  {"n_m", c.model.n_shared},
                  {"n_s", c.model.n_search},
                  {"n_r", c.model.n_rec},
                  {"expert_hidden", c.model.expert_hidden},
                  {"ffn_hidden", c.model.ffn_hidden},
                  {"blocks", c.model.blocks},
                  {"mask_mode", mask_mode_name(c.model.mask_mode)},
                  {"plain_blocks", c.model.plain_blocks},
                  {"literal_denominator", c.model.literal_denominator},
                  {"initial_tau", c.model.initial_tau}};
    j["weights"] = {{"alpha", c.weights.alpha},
                    {"beta", c.weights.beta},
                    {"gamma", c.weights.gamma},
                    {"lambda", c.weights.lambda}};
    j["train"] = {{"batch_size", c.train.batch_size},
                  {"max_epochs", c.train.max_epochs},
                  {"patience", c.train.patience},
                  {"learning_rate", c.train.learning_rate},
                  {"adam_beta1", c.train.adam_beta1},
                  {"adam_beta2", c.train.adam_beta2},
                  {"adam_eps", c.train.adam_eps},
                  {"neg_per_pos", c.train.neg_per_pos},
                  {"rel_negatives", c.train.rel_negatives},
                  {"max_valid_instances", c.train.max_valid_instances}};
    j["eval"] = {{"n_negatives", c.eval.n_negatives}, {"max_instances", c.eval.max_instances}};
    const SyntheticConfig& s = c.data.synthetic;
    j["data"] = {{"event_log", c.data.event_log},
                 {"split", c.data.split},
                 {"valid_from", c.data.valid_from},
                 {"test_from", c.data.test_from},
                 {"min_interactions", c.data.min_interactions},
                 {"max_train_targets_per_user", c.data.max_train_targets_per_user},
                 {"synthetic",
                  {{"n_users", s.n_users},
                   {"n_items", s.n_items},
                   {"n_words", s.n_words},
                   {"n_categories", s.n_categories},
                   {"events_per_user", s.events_per_user},
                   {"p_search", s.p_search},
                   {"p_stay_category_same_scenario", s.p_stay_category_same_scenario},
                   {"p_stay_category_cross_scenario", s.p_stay_category_cross_scenario},
                   {"favorite_categories", s.favorite_categories},
                   {"p_favorite", s.p_favorite},
                   {"max_query_words", s.max_query_words}}}};
    json ab = json::object();
    for (const auto& n : AblationFlags::names()) ab[n] = c.ablation.get(n);
    j["ablation"] = ab;
    return j;
}

void read_count32(SectionReader& r, const char* key, std::int32_t& out) {
    std::int64_t v = out;
    r.integer(key, v);
    if (v < 0 || v > INT32_MAX) throw ConfigError(std::string("data.synthetic.") + key + " out of range");
    out = static_cast<std::int32_t>(v);
}

RunConfig from_json(const json& j) {
    RunConfig c;
    SectionReader root(j, "");
    root.count("seed", c.seed);
    if (const json* m = root.section("model")) {
        SectionReader r(*m, "model");
        r.count("d", c.model.d);
        r.count("heads", c.model.heads);
        r.count("max_history_len", c.model.max_history_len);
        r.count("n_m", c.model.n_shared);
        r.count("n_s", c.model.n_search);
        r.count("n_r", c.model.n_rec);
        r.count("expert_hidden", c.model.expert_hidden);
        r.count("ffn_hidden", c.model.ffn_hidden);
        r.count("blocks", c.model.blocks);
        std::string mode = mask_mode_name(c.model.mask_mode);
        r.text("mask_mode", mode);
        c.model.mask_mode = parse_mask_mode(mode);
        r.boolean("plain_blocks", c.model.plain_blocks);
        r.boolean("literal_denominator", c.model.literal_denominator);
        r.number("initial_tau", c.model.initial_tau);
        r.finish();
    }
    if (const json* w = root.section("weights")) {
        SectionReader r(*w, "weights");
        r.number("alpha", c.weights.alpha);
        r.number("beta", c.weights.beta);
        r.number("gamma", c.weights.gamma);
        r.number("lambda", c.weights.lambda);
        r.finish();
    }
    if (const json* t = root.section("train")) {
        SectionReader r(*t, "train");
        r.count("batch_size", c.train.batch_size);
        r.count("max_epochs", c.train.max_epochs);
        r.count("patience", c.train.patience);
        r.number("learning_rate", c.train.learning_rate);
        r.number("adam_beta1", c.train.adam_beta1);
        r.number("adam_beta2", c.train.adam_beta2);
        r.number("adam_eps", c.train.adam_eps);
        r.count("neg_per_pos", c.train.neg_per_pos);
        r.count("rel_negatives", c.train.rel_negatives);
        r.count("max_valid_instances", c.train.max_valid_instances);
        r.finish();
    }
    if (const json* e = root.section("eval")) {
        SectionReader r(*e, "eval");
        r.count("n_negatives", c.eval.n_negatives);
        r.count("max_instances", c.eval.max_instances);
        r.finish();
    }
    if (const json* d = root.section("data")) {
        SectionReader r(*d, "data");
        r.text("event_log", c.data.event_log);
        r.text("split", c.data.split);
        r.integer("valid_from", c.data.valid_from);
        r.integer("test_from", c.data.test_from);
        r.count("min_interactions", c.data.min_interactions);
        r.count("max_train_targets_per_user", c.data.max_train_targets_per_user);
        if (const json* s = r.section("synthetic")) {
            SectionReader sr(*s, "data.synthetic");
            SyntheticConfig& sc = c.data.synthetic;
            read_count32(sr, "n_users", sc.n_users);
            read_count32(sr, "n_items", sc.n_items);
            read_count32(sr, "n_words", sc.n_words);
            read_count32(sr, "n_categories", sc.n_categories);
            read_count32(sr, "events_per_user", sc.events_per_user);
            sr.number("p_search", sc.p_search);
            sr.number("p_stay_category_same_scenario", sc.p_stay_category_same_scenario);
            sr.number("p_stay_category_cross_scenario", sc.p_stay_category_cross_scenario);
            read_count32(sr, "favorite_categories", sc.favorite_categories);
            sr.number("p_favorite", sc.p_favorite);
            read_count32(sr, "max_query_words", sc.max_query_words);
            sr.finish();
        }
        r.finish();
    }
    if (const json* a = root.section("ablation")) {
        SectionReader r(*a, "ablation");
        for (const auto& n : AblationFlags::names()) r.boolean(n.c_str(), c.ablation.flag(n));
        r.finish();
    }
    root.finish();
    c.apply_seed(c.seed);
    return c;
}

// Provenance notes for init-config.
const std::map<std::string, std::string>& notes() {
    static const std::map<std::string, std::string> n{
        {"seed", "local default; every random stream derives from it"},
        {"model.d", "published setting"},
        {"model.heads", "local default, not published"},
        {"model.max_history_len", "published setting"},
        {"model.n_m", "published setting"},
        {"model.n_s", "published setting"},
        {"model.n_r", "published setting"},
        {"model.expert_hidden", "local default, not published"},
        {"model.ffn_hidden", "local default, 0 means d"},
        {"model.blocks", "local default, not published"},
        {"model.mask_mode", "local default; hadamard_literal multiplies logits by the mask"},
        {"model.plain_blocks", "local default; true drops residuals and layer norm"},
        {"model.literal_denominator", "local default; true drops the positive from contrastive denominators"},
        {"model.initial_tau", "local default, midpoint of the published tuning grid"},
        {"weights.alpha", "published setting"},
        {"weights.beta", "published setting"},
        {"weights.gamma", "local default, midpoint of the published range"},
        {"weights.lambda", "local default from the published grid"},
        {"train.batch_size", "published setting; counts positives with their negatives"},
        {"train.max_epochs", "published setting"},
        {"train.patience", "local default, not published"},
        {"train.learning_rate", "local default from the published grid"},
        {"train.adam_beta1", "local default"},
        {"train.adam_beta2", "local default"},
        {"train.adam_eps", "local default"},
        {"train.neg_per_pos", "local default, not published"},
        {"train.rel_negatives", "local default, not published"},
        {"train.max_valid_instances", "local default, 0 uses the whole validation set"},
        {"eval.n_negatives", "published setting"},
        {"eval.max_instances", "local default, 0 evaluates everything"},
        {"data.event_log", "empty generates synthetic data"},
        {"data.split", "leave_one_out or temporal"},
        {"data.valid_from", "temporal split only"},
        {"data.test_from", "temporal split only"},
        {"data.min_interactions", "local default, 0 disables the filter"},
        {"data.max_train_targets_per_user", "local default, 0 keeps every target"},
    };
    return n;
}

void emit(std::ostringstream& out, const json& j, const std::string& path, int indent) {
    const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
    out << "{\n";
    std::size_t i = 0;
    for (auto it = j.begin(); it != j.end(); ++it, ++i) {
        const std::string key_path = path.empty() ? it.key() : path + "." + it.key();
        out << pad << "  \"" << it.key() << "\": ";
        if (it->is_object()) {
            emit(out, *it, key_path, indent + 1);
        } else {
            out << it->dump();
        }
        if (i + 1 < j.size()) out << ',';
        auto note = notes().find(key_path);
        if (note != notes().end()) out << "  // " << note->second;
        out << '\n';
    }
    out << pad << "}";
}

} // namespace

void RunConfig::apply_seed(std::uint64_t s) {
    seed = s;
    train.seed = s;
    data.synthetic.seed = s;
}

void RunConfig::validate() const {
    try {
        model.validate();
        weights.validate();
        train.validate();
        if (data.event_log.empty()) data.synthetic.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (data.split != "leave_one_out" && data.split != "temporal") {
        throw ConfigError("data.split must be 'leave_one_out' or 'temporal'");
    }
    if (data.split == "temporal" && data.test_from < data.valid_from) {
        throw ConfigError("data.test_from must not precede data.valid_from");
    }
    if (eval.n_negatives == 0) throw ConfigError("eval.n_negatives must be positive");
}

RunConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig c = from_json(j);
    c.validate();
    return c;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string config_to_json(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

std::string annotated_config(const RunConfig& cfg) {
    std::ostringstream out;
    out << "// UniSAR run configuration. Comments are allowed; unknown keys are rejected.\n";
    emit(out, to_json(cfg), "", 0);
    out << '\n';
    return out.str();
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;
    }
    json j = to_json(cfg);
    json* node = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!node->is_object()) throw ConfigError("override key " + key + " does not name a setting");
        if (dot == std::string::npos) {
            if (!node->contains(part)) throw ConfigError("unknown config key " + key);
            (*node)[part] = value;
            break;
        }
        if (!node->contains(part)) throw ConfigError("unknown config key " + key);
        node = &(*node)[part];
        start = dot + 1;
    }
    cfg = from_json(j);
    cfg.validate();
}

Dataset load_dataset(const RunConfig& cfg) {
    Dataset data = cfg.data.event_log.empty() ? generate_synthetic(cfg.data.synthetic)
                                              : ingest_event_log_file(cfg.data.event_log);
    if (cfg.data.min_interactions > 0) data = filter_min_interactions(data, cfg.data.min_interactions);
    return data;
}

Split make_split(const RunConfig& cfg, const Dataset& data) {
    if (cfg.data.split == "temporal") return split_temporal(data, cfg.data.valid_from, cfg.data.test_from);
    SplitOptions opts;
    opts.max_train_targets_per_user = cfg.data.max_train_targets_per_user;
    return split_leave_one_out(data, opts);
}

} // namespace unisar
