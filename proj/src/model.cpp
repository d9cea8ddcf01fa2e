#include "unisar/model.hpp"

#include <cmath>

namespace unisar {

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void initialize_parameters(const std::vector<Parameter*>& params, Rng& rng, double tau) {
    for (Parameter* p : params) {
        const std::string& n = p->name;
        if (ends_with(n, ".log_tau")) {
            p->value.fill(std::log(tau));
        } else if (ends_with(n, ".gain")) {
            p->value.fill(1.0);
        } else if (ends_with(n, ".bias") || ends_with(n, ".b1") || ends_with(n, ".b2")) {
            p->value.fill(0.0);
        } else {
            xavier_uniform(p->value, rng);
        }
        p->zero_grad();
    }
}

std::vector<std::int32_t> rows_of(std::span<const BehaviorEvent> events, Scenario s) {
    std::vector<std::int32_t> rows;
    for (std::size_t t = 0; t < events.size(); ++t)
        if (events[t].scenario == s) rows.push_back(static_cast<std::int32_t>(t));
    return rows;
}

} // namespace

void ModelConfig::validate() const {
    if (d == 0) throw std::invalid_argument("model.d must be positive");
    AttentionConfig{d, heads, mask_mode}.validate();
    if (max_history_len == 0) throw std::invalid_argument("model.max_history_len must be at least 1");
    if (expert_hidden == 0) throw std::invalid_argument("model.expert_hidden must be positive");
    if (blocks == 0) throw std::invalid_argument("model.blocks must be at least 1");
    if (n_shared + n_search == 0 || n_shared + n_rec == 0) {
        throw std::invalid_argument("each scenario needs at least one expert");
    }
    if (!(initial_tau >= SimilarityHead::kMinTau && initial_tau <= SimilarityHead::kMaxTau)) {
        throw std::invalid_argument("model.initial_tau must lie in [0.05, 5]");
    }
}

const std::vector<std::string>& AblationFlags::names() {
    static const std::vector<std::string> n{"no_r2r",   "no_r2s",   "no_s2r",   "no_s2s",  "no_mask",  "no_align",
                                            "no_rel",   "no_mca_r", "no_mca_s", "no_mmoe", "no_joint", "no_history"};
    return n;
}

bool& AblationFlags::flag(const std::string& name) {
    if (name == "no_r2r") return no_r2r;
    if (name == "no_r2s") return no_r2s;
    if (name == "no_s2r") return no_s2r;
    if (name == "no_s2s") return no_s2s;
    if (name == "no_mask") return no_mask;
    if (name == "no_align") return no_align;
    if (name == "no_rel") return no_rel;
    if (name == "no_mca_r") return no_mca_r;
    if (name == "no_mca_s") return no_mca_s;
    if (name == "no_mmoe") return no_mmoe;
    if (name == "no_joint") return no_joint;
    if (name == "no_history") return no_history;
    throw std::invalid_argument("unknown ablation flag '" + name + "'");
}

bool AblationFlags::get(const std::string& name) const { return const_cast<AblationFlags*>(this)->flag(name); }

std::string AblationFlags::active() const {
    std::string out;
    for (const auto& n : names()) {
        if (!get(n)) continue;
        if (!out.empty()) out += ',';
        out += n;
    }
    return out.empty() ? "none" : out;
}

UniSARModel::UniSARModel(ParameterStore& store, const std::string& prefix, const Vocab& vocab, ModelConfig config,
                         AblationFlags flags, std::optional<Scenario> single_task)
    : prefix_(prefix), vocab_(vocab), config_(config), flags_(flags), single_task_(single_task) {
    config_.validate();
    const std::size_t before = store.size();
    const std::size_t d = config_.d;
    const std::size_t db = 5 * d;
    head_ = (flags_.no_mmoe || single_task_) ? Head::towers : Head::mmoe;

    tables_ = EmbeddingTables::create(store, prefix + ".emb", vocab, d);
    positional_ = PositionalEmbeddings::create(store, prefix + ".pos", config_.max_history_len, d);
    rel_head_ = SimilarityHead::create(store, prefix + ".rel", d, config_.initial_tau);
    align_head_ = SimilarityHead::create(store, prefix + ".align", d, config_.initial_tau);
    encoders_ = TransitionEncoders::create(store, prefix, d, config_.ffn_width(), config_.blocks);
    fusion_ = FusionBlocks::create(store, prefix, d, config_.ffn_width());
    target_ = TargetAttentionParams::create(store, prefix + ".target", d);
    q_phi_ = &store.create(prefix + ".q_phi", 1, d);
    if (head_ == Head::mmoe) {
        mmoe_ = MMoEParams::create(store, prefix + ".mmoe", db, config_.n_shared, config_.n_search, config_.n_rec,
                                   config_.expert_hidden);
    } else {
        if (serves(Scenario::search)) tower_s_ = ExpertGroup::create(store, prefix + ".tower_s", db, 1, config_.expert_hidden);
        if (serves(Scenario::rec)) tower_r_ = ExpertGroup::create(store, prefix + ".tower_r", db, 1, config_.expert_hidden);
    }

    std::size_t i = 0;
    for (auto& p : store) {
        if (i++ >= before) params_.push_back(p.get());
    }
}

void UniSARModel::initialize(std::uint64_t seed) {
    Rng rng = substream(seed, "init");
    initialize_parameters(params_, rng, config_.initial_tau);
}

TransitionOptions UniSARModel::transition_options() const {
    return {AttentionConfig{config_.d, config_.heads, config_.mask_mode}, config_.plain_blocks};
}

AlignmentTerms UniSARModel::alignment_terms() const {
    if (flags_.no_align || flags_.no_history) return {false, false};
    return {!(flags_.no_s2s || flags_.no_r2s), !(flags_.no_r2r || flags_.no_s2r)};
}

HistoryEncoding UniSARModel::encode_history(Tape& tape, std::span<const BehaviorEvent> history) const {
    return encode_impl(tape, history, true);
}

HistoryEncoding UniSARModel::encode_pooled(Tape& tape, std::span<const BehaviorEvent> history) const {
    return encode_impl(tape, history, false);
}

HistoryEncoding UniSARModel::encode_impl(Tape& tape, std::span<const BehaviorEvent> history,
                                         bool fuse_sequences) const {
    const std::size_t d = config_.d;
    if (history.size() > config_.max_history_len) history = history.subspan(history.size() - config_.max_history_len);
    if (flags_.no_history) history = {};

    HistoryEncoding enc;
    Var empty = tape.constant(Matrix(0, d));
    Var zero = tape.constant(Matrix(1, d));
    if (history.empty()) {
        enc.v_s = enc.v_r = empty;
        enc.h_s2s = enc.h_r2s = enc.h_r2r = enc.h_s2r = zero;
        return enc;
    }

    const std::vector<std::int32_t> search_rows = rows_of(history, Scenario::search);
    const std::vector<std::int32_t> rec_rows = rows_of(history, Scenario::rec);
    enc.has_search = !search_rows.empty();
    enc.has_rec = !rec_rows.empty();

    Var e = embed_events(tape, tables_, history);
    Var e_u = add(e, positional_rows(tape, *positional_.mixed, history.size()));
    Var e_s = add(select_rows(e, search_rows), positional_rows(tape, *positional_.search, search_rows.size()));
    Var e_r = add(select_rows(e, rec_rows), positional_rows(tape, *positional_.rec, rec_rows.size()));

    const TransitionOptions opts = transition_options();
    const std::vector<Scenario> b = scenario_vector(history);
    const Matrix mask = flags_.no_mask ? Matrix(b.size(), b.size(), 1.0) : build_cross_mask(b);
    CrossScenarioReps cross = extract_cross_scenario(opts, encoders_, e_u, mask, b);

    Var h_s2s = flags_.no_s2s ? cross.h_r2s : encode_sequence(opts, encoders_.search, e_s, nullptr);
    Var h_r2r = flags_.no_r2r ? cross.h_s2r : encode_sequence(opts, encoders_.rec, e_r, nullptr);

    enc.h_s2s = mean_rows(h_s2s);
    enc.h_r2s = mean_rows(cross.h_r2s);
    enc.h_r2r = mean_rows(h_r2r);
    enc.h_s2r = mean_rows(cross.h_s2r);
    if (!fuse_sequences) return enc;

    Var query_s = flags_.no_r2s ? h_s2s : cross.h_r2s;
    Var query_r = flags_.no_s2r ? h_r2r : cross.h_s2r;
    enc.v_s = flags_.no_mca_s ? add(h_s2s, query_s) : fuse(opts, fusion_.search, h_s2s, query_s);
    enc.v_r = flags_.no_mca_r ? add(h_r2r, query_r) : fuse(opts, fusion_.rec, h_r2r, query_r);
    return enc;
}

Var UniSARModel::logits(Tape& tape, const HistoryEncoding& enc, UserId user, Scenario scenario,
                        const std::optional<std::vector<WordId>>& query, std::span<const ItemId> candidates) const {
    if (!serves(scenario)) {
        throw std::logic_error(std::string("model ") + prefix_ + " does not serve the " + scenario_name(scenario) +
                               " scenario");
    }
    const std::size_t m = candidates.size();
    if (m == 0) throw std::invalid_argument("no candidates to score");
    Var e_i = tape.gather(*tables_.items, candidates);
    const std::int32_t uid = user;
    Var e_u = repeat_row(tape.gather(*tables_.users, std::span<const std::int32_t>(&uid, 1)), m);
    Var e_q;
    if (scenario == Scenario::search) {
        if (!query) throw std::invalid_argument("search sample without a query");
        e_q = repeat_row(embed_query(tape, tables_, *query), m);
    } else {
        e_q = repeat_row(tape.param(*q_phi_), m);
    }
    Var v_s = aggregate_history_batch(enc.v_s, tape.param(*target_.w_s), e_i);
    Var v_r = aggregate_history_batch(enc.v_r, tape.param(*target_.w_r), e_i);
    Var x = build_shared_bottom(e_u, e_i, e_q, v_s, v_r);
    if (head_ == Head::mmoe) return mmoe_forward(mmoe_, x, scenario).logit;
    return (scenario == Scenario::search ? tower_s_ : tower_r_).forward(x);
}

std::vector<double> UniSARModel::score_group(const Group& group) const {
    Tape tape(false);
    HistoryEncoding enc = encode_history(tape, group.history.events());
    Var z = logits(tape, enc, group.user, group.scenario, group.query, group.candidates);
    return z.value().data();
}

ModelBundle::ModelBundle(const Vocab& vocab, const ModelConfig& config, const AblationFlags& flags)
    : store_(std::make_unique<ParameterStore>()), vocab_(vocab), config_(config), flags_(flags) {
    if (flags.no_joint) {
        models_.push_back(std::make_unique<UniSARModel>(*store_, "rec", vocab, config, flags, Scenario::rec));
        models_.push_back(std::make_unique<UniSARModel>(*store_, "search", vocab, config, flags, Scenario::search));
    } else {
        models_.push_back(std::make_unique<UniSARModel>(*store_, "unisar", vocab, config, flags));
    }
}

const UniSARModel& ModelBundle::model_for(Scenario s) const {
    for (const auto& m : models_)
        if (m->serves(s)) return *m;
    throw std::logic_error("no model serves the requested scenario");
}

void ModelBundle::initialize(std::uint64_t seed) {
    Rng rng = substream(seed, "init");
    for (auto& m : models_) initialize_parameters(m->parameters(), rng, config_.initial_tau);
}

} // namespace unisar
