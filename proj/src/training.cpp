#include "unisar/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace unisar {

namespace {

double bce_from_logit(double z, double y) {
    const double softplus = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
    return softplus - y * z;
}

void check_finite(const LossBreakdown& b) {
    const std::pair<const char*, double> terms[] = {{"L_Click_R", b.click_r}, {"L_Click_S", b.click_s},
                                                    {"L_Rel", b.rel},         {"L_Align", b.align},
                                                    {"L2", b.l2},             {"total", b.total}};
    for (auto [name, v] : terms) {
        if (!std::isfinite(v)) {
            throw NonFiniteLoss(std::string("non-finite loss term ") + name + " = " + std::to_string(v));
        }
    }
}

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
}

std::map<std::string, Matrix> snapshot_of(const std::vector<Parameter*>& params) {
    std::map<std::string, Matrix> out;
    for (const Parameter* p : params) out.emplace(p->name, p->value);
    return out;
}

void restore_into(const std::vector<Parameter*>& params, const std::map<std::string, Matrix>& snap) {
    for (Parameter* p : params) p->value = snap.at(p->name);
}

void put_u32(std::ostream& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::ostream& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_uint(std::istream& in, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
        const int c = in.get();
        if (c == std::char_traits<char>::eof()) throw std::runtime_error("parameter file is truncated");
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return v;
}

constexpr char kMagic[] = "UNISARPARAMS";

} // namespace

void LossWeights::validate() const {
    for (double w : {alpha, beta, gamma, lambda}) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("loss weights must be finite and nonnegative");
    }
}

void TrainConfig::validate() const {
    if (batch_size == 0) throw std::invalid_argument("train.batch_size must be positive");
    if (max_epochs == 0) throw std::invalid_argument("train.max_epochs must be positive");
    if (patience == 0) throw std::invalid_argument("train.patience must be positive");
    if (neg_per_pos == 0) throw std::invalid_argument("train.neg_per_pos must be positive");
    if (rel_negatives == 0) throw std::invalid_argument("train.rel_negatives must be positive");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train.learning_rate must be positive");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        throw std::invalid_argument("adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) throw std::invalid_argument("adam epsilon must be positive");
}

TermWeights term_weights(const UniSARModel& model, const LossWeights& w) {
    TermWeights t;
    if (!model.single_task()) {
        t.click_r = 1.0;
        t.click_s = w.gamma;
        t.rel = (1.0 + w.gamma) * w.alpha;
        t.align = (1.0 + w.gamma) * w.beta;
    } else {
        (*model.single_task() == Scenario::rec ? t.click_r : t.click_s) = 1.0;
        t.rel = w.alpha;
        t.align = w.beta;
    }
    const AlignmentTerms terms = model.alignment_terms();
    if (model.flags().no_rel) t.rel = 0.0;
    if (!terms.search && !terms.rec) t.align = 0.0;
    t.lambda = w.lambda;
    return t;
}

double click_loss(std::span<const double> scores, std::span<const double> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("scores and labels differ in length");
    if (scores.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double p = scores[i], y = labels[i];
        sum -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    }
    return sum / static_cast<double>(scores.size());
}

Var click_loss_from_logits(Var logits, std::span<const double> labels) {
    Tape& t = *logits.tape;
    const std::size_t m = logits.rows();
    if (labels.size() != m || logits.cols() != 1) throw ShapeError("click loss expects an m x 1 logit column");
    if (m == 0) return t.constant(Matrix(1, 1));
    Matrix w(m, 1, 1.0 / static_cast<double>(m));
    Matrix yw(m, 1);
    for (std::size_t i = 0; i < m; ++i) yw[i] = labels[i] / static_cast<double>(m);
    return sub(dot_const(softplus(logits), w), dot_const(logits, yw));
}

LossBreakdown total_loss(const UniSARModel& model, const Batch& batch, const LossWeights& weights, bool accumulate) {
    weights.validate();
    if (batch.groups.empty()) throw std::invalid_argument("batch has no samples");
    const TermWeights tw = term_weights(model, weights);
    const std::size_t d = model.config().d;
    const std::size_t n_groups = batch.groups.size();

    LossBreakdown out;
    for (const Group* g : batch.groups) {
        if (g->labels.size() != g->candidates.size()) throw std::invalid_argument("group labels do not match candidates");
        (g->scenario == Scenario::search ? out.n_search : out.n_rec) += g->candidates.size();
    }

    const AlignmentTerms terms = model.alignment_terms();
    const bool align_on = (terms.search || terms.rec) && n_groups >= 2;
    const bool align_grad = accumulate && align_on && tw.align != 0.0;

    AlignmentBatch pooled_meta;
    Matrix pooled[4] = {Matrix(n_groups, d), Matrix(n_groups, d), Matrix(n_groups, d), Matrix(n_groups, d)};
    pooled_meta.owner.resize(n_groups);
    pooled_meta.has_search.resize(n_groups);
    pooled_meta.has_rec.resize(n_groups);
    auto store_pooled = [&](std::size_t i, const Group& g, const HistoryEncoding& enc) {
        const Var parts[4] = {enc.h_s2s, enc.h_r2s, enc.h_r2r, enc.h_s2r};
        for (int k = 0; k < 4; ++k) std::copy_n(parts[k].value().data().begin(), d, pooled[k].row(i).begin());
        pooled_meta.owner[i] = g.user;
        pooled_meta.has_search[i] = enc.has_search;
        pooled_meta.has_rec[i] = enc.has_rec;
    };
    auto alignment_on = [&](Tape& t) {
        AlignmentBatch b = pooled_meta;
        b.h_s2s = t.input(pooled[0]);
        b.h_r2s = t.input(pooled[1]);
        b.h_r2r = t.input(pooled[2]);
        b.h_s2r = t.input(pooled[3]);
        return std::make_pair(b, align_loss(b, model.alignment_head(), model.config().literal_denominator, terms));
    };

    // Phase 1-2: the alignment loss couples the batch, so its gradient with
    // respect to each history's pooled vectors is found first and injected
    // into the per-history backward passes below.
    Matrix seeds[4];
    if (align_grad) {
        for (std::size_t i = 0; i < n_groups; ++i) {
            Tape tape(false);
            store_pooled(i, *batch.groups[i], model.encode_pooled(tape, batch.groups[i]->history.events()));
        }
        Tape t(true);
        auto [b, loss] = alignment_on(t);
        out.align = loss.scalar();
        t.backward(loss, tw.align);
        const Var inputs[4] = {b.h_s2s, b.h_r2s, b.h_r2r, b.h_s2r};
        for (int k = 0; k < 4; ++k) {
            seeds[k] = t.grad(inputs[k]);
            if (seeds[k].empty()) seeds[k] = Matrix(n_groups, d);
        }
    }

    double click_sum[2] = {0.0, 0.0};
    for (std::size_t i = 0; i < n_groups; ++i) {
        const Group& g = *batch.groups[i];
        Tape tape(accumulate);
        HistoryEncoding enc = model.encode_history(tape, g.history.events());
        if (!align_grad) store_pooled(i, g, enc);
        Var z = model.logits(tape, enc, g.user, g.scenario, g.query, g.candidates);
        const std::vector<double>& zv = z.value().data();
        const int sc = static_cast<int>(g.scenario);
        for (std::size_t j = 0; j < zv.size(); ++j) click_sum[sc] += bce_from_logit(zv[j], g.labels[j]);
        if (!accumulate) continue;

        const double w_sc = g.scenario == Scenario::search ? tw.click_s / static_cast<double>(out.n_search)
                                                           : tw.click_r / static_cast<double>(out.n_rec);
        Matrix w(zv.size(), 1, w_sc);
        Matrix yw(zv.size(), 1);
        for (std::size_t j = 0; j < zv.size(); ++j) yw[j] = g.labels[j] * w_sc;
        Var loss = sub(dot_const(softplus(z), w), dot_const(z, yw));
        if (align_grad) {
            const Var parts[4] = {enc.h_s2s, enc.h_r2s, enc.h_r2r, enc.h_s2r};
            for (int k = 0; k < 4; ++k) {
                Matrix row(1, d);
                std::copy_n(seeds[k].row(i).begin(), d, row.row(0).begin());
                loss = add(loss, dot_const(parts[k], row));
            }
        }
        tape.backward(loss);
    }
    out.click_s = out.n_search ? click_sum[0] / static_cast<double>(out.n_search) : 0.0;
    out.click_r = out.n_rec ? click_sum[1] / static_cast<double>(out.n_rec) : 0.0;

    if (align_on && !align_grad) {
        Tape t(false);
        out.align = alignment_on(t).second.scalar();
    }

    if (!model.flags().no_rel && !batch.rel_pairs.empty()) {
        Tape t(accumulate && tw.rel != 0.0);
        Var loss = relevance_loss(t, batch.rel_pairs, model.tables(), model.relevance_head(),
                                  model.config().literal_denominator);
        out.rel = loss.scalar();
        if (t.recording()) t.backward(loss, tw.rel);
    }

    for (Parameter* p : model.parameters()) {
        const auto& v = p->value.data();
        double s = 0.0;
        for (double x : v) s += x * x;
        out.l2 += s;
        if (accumulate && tw.lambda != 0.0) {
            auto& g = p->grad.data();
            for (std::size_t k = 0; k < v.size(); ++k) g[k] += 2.0 * tw.lambda * v[k];
        }
    }

    out.total = tw.click_r * out.click_r + tw.click_s * out.click_s + tw.rel * out.rel + tw.align * out.align +
                tw.lambda * out.l2;
    return out;
}

std::vector<Sample> sample_negatives(std::span<const Sample> positives, const Vocab& vocab, std::size_t k, Rng& rng) {
    if (k == 0) throw std::invalid_argument("need at least one negative per positive");
    std::unordered_map<const UserHistory*, std::vector<ItemId>> seen;
    std::vector<Sample> out;
    out.reserve(positives.size() * (k + 1));
    for (const Sample& p : positives) {
        const UserHistory* owner = p.history.owner();
        if (owner == nullptr) throw std::invalid_argument("sample without an owning history");
        auto it = seen.find(owner);
        if (it == seen.end()) it = seen.emplace(owner, interacted_items(*owner)).first;
        const auto& interacted = it->second;
        const std::size_t available = static_cast<std::size_t>(vocab.n_items) - interacted.size();
        if (available == 0) {
            throw std::runtime_error("user " + std::to_string(p.user) + " interacted with every item");
        }
        const bool distinct = available >= k;
        std::vector<ItemId> drawn;
        out.push_back(p);
        while (drawn.size() < k) {
            const auto item = static_cast<ItemId>(uniform_index(rng, static_cast<std::uint64_t>(vocab.n_items)));
            if (std::binary_search(interacted.begin(), interacted.end(), item)) continue;
            if (distinct && std::find(drawn.begin(), drawn.end(), item) != drawn.end()) continue;
            drawn.push_back(item);
            Sample n = p;
            n.target_item = item;
            n.label = 0;
            out.push_back(std::move(n));
        }
    }
    return out;
}

std::vector<Group> build_training_groups(std::span<const Sample> positives, const Vocab& vocab, std::size_t k,
                                         Rng& rng) {
    const std::vector<Sample> all = sample_negatives(positives, vocab, k, rng);
    std::vector<Group> groups;
    groups.reserve(positives.size());
    for (std::size_t i = 0; i < all.size(); i += k + 1) {
        const Sample& p = all[i];
        Group g;
        g.user = p.user;
        g.scenario = p.scenario;
        g.query = p.query;
        g.history = p.history;
        for (std::size_t j = 0; j <= k; ++j) {
            g.candidates.push_back(all[i + j].target_item);
            g.labels.push_back(static_cast<double>(all[i + j].label));
        }
        groups.push_back(std::move(g));
    }
    return groups;
}

std::vector<std::vector<WordId>> query_pool(const Dataset& train) {
    std::set<std::vector<WordId>> distinct;
    for (const auto& s : train.samples)
        if (s.query) distinct.insert(*s.query);
    return {distinct.begin(), distinct.end()};
}

std::vector<RelevancePair> build_relevance_pairs(std::span<const Group* const> groups,
                                                 std::span<const std::vector<WordId>> pool, std::int32_t n_items,
                                                 std::size_t n_negatives, Rng& rng) {
    std::vector<RelevancePair> pairs;
    if (pool.size() < 2 || n_items < 2) return pairs;
    for (const Group* g : groups) {
        if (g->scenario != Scenario::search || !g->query || g->labels.empty() || g->labels[0] != 1.0) continue;
        RelevancePair p;
        p.query = *g->query;
        p.clicked = {g->candidates[0]};
        const std::size_t item_draws = std::min<std::size_t>(n_negatives, static_cast<std::size_t>(n_items) - 1);
        while (p.negative_items.size() < item_draws) {
            const auto item = static_cast<ItemId>(uniform_index(rng, static_cast<std::uint64_t>(n_items)));
            if (item == p.clicked[0]) continue;
            if (std::find(p.negative_items.begin(), p.negative_items.end(), item) != p.negative_items.end()) continue;
            p.negative_items.push_back(item);
        }
        while (p.negative_queries.size() < n_negatives) {
            const auto& q = pool[uniform_index(rng, pool.size())];
            if (q == p.query) continue;
            p.negative_queries.push_back(q);
        }
        pairs.push_back(std::move(p));
    }
    return pairs;
}

Adam::Adam(std::vector<Parameter*> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const Parameter* p : params_) {
        m_.emplace_back(p->value.rows(), p->value.cols());
        v_.emplace_back(p->value.rows(), p->value.cols());
    }
}

void Adam::step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto& value = params_[k]->value.data();
        const auto& grad = params_[k]->grad.data();
        auto& m = m_[k].data();
        auto& v = v_[k].data();
        for (std::size_t i = 0; i < value.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * grad[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * grad[i] * grad[i];
            value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
        }
    }
}

void FitResult::write_log(std::ostream& out, const AblationFlags& flags) const {
    out << "# ablation=" << flags.active() << '\n';
    out << "epoch,L_Click_R,L_Click_S,L_Rel,L_Align,L2,total,valid_NDCG10_R,valid_NDCG10_S\n";
    out << std::setprecision(10);
    std::size_t epochs = 0;
    for (const auto& m : models) epochs = std::max(epochs, m.epochs.size());
    for (std::size_t e = 0; e < epochs; ++e) {
        LossBreakdown sum;
        double total = 0;
        std::optional<double> nr, ns;
        for (const auto& m : models) {
            if (e >= m.epochs.size()) continue;
            const EpochLog& log = m.epochs[e];
            sum.click_r += log.train.click_r;
            sum.click_s += log.train.click_s;
            sum.rel += log.train.rel;
            sum.align += log.train.align;
            sum.l2 += log.train.l2;
            total += log.total;
            if (log.valid_ndcg10_r) nr = log.valid_ndcg10_r;
            if (log.valid_ndcg10_s) ns = log.valid_ndcg10_s;
        }
        out << (e + 1) << ',' << sum.click_r << ',' << sum.click_s << ',' << sum.rel << ',' << sum.align << ','
            << sum.l2 << ',' << total << ',';
        if (nr) out << *nr;
        out << ',';
        if (ns) out << *ns;
        out << '\n';
    }
}

FitResult fit(ModelBundle& bundle, const Dataset& train, const Dataset& valid, const TrainConfig& config,
              const LossWeights& weights, std::ostream* progress) {
    config.validate();
    weights.validate();
    FitResult result;
    const auto pool = query_pool(train);

    for (auto& model_ptr : bundle.models()) {
        UniSARModel& model = *model_ptr;
        std::vector<Sample> positives;
        for (const auto& s : train.samples)
            if (s.label == 1 && model.serves(s.scenario)) positives.push_back(s);
        bool any_valid = false;
        for (const auto& s : valid.samples) any_valid = any_valid || model.serves(s.scenario);
        if (positives.empty()) throw std::invalid_argument("model " + model.prefix() + " has no training samples");
        if (!any_valid) throw std::invalid_argument("model " + model.prefix() + " has no validation samples");

        Adam adam(model.parameters(), config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps);
        ModelFitLog log;
        log.model = model.prefix();
        std::map<std::string, Matrix> best = snapshot_of(model.parameters());
        std::size_t stale = 0;

        EvalOptions eval_opts;
        eval_opts.seed = config.seed;
        eval_opts.max_instances = config.max_valid_instances;
        eval_opts.only = model.single_task();
        GroupScorer scorer = [&model](const Group& g) { return model.score_group(g); };

        for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
            Rng neg_rng = substream(config.seed, "negatives", epoch);
            Rng shuffle_rng = substream(config.seed, "shuffle", epoch);
            Rng rel_rng = substream(config.seed, "negatives", 1000000 + epoch);
            const std::vector<Group> groups = build_training_groups(positives, bundle.vocab(), config.neg_per_pos, neg_rng);
            std::vector<std::size_t> order(groups.size());
            std::iota(order.begin(), order.end(), 0);
            shuffle_indices(order, shuffle_rng);

            EpochLog entry;
            entry.epoch = epoch;
            std::size_t batches = 0;
            for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
                Batch batch;
                const std::size_t end = std::min(order.size(), start + config.batch_size);
                for (std::size_t i = start; i < end; ++i) batch.groups.push_back(&groups[order[i]]);
                batch.rel_pairs = build_relevance_pairs(batch.groups, pool, bundle.vocab().n_items,
                                                        config.rel_negatives, rel_rng);
                for (Parameter* p : model.parameters()) p->zero_grad();
                const LossBreakdown b = total_loss(model, batch, weights, true);
                try {
                    check_finite(b);
                } catch (const NonFiniteLoss& e) {
                    throw NonFiniteLoss(std::string(e.what()) + " (model " + model.prefix() + ", epoch " +
                                        std::to_string(epoch) + ", batch " + std::to_string(batches + 1) + ")");
                }
                adam.step();
                model.relevance_head().clamp_temperature();
                model.alignment_head().clamp_temperature();
                entry.train.click_r += b.click_r;
                entry.train.click_s += b.click_s;
                entry.train.rel += b.rel;
                entry.train.align += b.align;
                entry.train.l2 += b.l2;
                entry.total += b.total;
                ++batches;
            }
            const double nb = static_cast<double>(batches);
            entry.train.click_r /= nb;
            entry.train.click_s /= nb;
            entry.train.rel /= nb;
            entry.train.align /= nb;
            entry.train.l2 /= nb;
            entry.total /= nb;

            const MetricReport report = evaluate_scorer(scorer, valid, bundle.vocab().n_items, eval_opts);
            if (report.rec.count) entry.valid_ndcg10_r = report.rec.ndcg10;
            if (report.search.count) entry.valid_ndcg10_s = report.search.ndcg10;
            const double metric = report.mean_ndcg10();
            log.epochs.push_back(entry);

            if (progress) {
                *progress << "[" << model.prefix() << "] epoch " << epoch << " total=" << entry.total
                          << " valid_ndcg10=" << metric << '\n';
            }
            if (metric > log.best_metric) {
                log.best_metric = metric;
                log.best_epoch = epoch;
                best = snapshot_of(model.parameters());
                stale = 0;
            } else if (++stale >= config.patience) {
                break;
            }
        }
        restore_into(model.parameters(), best);
        result.models.push_back(std::move(log));
    }
    return result;
}

void save_params(const ParameterStore& store, std::ostream& sink) {
    sink.write(kMagic, sizeof(kMagic) - 1);
    put_u32(sink, kParamFileVersion);
    put_u64(sink, store.size());
    for (const auto& p : store) {
        put_u32(sink, static_cast<std::uint32_t>(p->name.size()));
        sink.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        put_u64(sink, p->value.rows());
        put_u64(sink, p->value.cols());
        for (double v : p->value.data()) put_u64(sink, std::bit_cast<std::uint64_t>(v));
    }
    if (!sink) throw std::runtime_error("failed to write parameters");
}

void save_params_file(const ParameterStore& store, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    save_params(store, out);
}

std::map<std::string, Matrix> read_params(std::istream& source) {
    char magic[sizeof(kMagic) - 1];
    source.read(magic, sizeof(magic));
    if (!source || std::string(magic, sizeof(magic)) != std::string(kMagic, sizeof(magic))) {
        throw std::runtime_error("not a parameter file");
    }
    const auto version = static_cast<std::uint32_t>(get_uint(source, 4));
    if (version != kParamFileVersion) {
        throw std::runtime_error("parameter file version " + std::to_string(version) + " is not supported (expected " +
                                 std::to_string(kParamFileVersion) + ")");
    }
    const std::uint64_t count = get_uint(source, 8);
    std::map<std::string, Matrix> out;
    for (std::uint64_t k = 0; k < count; ++k) {
        const auto len = static_cast<std::size_t>(get_uint(source, 4));
        std::string name(len, '\0');
        source.read(name.data(), static_cast<std::streamsize>(len));
        if (!source) throw std::runtime_error("parameter file is truncated");
        const auto rows = static_cast<std::size_t>(get_uint(source, 8));
        const auto cols = static_cast<std::size_t>(get_uint(source, 8));
        Matrix m(rows, cols);
        for (double& v : m.data()) v = std::bit_cast<double>(get_uint(source, 8));
        if (!out.emplace(name, std::move(m)).second) throw std::runtime_error("duplicate parameter " + name);
    }
    return out;
}

void load_params(ParameterStore& store, std::istream& source) {
    const auto values = read_params(source);
    std::vector<std::string> missing;
    for (const auto& p : store)
        if (!values.count(p->name)) missing.push_back(p->name);
    if (!missing.empty()) {
        std::string list;
        for (const auto& n : missing) list += (list.empty() ? "" : ", ") + n;
        throw std::runtime_error("parameter file lacks: " + list);
    }
    for (const auto& [name, m] : values) {
        const Parameter* p = store.find(name);
        if (p == nullptr) throw std::runtime_error("parameter file has unknown parameter " + name);
        if (!p->value.same_shape(m)) {
            throw std::runtime_error("shape mismatch for " + name + ": file " + m.shape_string() + ", model " +
                                     p->value.shape_string());
        }
    }
    for (auto& p : store) p->value = values.at(p->name);
}

void load_params_file(ParameterStore& store, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open parameter file " + path);
    load_params(store, in);
}

} // namespace unisar
