#include "unisar/datamodel.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace unisar {

const char* scenario_code(Scenario s) { return s == Scenario::search ? "S" : "R"; }
const char* scenario_name(Scenario s) { return s == Scenario::search ? "search" : "rec"; }

std::vector<ItemId> BehaviorEvent::clicked_items() const {
    if (scenario == Scenario::rec) return {item};
    return clicked;
}

BehaviorEvent BehaviorEvent::rec(UserId u, Timestamp t, ItemId item, CategoryId cat) {
    BehaviorEvent e;
    e.user = u;
    e.time = t;
    e.scenario = Scenario::rec;
    e.item = item;
    if (cat != kNoCategory) e.categories = {cat};
    return e;
}

BehaviorEvent BehaviorEvent::search(UserId u, Timestamp t, std::vector<WordId> query, std::vector<ItemId> clicked,
                                    std::vector<CategoryId> categories) {
    BehaviorEvent e;
    e.user = u;
    e.time = t;
    e.scenario = Scenario::search;
    e.query = std::move(query);
    e.clicked = std::move(clicked);
    e.categories = std::move(categories);
    return e;
}

std::size_t UserHistory::search_count() const {
    return static_cast<std::size_t>(
        std::count_if(events.begin(), events.end(), [](const BehaviorEvent& e) { return e.is_search(); }));
}

std::size_t UserHistory::rec_count() const { return events.size() - search_count(); }

HistoryView::HistoryView(std::shared_ptr<const UserHistory> owner, std::size_t begin, std::size_t end)
    : owner_(std::move(owner)), begin_(begin), end_(end) {
    if (begin_ > end_ || (owner_ && end_ > owner_->events.size()) || (!owner_ && end_ != 0)) {
        throw std::out_of_range("history view outside its owner");
    }
}

std::span<const BehaviorEvent> HistoryView::events() const {
    if (!owner_) return {};
    return std::span<const BehaviorEvent>(owner_->events).subspan(begin_, end_ - begin_);
}

HistoryView HistoryView::last(std::size_t max_len) const {
    if (size() <= max_len) return *this;
    return HistoryView(owner_, end_ - max_len, end_);
}

void Sample::validate() const {
    if (scenario == Scenario::rec && query) throw std::invalid_argument("rec sample carries a query");
    if (scenario == Scenario::search && (!query || query->empty())) {
        throw std::invalid_argument("search sample without a query");
    }
    if (label != 0 && label != 1) throw std::invalid_argument("label must be 0 or 1");
}

std::size_t Dataset::event_count() const {
    std::size_t n = 0;
    for (const auto& h : histories) n += h->events.size();
    return n;
}

void Dataset::validate_ids() const {
    auto check = [](std::int32_t id, std::int32_t limit, const char* what) {
        if (id < 0 || id >= limit) {
            throw std::out_of_range(std::string(what) + " id " + std::to_string(id) + " outside vocabulary of " +
                                    std::to_string(limit));
        }
    };
    for (const auto& h : histories) {
        check(h->user, vocab.n_users, "user");
        for (const auto& e : h->events) {
            for (ItemId i : e.clicked_items()) check(i, vocab.n_items, "item");
            for (WordId w : e.query) check(w, vocab.n_words, "word");
        }
    }
    for (const auto& s : samples) {
        check(s.user, vocab.n_users, "user");
        check(s.target_item, vocab.n_items, "item");
        if (s.query)
            for (WordId w : *s.query) check(w, vocab.n_words, "word");
    }
}

// ---- event log -----------------------------------------------------------

namespace {

std::vector<std::string_view> split_fields(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

template <typename Int>
Int parse_int(std::string_view text, std::size_t line, const char* field) {
    Int value{};
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (text.empty() || ec != std::errc() || ptr != last) {
        throw ParseError(line, std::string("bad ") + field + " '" + std::string(text) + "'");
    }
    return value;
}

std::vector<std::int32_t> parse_list(std::string_view text, std::size_t line, const char* field) {
    std::vector<std::int32_t> out;
    if (text.empty()) return out;
    for (auto part : split_fields(text, ',')) {
        const auto v = parse_int<std::int32_t>(part, line, field);
        if (v < 0) throw ParseError(line, std::string("negative ") + field);
        out.push_back(v);
    }
    return out;
}

Vocab infer_vocab(const std::vector<std::shared_ptr<const UserHistory>>& histories) {
    Vocab v;
    for (const auto& h : histories) {
        v.n_users = std::max(v.n_users, h->user + 1);
        for (const auto& e : h->events) {
            for (ItemId i : e.clicked_items()) v.n_items = std::max(v.n_items, i + 1);
            for (WordId w : e.query) v.n_words = std::max(v.n_words, w + 1);
            for (CategoryId c : e.categories) v.n_categories = std::max(v.n_categories, c + 1);
        }
    }
    return v;
}

std::string join(const std::vector<std::int32_t>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(values[i]);
    }
    return out;
}

} // namespace

Dataset ingest_event_log(std::istream& source) {
    std::map<UserId, UserHistory> users;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(source, raw)) {
        ++line_no;
        std::string_view line(raw);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty() || line.front() == '#') continue;

        const auto f = split_fields(line, '\t');
        if (f.size() != 7) {
            throw ParseError(line_no, "expected 7 tab-separated fields, found " + std::to_string(f.size()));
        }
        BehaviorEvent e;
        e.user = parse_int<UserId>(f[0], line_no, "user_id");
        if (e.user < 0) throw ParseError(line_no, "negative user_id");
        e.time = parse_int<Timestamp>(f[1], line_no, "timestamp");
        if (f[2] == "R") {
            e.scenario = Scenario::rec;
            if (!f[4].empty() || !f[5].empty()) throw ParseError(line_no, "schema: rec event with query or clicks");
            e.item = parse_int<ItemId>(f[3], line_no, "item_id");
            if (e.item < 0) throw ParseError(line_no, "negative item_id");
            e.categories = parse_list(f[6], line_no, "category_id");
            if (e.categories.size() > 1) throw ParseError(line_no, "schema: rec event with several categories");
        } else if (f[2] == "S") {
            e.scenario = Scenario::search;
            if (!f[3].empty()) throw ParseError(line_no, "schema: search event with item_id");
            e.query = parse_list(f[4], line_no, "query_word_ids");
            if (e.query.empty()) throw ParseError(line_no, "schema: search event without query words");
            e.clicked = parse_list(f[5], line_no, "clicked_item_ids");
            e.categories = parse_list(f[6], line_no, "category_id");
            if (!e.categories.empty() && e.categories.size() != e.clicked.size()) {
                throw ParseError(line_no, "schema: category list does not match clicked items");
            }
        } else {
            throw ParseError(line_no, "scenario must be R or S, got '" + std::string(f[2]) + "'");
        }

        auto& h = users[e.user];
        h.user = e.user;
        if (!h.events.empty() && e.time < h.events.back().time) {
            throw ParseError(line_no, "timestamp regression for user " + std::to_string(e.user));
        }
        h.events.push_back(std::move(e));
    }

    Dataset ds;
    for (auto& [id, h] : users) ds.histories.push_back(std::make_shared<const UserHistory>(std::move(h)));
    ds.vocab = infer_vocab(ds.histories);
    return ds;
}

Dataset ingest_event_log_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open event log " + path);
    return ingest_event_log(in);
}

void write_event_log(const Dataset& dataset, std::ostream& sink) {
    for (const auto& h : dataset.histories) {
        for (const auto& e : h->events) {
            sink << e.user << '\t' << e.time << '\t' << scenario_code(e.scenario) << '\t';
            if (e.scenario == Scenario::rec) {
                sink << e.item << "\t\t\t";
            } else {
                sink << '\t' << join(e.query) << '\t' << join(e.clicked) << '\t';
            }
            sink << join(e.categories) << '\n';
        }
    }
}

// ---- splitting -------------------------------------------------------------

namespace {

// Index of the first event whose timestamp is >= t: every earlier event is strictly earlier.
std::size_t history_end(const UserHistory& h, Timestamp t) {
    auto it = std::lower_bound(h.events.begin(), h.events.end(), t,
                               [](const BehaviorEvent& e, Timestamp v) { return e.time < v; });
    return static_cast<std::size_t>(it - h.events.begin());
}

void append_targets(const std::shared_ptr<const UserHistory>& h, std::size_t event_index, std::vector<Sample>& out) {
    const BehaviorEvent& e = h->events[event_index];
    const std::size_t end = history_end(*h, e.time);
    for (ItemId item : e.clicked_items()) {
        Sample s;
        s.user = h->user;
        s.target_item = item;
        if (e.is_search()) s.query = e.query;
        s.history = HistoryView(h, 0, end);
        s.label = 1;
        s.scenario = e.scenario;
        s.time = e.time;
        out.push_back(std::move(s));
    }
}

Split empty_split(const Dataset& dataset) {
    Split split;
    for (Dataset* d : {&split.train, &split.valid, &split.test}) {
        d->histories = dataset.histories;
        d->vocab = dataset.vocab;
    }
    return split;
}

} // namespace

Split split_leave_one_out(const Dataset& dataset, const SplitOptions& options) {
    Split split = empty_split(dataset);
    for (const auto& h : dataset.histories) {
        std::vector<std::size_t> clicks;
        for (std::size_t i = 0; i < h->events.size(); ++i)
            if (h->events[i].has_click()) clicks.push_back(i);
        if (clicks.size() < 3) {
            ++split.dropped_users;
            continue;
        }
        std::vector<std::size_t> train_events;
        for (std::size_t k = 0; k + 2 < clicks.size(); ++k)
            if (history_end(*h, h->events[clicks[k]].time) > 0) train_events.push_back(clicks[k]);
        if (options.max_train_targets_per_user > 0 && train_events.size() > options.max_train_targets_per_user) {
            train_events.erase(train_events.begin(),
                               train_events.end() - static_cast<std::ptrdiff_t>(options.max_train_targets_per_user));
        }
        for (std::size_t idx : train_events) append_targets(h, idx, split.train.samples);
        append_targets(h, clicks[clicks.size() - 2], split.valid.samples);
        append_targets(h, clicks.back(), split.test.samples);
    }
    return split;
}

Split split_temporal(const Dataset& dataset, Timestamp valid_from, Timestamp test_from) {
    if (valid_from > test_from) throw std::invalid_argument("valid_from must not exceed test_from");
    Split split = empty_split(dataset);
    for (const auto& h : dataset.histories) {
        for (std::size_t i = 0; i < h->events.size(); ++i) {
            const auto& e = h->events[i];
            if (!e.has_click()) continue;
            if (e.time < valid_from) {
                if (history_end(*h, e.time) > 0) append_targets(h, i, split.train.samples);
            } else if (e.time < test_from) {
                append_targets(h, i, split.valid.samples);
            } else {
                append_targets(h, i, split.test.samples);
            }
        }
    }
    return split;
}

Dataset filter_min_interactions(const Dataset& dataset, std::size_t min_interactions) {
    std::vector<UserHistory> users;
    for (const auto& h : dataset.histories) users.push_back(*h);

    bool changed = true;
    while (changed) {
        changed = false;
        std::unordered_map<ItemId, std::size_t> item_counts;
        for (const auto& u : users)
            for (const auto& e : u.events)
                for (ItemId i : e.clicked_items()) ++item_counts[i];

        for (auto& u : users) {
            std::vector<BehaviorEvent> kept;
            for (auto& e : u.events) {
                if (e.scenario == Scenario::rec) {
                    if (item_counts[e.item] >= min_interactions) kept.push_back(std::move(e));
                    else changed = true;
                    continue;
                }
                BehaviorEvent f = e;
                f.clicked.clear();
                f.categories.clear();
                for (std::size_t k = 0; k < e.clicked.size(); ++k) {
                    if (item_counts[e.clicked[k]] >= min_interactions) {
                        f.clicked.push_back(e.clicked[k]);
                        if (k < e.categories.size()) f.categories.push_back(e.categories[k]);
                    } else {
                        changed = true;
                    }
                }
                kept.push_back(std::move(f));
            }
            u.events = std::move(kept);
        }
        const auto before = users.size();
        std::erase_if(users, [&](const UserHistory& u) { return u.events.size() < min_interactions; });
        changed = changed || users.size() != before;
    }

    Dataset out;
    for (auto& u : users) out.histories.push_back(std::make_shared<const UserHistory>(std::move(u)));
    out.vocab = dataset.vocab;
    return out;
}

// ---- sub-histories and masks ----------------------------------------------

SubHistories extract_subhistories(std::span<const BehaviorEvent> history) {
    SubHistories out;
    for (std::size_t t = 0; t < history.size(); ++t) {
        if (history[t].is_search()) {
            out.search.push_back(history[t]);
            out.search_index.push_back(static_cast<std::int32_t>(t));
        } else {
            out.rec.push_back(history[t]);
            out.rec_index.push_back(static_cast<std::int32_t>(t));
        }
    }
    return out;
}

std::vector<BehaviorEvent> interleave_subhistories(const SubHistories& parts) {
    std::vector<BehaviorEvent> out(parts.search.size() + parts.rec.size());
    for (std::size_t k = 0; k < parts.search.size(); ++k) out.at(parts.search_index[k]) = parts.search[k];
    for (std::size_t k = 0; k < parts.rec.size(); ++k) out.at(parts.rec_index[k]) = parts.rec[k];
    return out;
}

std::vector<Scenario> scenario_vector(std::span<const BehaviorEvent> history) {
    std::vector<Scenario> b;
    b.reserve(history.size());
    for (const auto& e : history) b.push_back(e.scenario);
    return b;
}

Matrix build_cross_mask(std::span<const Scenario> b) {
    Matrix m(b.size(), b.size());
    for (std::size_t i = 0; i < b.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) m(i, j) = b[i] != b[j] ? 1.0 : 0.0;
    return m;
}

UserHistory truncate_history(const UserHistory& history, std::size_t max_len) {
    if (max_len == 0) throw std::invalid_argument("max_len must be at least 1");
    UserHistory out;
    out.user = history.user;
    const std::size_t start = history.events.size() > max_len ? history.events.size() - max_len : 0;
    out.events.assign(history.events.begin() + static_cast<std::ptrdiff_t>(start), history.events.end());
    return out;
}

std::vector<ItemId> interacted_items(const UserHistory& history) {
    std::vector<ItemId> items;
    for (const auto& e : history.events)
        for (ItemId i : e.clicked_items()) items.push_back(i);
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
    return items;
}

// ---- synthetic generator ---------------------------------------------------

void SyntheticConfig::validate() const {
    auto positive = [](std::int64_t v, const char* name) {
        if (v <= 0) throw std::invalid_argument(std::string("synthetic ") + name + " must be positive");
    };
    positive(n_users, "n_users");
    positive(n_items, "n_items");
    positive(n_words, "n_words");
    positive(n_categories, "n_categories");
    positive(events_per_user, "events_per_user");
    positive(max_query_words, "max_query_words");
    if (favorite_categories < 0) throw std::invalid_argument("synthetic favorite_categories must be >= 0");
    for (double p : {p_search, p_stay_category_same_scenario, p_stay_category_cross_scenario, p_favorite}) {
        if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("synthetic probabilities must lie in [0,1]");
    }
    if (n_items < n_categories) throw std::invalid_argument("synthetic n_items must be >= n_categories");
    if (n_words < n_categories) throw std::invalid_argument("synthetic n_words must be >= n_categories");
}

namespace {

CategoryId draw_category(Rng& rng, const std::vector<CategoryId>& favorites, std::int32_t n_categories,
                         double p_favorite, CategoryId exclude) {
    if (n_categories == 1) return 0;
    std::vector<CategoryId> fav;
    for (CategoryId c : favorites)
        if (c != exclude) fav.push_back(c);
    if (!fav.empty() && uniform01(rng) < p_favorite) return fav[uniform_index(rng, fav.size())];
    while (true) {
        const auto c = static_cast<CategoryId>(uniform_index(rng, static_cast<std::uint64_t>(n_categories)));
        if (c != exclude) return c;
    }
}

} // namespace

Dataset generate_synthetic(const SyntheticConfig& cfg) {
    cfg.validate();
    Rng rng = substream(cfg.seed, "data");
    const std::int32_t n_cat = cfg.n_categories;
    const std::int32_t words_per_cat = cfg.n_words / n_cat;

    std::vector<std::vector<ItemId>> items_by_cat(static_cast<std::size_t>(n_cat));
    for (ItemId i = 0; i < cfg.n_items; ++i) items_by_cat[static_cast<std::size_t>(i % n_cat)].push_back(i);

    Dataset ds;
    ds.vocab = {cfg.n_users, cfg.n_items, cfg.n_words, cfg.n_categories};
    for (UserId u = 0; u < cfg.n_users; ++u) {
        std::vector<CategoryId> favorites;
        const std::int32_t n_fav = std::min(cfg.favorite_categories, n_cat);
        while (static_cast<std::int32_t>(favorites.size()) < n_fav) {
            const auto c = static_cast<CategoryId>(uniform_index(rng, static_cast<std::uint64_t>(n_cat)));
            if (std::find(favorites.begin(), favorites.end(), c) == favorites.end()) favorites.push_back(c);
        }

        UserHistory h;
        h.user = u;
        Timestamp t = static_cast<Timestamp>(uniform_index(rng, 1000));
        CategoryId prev_cat = kNoCategory;
        Scenario prev_scenario = Scenario::rec;
        for (std::int32_t step = 0; step < cfg.events_per_user; ++step) {
            const Scenario scenario = uniform01(rng) < cfg.p_search ? Scenario::search : Scenario::rec;
            CategoryId cat;
            if (prev_cat == kNoCategory) {
                cat = draw_category(rng, favorites, n_cat, cfg.p_favorite, kNoCategory);
            } else {
                const double p_stay = scenario == prev_scenario ? cfg.p_stay_category_same_scenario
                                                                : cfg.p_stay_category_cross_scenario;
                cat = uniform01(rng) < p_stay ? prev_cat
                                              : draw_category(rng, favorites, n_cat, cfg.p_favorite, prev_cat);
            }
            const auto& pool = items_by_cat[static_cast<std::size_t>(cat)];
            const ItemId item = pool[uniform_index(rng, pool.size())];
            t += 1 + static_cast<Timestamp>(uniform_index(rng, 60));

            if (scenario == Scenario::search) {
                const auto len = 1 + static_cast<std::int32_t>(uniform_index(rng, static_cast<std::uint64_t>(cfg.max_query_words)));
                std::vector<WordId> words;
                for (std::int32_t k = 0; k < len; ++k) {
                    words.push_back(cat * words_per_cat +
                                    static_cast<WordId>(uniform_index(rng, static_cast<std::uint64_t>(words_per_cat))));
                }
                h.events.push_back(BehaviorEvent::search(u, t, std::move(words), {item}, {cat}));
            } else {
                h.events.push_back(BehaviorEvent::rec(u, t, item, cat));
            }
            prev_cat = cat;
            prev_scenario = scenario;
        }
        ds.histories.push_back(std::make_shared<const UserHistory>(std::move(h)));
    }
    return ds;
}

} // namespace unisar
