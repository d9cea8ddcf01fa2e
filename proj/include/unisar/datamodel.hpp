#pragma once

#include "unisar/matrix.hpp"
#include "unisar/rng.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace unisar {

using UserId = std::int32_t;
using ItemId = std::int32_t;
using WordId = std::int32_t;
using CategoryId = std::int32_t;
using Timestamp = std::int64_t;

inline constexpr CategoryId kNoCategory = -1;

/// Which service produced a behavior. Values match b_t: search = 0, rec = 1.
enum class Scenario : std::uint8_t { search = 0, rec = 1 };

const char* scenario_code(Scenario s); // "S" / "R"
const char* scenario_name(Scenario s); // "search" / "rec"

struct BehaviorEvent {
    UserId user = 0;
    Timestamp time = 0;
    Scenario scenario = Scenario::rec;
    ItemId item = -1;                    // rec only
    std::vector<WordId> query;           // search only, nonempty
    std::vector<ItemId> clicked;         // search only, may be empty
    std::vector<CategoryId> categories;  // rec: one entry; search: one per clicked item

    bool is_search() const { return scenario == Scenario::search; }
    /// Items this event clicked (the rec item, or the search clicks).
    std::vector<ItemId> clicked_items() const;
    bool has_click() const { return scenario == Scenario::rec || !clicked.empty(); }

    static BehaviorEvent rec(UserId u, Timestamp t, ItemId item, CategoryId cat = kNoCategory);
    static BehaviorEvent search(UserId u, Timestamp t, std::vector<WordId> query, std::vector<ItemId> clicked,
                                std::vector<CategoryId> categories = {});
};

struct UserHistory {
    UserId user = 0;
    std::vector<BehaviorEvent> events;

    std::size_t search_count() const;
    std::size_t rec_count() const;
};

/// A contiguous, shared slice [begin, end) of one user's events.
class HistoryView {
public:
    HistoryView() = default;
    HistoryView(std::shared_ptr<const UserHistory> owner, std::size_t begin, std::size_t end);

    std::span<const BehaviorEvent> events() const;
    std::size_t size() const { return end_ - begin_; }
    bool empty() const { return size() == 0; }
    /// The most recent `max_len` events of this view.
    HistoryView last(std::size_t max_len) const;
    const UserHistory* owner() const { return owner_.get(); }

private:
    std::shared_ptr<const UserHistory> owner_;
    std::size_t begin_ = 0;
    std::size_t end_ = 0;
};

struct Sample {
    UserId user = 0;
    ItemId target_item = 0;
    std::optional<std::vector<WordId>> query; // present iff scenario == search
    HistoryView history;
    int label = 1;
    Scenario scenario = Scenario::rec;
    Timestamp time = 0;

    void validate() const;
};

struct Vocab {
    std::int32_t n_users = 0;
    std::int32_t n_items = 0;
    std::int32_t n_words = 0;
    std::int32_t n_categories = 0;

    bool operator==(const Vocab&) const = default;
};

struct Dataset {
    std::vector<std::shared_ptr<const UserHistory>> histories; // sorted by user id
    std::vector<Sample> samples;
    Vocab vocab;

    std::size_t event_count() const;
    /// Throws when any id reaches its vocabulary size.
    void validate_ids() const;
};

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Reads the tab-separated event log. Events are grouped per user, users are
/// ordered by id and vocabulary sizes are max id + 1. Timestamps may tie but
/// must not decrease within a user.
Dataset ingest_event_log(std::istream& source);
Dataset ingest_event_log_file(const std::string& path);
void write_event_log(const Dataset& dataset, std::ostream& sink);

struct SplitOptions {
    /// Keep only the most recent N training targets per user (0 keeps all).
    std::size_t max_train_targets_per_user = 0;
};

struct Split {
    Dataset train, valid, test;
    std::size_t dropped_users = 0;
};

/// Per user: the last click event yields test samples, the second-last valid
/// samples and every earlier click event with a nonempty history yields train
/// samples. Users with fewer than three click events are dropped.
Split split_leave_one_out(const Dataset& dataset, const SplitOptions& options = {});

/// Targets with time < valid_from train, valid_from <= time < test_from
/// validate, the rest test.
Split split_temporal(const Dataset& dataset, Timestamp valid_from, Timestamp test_from);

/// Drops events on items with fewer than `min_interactions` interactions and
/// users with fewer than `min_interactions` events, repeating until stable.
Dataset filter_min_interactions(const Dataset& dataset, std::size_t min_interactions);

struct SubHistories {
    std::vector<BehaviorEvent> search; // S_s
    std::vector<BehaviorEvent> rec;    // S_r
    std::vector<std::int32_t> search_index; // positions in S_u
    std::vector<std::int32_t> rec_index;
};

SubHistories extract_subhistories(std::span<const BehaviorEvent> history);
/// Rebuilds S_u from the two sub-histories and their index maps.
std::vector<BehaviorEvent> interleave_subhistories(const SubHistories& parts);

std::vector<Scenario> scenario_vector(std::span<const BehaviorEvent> history);
/// M[i][j] = 1 iff b_i != b_j.
Matrix build_cross_mask(std::span<const Scenario> b);

UserHistory truncate_history(const UserHistory& history, std::size_t max_len);

/// Sorted, unique items the user clicked anywhere in their log.
std::vector<ItemId> interacted_items(const UserHistory& history);

struct SyntheticConfig {
    std::int32_t n_users = 2000;
    std::int32_t n_items = 200;
    std::int32_t n_words = 400;
    std::int32_t n_categories = 20;
    std::int32_t events_per_user = 60;
    double p_search = 0.5;
    double p_stay_category_same_scenario = 0.6;
    double p_stay_category_cross_scenario = 0.1;
    std::int32_t favorite_categories = 3;
    double p_favorite = 0.8;
    std::int32_t max_query_words = 3;
    std::uint64_t seed = 42;

    void validate() const;
};

/// Seeded generator with planted category persistence. Every event carries
/// exactly one click; item i belongs to category i mod n_categories and each
/// category owns a disjoint block of query words.
Dataset generate_synthetic(const SyntheticConfig& cfg);

} // namespace unisar
