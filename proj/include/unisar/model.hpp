#pragma once

// The assembled model: embeddings -> transition extraction -> fusion ->
// target attention -> MMoE (or towers), plus ablation wiring.

#include "unisar/embedding.hpp"
#include "unisar/prediction.hpp"
#include "unisar/transition.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace unisar {

struct ModelConfig {
    std::size_t d = 64;
    std::size_t heads = 2;
    std::size_t max_history_len = 30;
    std::size_t n_shared = 4; // n_m
    std::size_t n_search = 4; // n_s
    std::size_t n_rec = 4;    // n_r
    std::size_t expert_hidden = 64;
    std::size_t ffn_hidden = 0; // 0: same as d
    std::size_t blocks = 1;
    MaskMode mask_mode = MaskMode::additive;
    bool plain_blocks = false;
    bool literal_denominator = false;
    double initial_tau = 0.5;

    std::size_t ffn_width() const { return ffn_hidden == 0 ? d : ffn_hidden; }
    void validate() const;
};

struct AblationFlags {
    bool no_r2r = false;
    bool no_r2s = false;
    bool no_s2r = false;
    bool no_s2s = false;
    bool no_mask = false;
    bool no_align = false;
    bool no_rel = false;
    bool no_mca_r = false;
    bool no_mca_s = false;
    bool no_mmoe = false;
    bool no_joint = false;
    bool no_history = false; // baseline scorer on (e_u, e_i, e_q) only

    static const std::vector<std::string>& names();
    /// Throws std::invalid_argument for an unknown flag name.
    bool& flag(const std::string& name);
    bool get(const std::string& name) const;
    /// Comma-separated active flags, or "none".
    std::string active() const;
    bool operator==(const AblationFlags&) const = default;
};

/// One scoring unit: a history, an optional query and candidate items that
/// share them. Training groups hold a positive and its sampled negatives;
/// evaluation groups the ground truth and its ranking negatives.
struct Group {
    UserId user = 0;
    Scenario scenario = Scenario::rec;
    std::optional<std::vector<WordId>> query;
    HistoryView history;
    std::vector<ItemId> candidates;
    std::vector<double> labels;
};

struct HistoryEncoding {
    Var v_s, v_r;                        // fused sequences V_s (N_s x d), V_r (N_r x d)
    Var h_s2s, h_r2s, h_r2r, h_s2r;      // pooled 1 x d
    bool has_search = false;
    bool has_rec = false;
};

class UniSARModel {
public:
    enum class Head { mmoe, towers };

    /// Creates parameters under `prefix` in `store`. A model with
    /// `single_task` set serves only that scenario.
    UniSARModel(ParameterStore& store, const std::string& prefix, const Vocab& vocab, ModelConfig config,
                AblationFlags flags, std::optional<Scenario> single_task = std::nullopt);

    const ModelConfig& config() const { return config_; }
    const AblationFlags& flags() const { return flags_; }
    const std::string& prefix() const { return prefix_; }
    const Vocab& vocab() const { return vocab_; }
    std::optional<Scenario> single_task() const { return single_task_; }
    bool serves(Scenario s) const { return !single_task_ || *single_task_ == s; }
    Head head() const { return head_; }

    /// Parameters owned by this model, in creation order.
    const std::vector<Parameter*>& parameters() const { return params_; }
    void initialize(std::uint64_t seed);

    const EmbeddingTables& tables() const { return tables_; }
    const SimilarityHead& relevance_head() const { return rel_head_; }
    const SimilarityHead& alignment_head() const { return align_head_; }
    const MMoEParams& mmoe() const { return mmoe_; }
    const TransitionEncoders& encoders() const { return encoders_; }
    Parameter& q_phi() const { return *q_phi_; }

    TransitionOptions transition_options() const;
    /// Which alignment sides remain once ablations are applied.
    AlignmentTerms alignment_terms() const;

    /// Extraction + fusion for one history (already truncated or not; the
    /// most recent max_history_len events are used).
    HistoryEncoding encode_history(Tape& tape, std::span<const BehaviorEvent> history) const;
    /// Only the pooled vectors, for the alignment loss.
    HistoryEncoding encode_pooled(Tape& tape, std::span<const BehaviorEvent> history) const;

    /// Pre-sigmoid scores, one row per candidate.
    Var logits(Tape& tape, const HistoryEncoding& enc, UserId user, Scenario scenario,
               const std::optional<std::vector<WordId>>& query, std::span<const ItemId> candidates) const;

    /// Inference convenience: logits for every candidate of a group.
    std::vector<double> score_group(const Group& group) const;

private:
    HistoryEncoding encode_impl(Tape& tape, std::span<const BehaviorEvent> history, bool fuse_sequences) const;

    std::string prefix_;
    Vocab vocab_;
    ModelConfig config_;
    AblationFlags flags_;
    std::optional<Scenario> single_task_;
    Head head_ = Head::mmoe;

    std::vector<Parameter*> params_;
    EmbeddingTables tables_;
    PositionalEmbeddings positional_;
    SimilarityHead rel_head_;
    SimilarityHead align_head_;
    TransitionEncoders encoders_;
    FusionBlocks fusion_;
    TargetAttentionParams target_;
    Parameter* q_phi_ = nullptr;
    MMoEParams mmoe_;
    ExpertGroup tower_s_;
    ExpertGroup tower_r_;
};

/// The trainable unit: one joint model, or two single-task models under
/// no_joint, sharing one parameter store.
class ModelBundle {
public:
    ModelBundle(const Vocab& vocab, const ModelConfig& config, const AblationFlags& flags);

    ParameterStore& store() { return *store_; }
    const ParameterStore& store() const { return *store_; }
    std::vector<std::unique_ptr<UniSARModel>>& models() { return models_; }
    const std::vector<std::unique_ptr<UniSARModel>>& models() const { return models_; }
    /// The model that scores samples of `s`.
    const UniSARModel& model_for(Scenario s) const;
    const ModelConfig& config() const { return config_; }
    const AblationFlags& flags() const { return flags_; }
    const Vocab& vocab() const { return vocab_; }

    void initialize(std::uint64_t seed);

private:
    std::unique_ptr<ParameterStore> store_;
    std::vector<std::unique_ptr<UniSARModel>> models_;
    Vocab vocab_;
    ModelConfig config_;
    AblationFlags flags_;
};

} // namespace unisar
