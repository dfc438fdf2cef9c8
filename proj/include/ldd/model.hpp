#pragma once

// Shared-trunk model: a representation network over (grid, manual, message)
// feeding three linear heads (policy, value, next-frame dynamics). Grid
// cells attend over manual lines with single-head scaled dot-product
// attention; the message is mean-pooled and concatenated to the flattened
// grid features; a two-layer tanh MLP produces the representation.
//
// Parameters are partitioned into four groups (rep / pi / value / delta);
// every parameter belongs to exactly one group.

#include <optional>
#include <string>
#include <vector>

#include "ldd/checkpoint.hpp"
#include "ldd/env.hpp"
#include "ldd/tape.hpp"

namespace ldd {

enum class ParamGroup : uint8_t { rep = 0, pi = 1, value = 2, delta = 3 };

struct ModelConfig {
    int grid = 8;
    int n_symbols = kNumSymbols;
    int n_tokens = 0;  // 0 -> vocab size
    int n_actions = kNumActions;
    int d_tok = 64;
    int d_sym = 8;
    int d_key = 16;
    int d_val = 8;
    int hidden = 64;
    int repr = 128;
    int d_dec = 32;  // dynamics decoder hidden width
    int frame_stack = 1;
    std::string distill_norm = "mean_sq";  // or "l2"

    void validate() const;
    // per cell: stacked symbol embeddings, attended text, signed offset (2)
    int cell_feat_dim() const { return frame_stack * d_sym + d_val + 2; }
    // offset-weighted channel sums: where each symbol/text channel's mass
    // sits relative to the agent. They feed the trunk input and also pass
    // straight into the representation so the linear heads can read them.
    int relational_dim() const { return 2 * (frame_stack * d_sym + d_val); }
    // line-to-grid attention: each manual line locates the entity it
    // describes; pooled over lines as sum_l proj(line_l) (x) located_l,
    // which keeps the role <-> location pairing and is invariant to the
    // per-episode line order
    int d_line_proj = 6;
    int line_block_dim() const { return d_line_proj * (d_sym + 2); }
    int trunk_in() const { return grid * grid * cell_feat_dim() + d_tok + relational_dim(); }
    int trunk_out() const { return repr - relational_dim() - line_block_dim(); }
    // dynamics decoder: a linear path over the cell and its 4 neighbors
    // (local motion), and an MLP path over the cell + global rep (motion
    // that needs global context)
    int delta_local_in() const { return 5 * cell_feat_dim(); }
    int delta_mlp_in() const { return cell_feat_dim() + repr; }
    std::vector<std::pair<std::string, std::string>> to_metadata() const;
    static ModelConfig from_metadata(const Checkpoint& ckpt);
    bool operator==(const ModelConfig&) const = default;
};

struct NamedParam {
    std::string name;
    ParamGroup group;
    Tensor value;
};

class Model {
public:
    using ObsWindow = std::vector<const Observation*>;

    Model(ModelConfig cfg, uint64_t init_seed);

    const ModelConfig& config() const { return cfg_; }
    const std::vector<NamedParam>& params() const { return params_; }
    std::vector<NamedParam>& params() { return params_; }

    std::vector<Tensor*> param_tensors(std::optional<std::vector<ParamGroup>> groups = std::nullopt);
    std::vector<const Tensor*> param_tensors_const(std::optional<std::vector<ParamGroup>> groups = std::nullopt) const;
    uint64_t param_hash(std::optional<std::vector<ParamGroup>> groups = std::nullopt) const;
    void copy_group_from(const Model& src, ParamGroup group);

    Checkpoint to_checkpoint(std::vector<std::pair<std::string, std::string>> extra_meta = {}) const;
    static Model from_checkpoint(const Checkpoint& ckpt);

    // --- tape-bound forward ---
    struct Bound {
        std::vector<Var> vars;  // aligned with params()
    };
    Bound bind(Tape& tape, bool trainable = true) const;
    Bound bind_group(Tape& tape, const std::vector<ParamGroup>& trainable_groups) const;

    // rep: the global representation feeding all heads; cell_feat: the
    // per-cell feature map it was pooled from, reused by the dynamics head
    struct Encoded {
        Var rep;        // [repr]
        Var cell_feat;  // [HW x cell_feat_dim()]
    };
    Encoded encode_full(Tape& tape, const Bound& b, const ObsWindow& window) const;
    Var encode(Tape& tape, const Bound& b, const ObsWindow& window) const;
    Var encode(Tape& tape, const Bound& b, const Observation& obs) const;
    Var policy_logits(Tape& tape, const Bound& b, Var rep) const;     // [A] or [B x A]
    Var value_out(Tape& tape, const Bound& b, Var rep) const;         // [1] or [B x 1]
    // Per-slot shared MLP decoder: each egocentric slot is classified from
    // its own features, its four neighbors' features and the global
    // representation, plus a per-slot bias. The hidden layer lets slot
    // offsets multiply against the representation, so globally planned
    // motion (the demonstrator's own move) must be carried by the rep.
    Var dynamics_logits(Tape& tape, const Bound& b, const Encoded& enc, const Observation& ref) const;

    // Grid cells are processed in egocentric order: slot (i, j) holds the
    // absolute cell ((agent_r + i) mod G, (agent_c + j) mod G) of the
    // reference frame, so spatial patterns relative to the agent land on the
    // same trunk weights in every episode. The dynamics head predicts
    // next-frame symbols in the same slot order.
    std::vector<int> egocentric_order(const Observation& ref) const;  // slot -> absolute cell
    std::vector<int> egocentric_targets(const Observation& ref, const Observation& next) const;

    // --- no-grad helpers (scratch tape per call) ---
    Tensor encode_value(const ObsWindow& window) const;
    std::vector<double> policy_probs(const ObsWindow& window) const;
    double state_value(const ObsWindow& window) const;
    std::vector<uint8_t> predict_next_grid(const ObsWindow& window) const;

private:
    struct Idx {
        int tok_emb, sym_emb, wq, wk, wv, wq2, wk2, wl, w1, b1, w2, b2;
        int pi_w, pi_b, v_w, v_b, d_lin, d_w1, d_b1, d_w2, d_b;
    };
    int add_param(const std::string& name, ParamGroup g, Tensor t);

    ModelConfig cfg_;
    std::vector<NamedParam> params_;
    Idx idx_;
};

// Frozen copy of the pretrained representation + dynamics parameters.
// Immutable after construction; policy/value heads are zeroed.
class TeacherSnapshot {
public:
    TeacherSnapshot(const Model& pretrained, std::vector<std::pair<std::string, std::string>> provenance);

    const Model& model() const { return model_; }
    const std::vector<std::pair<std::string, std::string>>& provenance() const { return provenance_; }
    uint64_t param_hash() const;

    void save(const std::filesystem::path& path) const;
    static TeacherSnapshot load(const std::filesystem::path& path);

private:
    TeacherSnapshot() : model_(ModelConfig{}, 0) {}
    Model model_;
    std::vector<std::pair<std::string, std::string>> provenance_;
};

// J_d between student and frozen teacher representations, averaged over the
// batch. "mean_sq": mean over batch and representation coordinates of the
// squared difference. "l2": mean over batch of the L2 norm.
Var distill_loss_from_reps(Tape& tape, const std::vector<Var>& student_reps,
                           const std::vector<Tensor>& teacher_reps, const std::string& norm);
Var distill_loss(Tape& tape, const Model& student, const Model::Bound& bound,
                 const TeacherSnapshot& teacher, const std::vector<Model::ObsWindow>& batch,
                 const std::string& norm = "mean_sq");

}  // namespace ldd
